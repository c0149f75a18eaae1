"""Typed, validated, provenance-logged environment mutations.

Five disruption kinds mirror the operator palette: obstacle placement, goal
relocation, physics alteration, reward inversion, sensory occlusion. Every
accepted disruption must leave the goal reachable (from the start and from
the agent's current cell): the point is to make agents maladapt, not to
make tasks unsolvable. Applications are journalled together with the config
that was in force beforehand, which is what pre-disruption ghost replay
consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .env import (
    Cell,
    GridConfig,
    OcclusionMask,
    grid_config_from_dict,
    grid_config_to_dict,
    is_reachable,
    permutation_from_dict,
    permutation_to_dict,
    validate_config,
)
from .errors import ConfigError, ParseError, StorageError, ValidationError

OUT_OF_BOUNDS = "OUT_OF_BOUNDS"
UNREACHABLE = "UNREACHABLE"
OCCUPIED = "OCCUPIED"
BAD_PARAMS = "BAD_PARAMS"


class DisruptionKind(Enum):
    OBSTACLE_PLACEMENT = "obstacle_placement"
    GOAL_RELOCATION = "goal_relocation"
    PHYSICS_ALTERATION = "physics_alteration"
    REWARD_INVERSION = "reward_inversion"
    SENSORY_OCCLUSION = "sensory_occlusion"


def kind_from_wire(name: str) -> DisruptionKind:
    try:
        return DisruptionKind(name)
    except ValueError:
        raise ValidationError(f"unknown disruption kind {name!r}", reason=BAD_PARAMS) from None


@dataclass(frozen=True)
class Disruption:
    id: str
    kind: DisruptionKind
    params: dict
    author: str
    applied_at_episode: Optional[int] = None
    applied_at_tick: Optional[int] = None


def mark_applied(d: Disruption, episode: int, tick: int) -> Disruption:
    return replace(d, applied_at_episode=episode, applied_at_tick=tick)


def _parse_cell(value, what: str) -> Cell:
    if not (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        raise ValidationError(f"{what} must be an [x, y] integer pair", reason=BAD_PARAMS)
    return (value[0], value[1])


def _parse_cells(value, what: str) -> tuple[Cell, ...]:
    if not isinstance(value, (list, tuple)):
        raise ValidationError(f"{what} must be a list of [x, y] pairs", reason=BAD_PARAMS)
    return tuple(sorted({_parse_cell(v, what) for v in value}))


def params_from_wire(kind: DisruptionKind, raw: dict) -> dict:
    """Normalize kind-specific params; rejects junk with BAD_PARAMS."""
    if not isinstance(raw, dict):
        raise ValidationError("params must be an object", reason=BAD_PARAMS)
    if kind is DisruptionKind.OBSTACLE_PLACEMENT:
        _require_keys(raw, {"cells"})
        cells = _parse_cells(raw["cells"], "cells")
        if not cells:
            raise ValidationError("obstacle_placement needs at least one cell", reason=BAD_PARAMS)
        return {"cells": cells}
    if kind is DisruptionKind.GOAL_RELOCATION:
        _require_keys(raw, {"new_goal"})
        return {"new_goal": _parse_cell(raw["new_goal"], "new_goal")}
    if kind is DisruptionKind.PHYSICS_ALTERATION:
        allowed = {"slip_prob", "action_permutation"}
        if not raw or set(raw) - allowed:
            raise ValidationError(
                f"physics_alteration params must be a non-empty subset of {sorted(allowed)}",
                reason=BAD_PARAMS,
            )
        params: dict = {}
        if "slip_prob" in raw:
            if not isinstance(raw["slip_prob"], (int, float)) or isinstance(raw["slip_prob"], bool):
                raise ValidationError("slip_prob must be a number", reason=BAD_PARAMS)
            params["slip_prob"] = float(raw["slip_prob"])
        if "action_permutation" in raw:
            if not isinstance(raw["action_permutation"], dict):
                raise ValidationError("action_permutation must be an object", reason=BAD_PARAMS)
            try:
                params["action_permutation"] = permutation_from_dict(raw["action_permutation"])
            except ConfigError as exc:
                raise ValidationError(str(exc), reason=BAD_PARAMS) from exc
        return params
    if kind is DisruptionKind.REWARD_INVERSION:
        if raw:
            raise ValidationError("reward_inversion takes no params", reason=BAD_PARAMS)
        return {}
    if kind is DisruptionKind.SENSORY_OCCLUSION:
        _require_keys(raw, {"cells"})
        return {"cells": _parse_cells(raw["cells"], "cells")}
    raise ValidationError(f"unknown kind {kind}", reason=BAD_PARAMS)


def _require_keys(raw: dict, keys: set[str]) -> None:
    if set(raw) != keys:
        raise ValidationError(
            f"params must have exactly the key(s) {sorted(keys)}, got {sorted(raw)}",
            reason=BAD_PARAMS,
        )


def params_to_wire(d: Disruption) -> dict:
    if d.kind in (DisruptionKind.OBSTACLE_PLACEMENT, DisruptionKind.SENSORY_OCCLUSION):
        return {"cells": [list(c) for c in d.params["cells"]]}
    if d.kind is DisruptionKind.GOAL_RELOCATION:
        return {"new_goal": list(d.params["new_goal"])}
    if d.kind is DisruptionKind.PHYSICS_ALTERATION:
        out = {}
        if "slip_prob" in d.params:
            out["slip_prob"] = d.params["slip_prob"]
        if "action_permutation" in d.params:
            out["action_permutation"] = permutation_to_dict(d.params["action_permutation"])
        return out
    return {}


def make_disruption(
    disruption_id: str, kind: DisruptionKind, raw_params: dict, author: str
) -> Disruption:
    return Disruption(
        id=disruption_id,
        kind=kind,
        params=params_from_wire(kind, raw_params),
        author=author,
    )


def _mutated(config: GridConfig, d: Disruption) -> GridConfig:
    """The config that would result from applying ``d`` (no validation)."""
    if d.kind is DisruptionKind.OBSTACLE_PLACEMENT:
        return replace(config, obstacles=config.obstacles | set(d.params["cells"]))
    if d.kind is DisruptionKind.GOAL_RELOCATION:
        return replace(config, goal=d.params["new_goal"])
    if d.kind is DisruptionKind.PHYSICS_ALTERATION:
        return replace(config, physics=replace(config.physics, **d.params))
    if d.kind is DisruptionKind.REWARD_INVERSION:
        return replace(config, reward_sign=-config.reward_sign)
    if d.kind is DisruptionKind.SENSORY_OCCLUSION:
        cells = d.params["cells"]
        return replace(config, occlusion=OcclusionMask(frozenset(cells)) if cells else None)
    raise ValidationError(f"unknown kind {d.kind}", reason=BAD_PARAMS)


def validate(d: Disruption, config: GridConfig, agent: Optional[Cell] = None) -> None:
    """Raise ValidationError with a reason code unless ``d`` is safe to apply.

    Reason codes: OUT_OF_BOUNDS (cells beyond the grid), OCCUPIED (the
    agent's cell would be obstructed, or the goal dropped onto the agent),
    UNREACHABLE (the goal would be cut off from start or agent), BAD_PARAMS
    (anything else that breaks a config invariant).
    """
    if d.kind in (DisruptionKind.OBSTACLE_PLACEMENT, DisruptionKind.SENSORY_OCCLUSION):
        for cell in d.params["cells"]:
            if not config.in_bounds(cell):
                raise ValidationError(f"cell {cell} out of bounds", reason=OUT_OF_BOUNDS)
    if d.kind is DisruptionKind.OBSTACLE_PLACEMENT:
        cells = set(d.params["cells"])
        if agent is not None and agent in cells:
            raise ValidationError(
                f"cannot obstruct the agent's current cell {agent}", reason=OCCUPIED
            )
        if config.start in cells:
            raise ValidationError(f"cannot obstruct start {config.start}", reason=BAD_PARAMS)
        if config.goal in cells:
            raise ValidationError(f"cannot obstruct goal {config.goal}", reason=BAD_PARAMS)
    if d.kind is DisruptionKind.GOAL_RELOCATION:
        new_goal = d.params["new_goal"]
        if not config.in_bounds(new_goal):
            raise ValidationError(f"goal {new_goal} out of bounds", reason=OUT_OF_BOUNDS)
        if new_goal in config.obstacles:
            raise ValidationError(f"goal {new_goal} is an obstacle", reason=BAD_PARAMS)
        if new_goal == config.start:
            raise ValidationError("goal must differ from start", reason=BAD_PARAMS)
        if agent is not None and new_goal == agent:
            raise ValidationError(
                f"cannot drop the goal onto the agent's current cell {agent}", reason=OCCUPIED
            )
    if d.kind is DisruptionKind.PHYSICS_ALTERATION and "slip_prob" in d.params:
        if not 0.0 <= d.params["slip_prob"] <= 1.0:
            raise ValidationError(
                f"slip_prob must be in [0, 1], got {d.params['slip_prob']}", reason=BAD_PARAMS
            )

    candidate = _mutated(config, d)
    if not is_reachable(candidate, candidate.start, candidate.goal):
        raise ValidationError("goal would be unreachable from start", reason=UNREACHABLE)
    if agent is not None and agent != candidate.goal:
        if not is_reachable(candidate, agent, candidate.goal):
            raise ValidationError(
                f"goal would be unreachable from the agent at {agent}", reason=UNREACHABLE
            )
    try:
        validate_config(candidate)
    except ConfigError as exc:
        raise ValidationError(str(exc), reason=BAD_PARAMS) from exc


def apply_disruption(
    config: GridConfig, d: Disruption, agent: Optional[Cell] = None
) -> GridConfig:
    """Return a new config differing only in the fields governed by d.kind."""
    validate(d, config, agent)
    return _mutated(config, d)


@dataclass(frozen=True)
class JournalEntry:
    disruption: Disruption
    config_before: GridConfig


class DisruptionJournal:
    """Append-only provenance log of applied disruptions.

    When constructed with a path, each entry is also appended to a
    ``disruptions.jsonl`` file as it is logged.
    """

    def __init__(self, path: str | Path | None = None):
        self._entries: list[JournalEntry] = []
        self._path = Path(path) if path is not None else None

    @property
    def entries(self) -> tuple[JournalEntry, ...]:
        return tuple(self._entries)

    def new_id(self) -> str:
        return f"d{len(self._entries) + 1:04d}"

    def active_ids(self) -> tuple[str, ...]:
        return tuple(e.disruption.id for e in self._entries)

    def log(self, d: Disruption, config_before: GridConfig) -> JournalEntry:
        if d.applied_at_episode is None or d.applied_at_tick is None:
            raise ValidationError(f"disruption {d.id} logged before being applied")
        if any(e.disruption.id == d.id for e in self._entries):
            raise ValidationError(f"duplicate disruption id {d.id!r}")
        entry = JournalEntry(disruption=d, config_before=config_before)
        self._entries.append(entry)
        if self._path is not None:
            try:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with open(self._path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(journal_entry_to_dict(entry), sort_keys=True) + "\n")
            except OSError as exc:
                raise StorageError(f"cannot append to {self._path}: {exc}") from exc
        return entry


def log_disruption(
    journal: DisruptionJournal, d: Disruption, config_before: GridConfig
) -> JournalEntry:
    return journal.log(d, config_before)


def disruption_to_dict(d: Disruption) -> dict:
    return {
        "id": d.id,
        "kind": d.kind.value,
        "params": params_to_wire(d),
        "author": d.author,
        "applied_at_episode": d.applied_at_episode,
        "applied_at_tick": d.applied_at_tick,
    }


def disruption_from_dict(data: dict) -> Disruption:
    kind = kind_from_wire(data["kind"])
    d = make_disruption(data["id"], kind, data.get("params", {}), data.get("author", "unknown"))
    if data.get("applied_at_episode") is not None:
        d = mark_applied(d, int(data["applied_at_episode"]), int(data["applied_at_tick"]))
    return d


def journal_entry_to_dict(entry: JournalEntry) -> dict:
    return {
        "disruption": disruption_to_dict(entry.disruption),
        "config_before": grid_config_to_dict(entry.config_before),
    }


def load_journal(path: str | Path) -> DisruptionJournal:
    path = Path(path)
    journal = DisruptionJournal()
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            entry = JournalEntry(
                disruption=disruption_from_dict(data["disruption"]),
                config_before=grid_config_from_dict(data["config_before"], "config_before"),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, ConfigError) as exc:
            raise ParseError(f"{path.name}:{lineno}: bad journal entry: {exc}", line=lineno) from exc
        journal._entries.append(entry)
    return journal


@dataclass(frozen=True)
class ScheduledDisruption:
    """A scripted disruption: applied at the given episode boundary.

    ``params`` stays in wire form (plain JSON-shaped dict); it is normalized
    when the disruption is actually built at application time.
    """

    episode: int
    kind: DisruptionKind
    params: dict
    author: str = "script"

    def to_dict(self) -> dict:
        return {
            "episode": self.episode,
            "kind": self.kind.value,
            "params": self.params,
            "author": self.author,
        }


def scheduled_disruptions_from_list(
    raw: Sequence[dict], where: str = "experiment.disruption_schedule"
) -> tuple[ScheduledDisruption, ...]:
    if not isinstance(raw, (list, tuple)):
        raise ConfigError(f"{where} must be a list")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError(f"{where}[{i}] must be an object")
        unknown = set(item) - {"episode", "kind", "params", "author"}
        if unknown:
            raise ConfigError(f"unknown key {where}[{i}].{sorted(unknown)[0]}")
        try:
            kind = kind_from_wire(item["kind"])
            params = item.get("params", {})
            params_from_wire(kind, params)  # fail fast on junk, keep wire form
        except (KeyError, ValidationError) as exc:
            raise ConfigError(f"{where}[{i}]: {exc}") from exc
        out.append(
            ScheduledDisruption(
                episode=int(item["episode"]),
                kind=kind,
                params=params,
                author=str(item.get("author", "script")),
            )
        )
    out.sort(key=lambda entry: entry.episode)
    return tuple(out)
