"""Ghost database and visualization layers.

Records every episode trajectory and policy snapshot, spawns the layered
ghost views (Recent / Historical / PreDisruption) with age-mapped
transparency, serves failure retrieval for the dual learning loop, and
persists the whole store as line-oriented files.
"""

from __future__ import annotations

import csv
import json
import random
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, NamedTuple, Optional, Sequence

from .agent import PolicySnapshot, greedy_action
from .env import (
    ACTIONS,
    Action,
    Cell,
    GridConfig,
    State,
    Transition,
    action_from_wire,
    step,
    validate_config,
)
from .errors import ConfigError, ParseError, StateError, StorageError, ValidationError
from .taxonomy import FailureMode, failure_mode_from_wire

if TYPE_CHECKING:  # pragma: no cover
    from .disruptions import DisruptionJournal


@dataclass
class Trajectory:
    """One episode's ordered transition record."""

    id: Optional[str]
    episode_index: int
    transitions: tuple[Transition, ...]
    outcome: str  # "success" | "timeout"
    total_return: float
    snapshot_id: Optional[str] = None
    labels: list[tuple[str, FailureMode]] = field(default_factory=list)
    disruptions_active: tuple[str, ...] = ()

    def visited_cells(self) -> set[Cell]:
        cells = {tr.s.agent for tr in self.transitions}
        cells.add(self.transitions[-1].s_next.agent)
        return cells

    def path(self) -> list[Cell]:
        cells = [tr.s.agent for tr in self.transitions]
        cells.append(self.transitions[-1].s_next.agent)
        return cells

    def has_failure_label(self) -> bool:
        return any(mode is not FailureMode.NONE for _, mode in self.labels)


def make_trajectory(
    episode_index: int,
    transitions: Sequence[Transition],
    snapshot_id: Optional[str] = None,
    disruptions_active: Sequence[str] = (),
) -> Trajectory:
    transitions = tuple(transitions)
    validate_chain(transitions)
    outcome = "success" if transitions[-1].done_reason == "goal" else "timeout"
    return Trajectory(
        id=None,
        episode_index=episode_index,
        transitions=transitions,
        outcome=outcome,
        total_return=sum(tr.r for tr in transitions),
        snapshot_id=snapshot_id,
        disruptions_active=tuple(disruptions_active),
    )


def validate_chain(transitions: Sequence[Transition]) -> None:
    if not transitions:
        raise ValidationError("trajectory has no transitions")
    for k in range(len(transitions) - 1):
        if transitions[k].s_next != transitions[k + 1].s:
            raise ValidationError(
                f"broken transition chain at step {k}: "
                f"{transitions[k].s_next} != {transitions[k + 1].s}"
            )


class GhostKind(Enum):
    RECENT = "recent"
    HISTORICAL = "historical"
    PRE_DISRUPTION = "pre_disruption"


GHOST_COLORS = {
    GhostKind.RECENT: "red",
    GhostKind.HISTORICAL: "grey",
    GhostKind.PRE_DISRUPTION: "green",
}


@dataclass(frozen=True)
class Ghost:
    id: str
    kind: GhostKind
    source_snapshot_id: str
    trajectory: Trajectory
    alpha: float
    color_tag: str


@dataclass(frozen=True)
class LayerConfig:
    k_recent: int = 5
    k_historical: int = 50
    alpha_min: float = 0.15
    max_age: int = 100

    def to_dict(self) -> dict:
        return {
            "k_recent": self.k_recent,
            "k_historical": self.k_historical,
            "alpha_min": self.alpha_min,
            "max_age": self.max_age,
        }

    @classmethod
    def from_dict(cls, data: dict, where: str = "layers") -> "LayerConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"{where} must be an object")
        known = cls().to_dict()
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown key {where}.{sorted(unknown)[0]}")
        merged = {**known, **data}
        return cls(
            k_recent=int(merged["k_recent"]),
            k_historical=int(merged["k_historical"]),
            alpha_min=float(merged["alpha_min"]),
            max_age=int(merged["max_age"]),
        )


class LabelRecord(NamedTuple):
    trajectory_id: str
    rater_id: str
    failure_mode: FailureMode
    unix_ts: float


class GhostDatabase:
    """Append-only store of trajectories, snapshots and labels.

    A state-occupancy index maps each visited cell to the trajectories that
    pass through it; a failure-occurrence index maps each cell to the
    (episode, action) pairs taken there by labeled-failure trajectories,
    which is what the dual loop's conditioning consumes.
    """

    def __init__(self) -> None:
        self._trajectories: list[Trajectory] = []
        self._by_id: dict[str, Trajectory] = {}
        self._snapshots: list[PolicySnapshot] = []
        self._snap_by_id: dict[str, PolicySnapshot] = {}
        self._labels: list[LabelRecord] = []
        self._visited_index: dict[Cell, list[str]] = defaultdict(list)
        self._failure_ids: set[str] = set()
        # cell -> action -> [[episode, occurrence count], ...]; one entry per
        # contributing trajectory since all its steps share an episode index.
        self._failure_occ: dict[Cell, dict[Action, list[list[int]]]] = {}
        self._weight_memo: dict = {}

    # -- trajectories ------------------------------------------------------

    @property
    def trajectories(self) -> tuple[Trajectory, ...]:
        return tuple(self._trajectories)

    def get(self, trajectory_id: str) -> Trajectory:
        try:
            return self._by_id[trajectory_id]
        except KeyError:
            raise StateError(f"unknown trajectory id {trajectory_id!r}") from None

    def has_trajectory(self, trajectory_id: str) -> bool:
        return trajectory_id in self._by_id

    def record_episode(self, t: Trajectory) -> str:
        validate_chain(t.transitions)
        expected = sum(tr.r for tr in t.transitions)
        if abs(t.total_return - expected) > 1e-9:
            raise ValidationError(
                f"total_return {t.total_return} != sum of rewards {expected}"
            )
        new_id = t.id if t.id is not None else self._next_trajectory_id()
        if new_id in self._by_id:
            raise ValidationError(f"duplicate trajectory id {new_id!r}")
        stored = replace(t, id=new_id, labels=list(t.labels))
        self._trajectories.append(stored)
        self._by_id[new_id] = stored
        for cell in sorted(stored.visited_cells()):
            self._visited_index[cell].append(new_id)
        if stored.has_failure_label():
            self._register_failure(stored)
        return new_id

    def _next_trajectory_id(self) -> str:
        return f"t{len(self._trajectories) + 1:06d}"

    # -- snapshots ---------------------------------------------------------

    @property
    def snapshots(self) -> tuple[PolicySnapshot, ...]:
        return tuple(self._snapshots)

    def get_snapshot(self, snapshot_id: str) -> PolicySnapshot:
        try:
            return self._snap_by_id[snapshot_id]
        except KeyError:
            raise StateError(f"unknown snapshot id {snapshot_id!r}") from None

    def new_snapshot_id(self) -> str:
        return f"s{len(self._snapshots) + 1:04d}"

    def add_snapshot(self, snap: PolicySnapshot) -> str:
        if snap.id in self._snap_by_id:
            raise ValidationError(f"duplicate snapshot id {snap.id!r}")
        self._snapshots.append(snap)
        self._snap_by_id[snap.id] = snap
        return snap.id

    # -- labels ------------------------------------------------------------

    @property
    def labels(self) -> tuple[LabelRecord, ...]:
        return tuple(self._labels)

    def add_label(
        self,
        trajectory_id: str,
        rater_id: str,
        mode: FailureMode,
        unix_ts: float = 0.0,
    ) -> LabelRecord:
        t = self.get(trajectory_id)
        record = LabelRecord(trajectory_id, rater_id, mode, unix_ts)
        self._labels.append(record)
        t.labels.append((rater_id, mode))
        if mode is not FailureMode.NONE and trajectory_id not in self._failure_ids:
            self._register_failure(t)
        return record

    def _register_failure(self, t: Trajectory) -> None:
        self._failure_ids.add(t.id)
        self._weight_memo.clear()
        for tr in t.transitions:
            by_action = self._failure_occ.setdefault(tr.s.agent, {})
            entries = by_action.setdefault(tr.a, [])
            if entries and entries[-1][0] == t.episode_index:
                entries[-1][1] += 1
            else:
                entries.append([t.episode_index, 1])

    def failure_occurrences(self, cell: Cell) -> list[tuple[int, Action]]:
        """(episode_index, action) pairs taken at ``cell`` by labeled failures."""
        out = []
        for action, entries in self._failure_occ.get(cell, {}).items():
            for episode, count in entries:
                out.extend([(episode, action)] * count)
        return out

    def failure_action_weights(self, cell: Cell, episode: int, half_life: float):
        """(masked action set, recency weight per action) at a cell, or None.

        Weight of an action is the sum over its failure occurrences of
        2^(-age/half_life). Memoized per (cell, episode): the failure set
        only changes at episode boundaries, while the agent revisits cells
        many times within one episode.
        """
        by_action = self._failure_occ.get(cell)
        if not by_action:
            return None
        key = (cell, episode, half_life)
        got = self._weight_memo.get(key)
        if got is None:
            weights = [0.0] * len(ACTIONS)
            for action, entries in by_action.items():
                weights[action.value] = sum(
                    count * 2.0 ** (-max(0, episode - e) / half_life)
                    for e, count in entries
                )
            got = (frozenset(by_action), weights)
            self._weight_memo[key] = got
        return got

    def trajectories_visiting(self, cell: Cell) -> Sequence[str]:
        return self._visited_index.get(cell, ())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GhostDatabase):
            return NotImplemented
        return (
            self._trajectories == other._trajectories
            and self._snapshots == other._snapshots
            and self._labels == other._labels
        )


# ---------------------------------------------------------------------------
# Replay and layer spawning
# ---------------------------------------------------------------------------

_REPLAY_RNG = random.Random(0)  # never drawn from: replays run slip-free


def greedy_rollout(
    snapshot,
    config: GridConfig,
    start: State,
    max_steps: Optional[int] = None,
) -> Trajectory:
    """Execute a policy greedily from ``start`` in a slip-free clone.

    ``snapshot`` is anything with a ``values(key)`` lookup: a PolicySnapshot
    for ghost replay, or a live QTable for evaluation rollouts. Replay
    begins a fresh episode (tick 0) at start.agent; ghosts depict the
    policy, not stochastic noise, so slip is forced off.
    """
    if max_steps is None:
        max_steps = config.max_steps
    if max_steps < 1:
        raise ConfigError(f"rollout max_steps must be >= 1, got {max_steps}")
    rollout_config = replace(
        config,
        physics=replace(config.physics, slip_prob=0.0),
        max_steps=max_steps,
    )
    validate_config(rollout_config)
    if not rollout_config.passable(start.agent):
        raise ConfigError(f"rollout start cell {start.agent} not passable")
    occluded = rollout_config.goal_direction_occluded()

    state = State(agent=start.agent, tick=0, episode=start.episode)
    transitions: list[Transition] = []
    while True:
        action = greedy_action(snapshot.values((state.agent, occluded)))
        tr = step(rollout_config, state, action, _REPLAY_RNG)
        transitions.append(tr)
        state = tr.s_next
        if tr.done:
            break
    return make_trajectory(
        start.episode, transitions, snapshot_id=getattr(snapshot, "id", None)
    )


def alpha_for_age(age: int, alpha_min: float = 0.15, max_age: int = 100) -> float:
    """Linear transparency decay with a floor; the live agent is alpha 1.0."""
    if age < 0:
        raise ValidationError(f"ghost age must be >= 0, got {age}")
    return max(alpha_min, 1.0 - age / max_age)


def _nearest_snapshot(
    snaps: Sequence[PolicySnapshot], target: int
) -> Optional[PolicySnapshot]:
    best = None
    best_key = None
    for seq, snap in enumerate(snaps):
        key = (abs(snap.episode_index - target), -snap.episode_index, -seq)
        if best_key is None or key < best_key:
            best, best_key = snap, key
    return best


def spawn_ghosts(
    db: GhostDatabase,
    config: GridConfig,
    current: State,
    layers: LayerConfig = LayerConfig(),
    journal: "DisruptionJournal | None" = None,
) -> list[Ghost]:
    """Spawn up to three ghost layers for the current episode.

    Recent and Historical replay under the live config from the current
    episode's start; the PreDisruption layer replays the last snapshot
    captured before the most recent disruption under the config that was in
    force back then. Layers without a qualifying snapshot are omitted.
    """
    ghosts: list[Ghost] = []
    candidates = [s for s in db.snapshots if s.episode_index < current.episode]
    start = State(agent=config.start, tick=0, episode=current.episode)

    recent = _nearest_snapshot(candidates, current.episode - layers.k_recent)
    if recent is not None:
        alpha_r = alpha_for_age(
            current.episode - recent.episode_index, layers.alpha_min, layers.max_age
        )
        ghosts.append(
            Ghost(
                id=f"ghost-e{current.episode}-recent",
                kind=GhostKind.RECENT,
                source_snapshot_id=recent.id,
                trajectory=greedy_rollout(recent, config, start),
                alpha=alpha_r,
                color_tag=GHOST_COLORS[GhostKind.RECENT],
            )
        )
        older = [s for s in candidates if s.episode_index < recent.episode_index]
        historical = _nearest_snapshot(older, current.episode - layers.k_historical)
        if historical is not None:
            alpha_h = alpha_for_age(
                current.episode - historical.episode_index,
                layers.alpha_min,
                layers.max_age,
            )
            # Strict layer ordering: omit Historical when the clamp ties it
            # with the Recent layer.
            if alpha_h < alpha_r:
                ghosts.append(
                    Ghost(
                        id=f"ghost-e{current.episode}-historical",
                        kind=GhostKind.HISTORICAL,
                        source_snapshot_id=historical.id,
                        trajectory=greedy_rollout(historical, config, start),
                        alpha=alpha_h,
                        color_tag=GHOST_COLORS[GhostKind.HISTORICAL],
                    )
                )

    if journal is not None and journal.entries:
        entry = journal.entries[-1]
        boundary = entry.disruption.applied_at_episode
        pre_snaps = [
            s
            for s in db.snapshots
            if s.captured_pre_disruption and s.episode_index <= boundary
        ]
        if pre_snaps:
            source = pre_snaps[-1]  # latest in registration order
            pre_config = entry.config_before
            pre_start = State(agent=pre_config.start, tick=0, episode=current.episode)
            age = max(0, current.episode - source.episode_index)
            ghosts.append(
                Ghost(
                    id=f"ghost-e{current.episode}-pre_disruption",
                    kind=GhostKind.PRE_DISRUPTION,
                    source_snapshot_id=source.id,
                    trajectory=greedy_rollout(source, pre_config, pre_start),
                    alpha=alpha_for_age(age, layers.alpha_min, layers.max_age),
                    color_tag=GHOST_COLORS[GhostKind.PRE_DISRUPTION],
                )
            )
    return ghosts


# ---------------------------------------------------------------------------
# Failure retrieval (the dual loop's read path)
# ---------------------------------------------------------------------------


def retrieve_ghosts(db: GhostDatabase, s: State, radius: int = 0) -> list[Trajectory]:
    """Labeled-failure trajectories visiting within Manhattan ``radius`` of
    the agent, newest first."""
    ax, ay = s.agent
    ids: set[str] = set()
    for dx in range(-radius, radius + 1):
        span = radius - abs(dx)
        for dy in range(-span, span + 1):
            for tid in db.trajectories_visiting((ax + dx, ay + dy)):
                ids.add(tid)
    hits = [db.get(tid) for tid in ids]
    failures = [t for t in hits if t.has_failure_label()]
    failures.sort(key=lambda t: t.id, reverse=True)  # ids are record-ordered
    return failures


def get_failure_actions(trajectories: Iterable[Trajectory], s: State) -> set[Action]:
    """Union of actions these trajectories took at the agent's exact cell."""
    actions: set[Action] = set()
    for t in trajectories:
        for tr in t.transitions:
            if tr.s.agent == s.agent:
                actions.add(tr.a)
    return actions


# ---------------------------------------------------------------------------
# Persistence: ghosts.jsonl / snapshots.jsonl / labels.csv
# ---------------------------------------------------------------------------

GHOSTS_FILE = "ghosts.jsonl"
SNAPSHOTS_FILE = "snapshots.jsonl"
LABELS_FILE = "labels.csv"
LABELS_HEADER = ["trajectory_id", "rater_id", "failure_mode", "unix_ts"]


def transition_to_dict(tr: Transition) -> dict:
    return {
        "s": [tr.s.agent[0], tr.s.agent[1], tr.s.tick, tr.s.episode],
        "a": tr.a.wire,
        "r": tr.r,
        "s_next": [tr.s_next.agent[0], tr.s_next.agent[1], tr.s_next.tick, tr.s_next.episode],
        "done": tr.done,
        "done_reason": tr.done_reason,
    }


def _state_from_list(raw) -> State:
    x, y, tick, episode = raw
    return State(agent=(int(x), int(y)), tick=int(tick), episode=int(episode))


def transition_from_dict(data: dict) -> Transition:
    return Transition(
        s=_state_from_list(data["s"]),
        a=action_from_wire(data["a"]),
        r=float(data["r"]),
        s_next=_state_from_list(data["s_next"]),
        done=bool(data["done"]),
        done_reason=str(data["done_reason"]),
    )


def trajectory_to_dict(t: Trajectory) -> dict:
    return {
        "id": t.id,
        "episode_index": t.episode_index,
        "outcome": t.outcome,
        "total_return": t.total_return,
        "snapshot_id": t.snapshot_id,
        "disruptions_active": list(t.disruptions_active),
        "transitions": [transition_to_dict(tr) for tr in t.transitions],
    }


def trajectory_from_dict(data: dict) -> Trajectory:
    return Trajectory(
        id=data["id"],
        episode_index=int(data["episode_index"]),
        transitions=tuple(transition_from_dict(d) for d in data["transitions"]),
        outcome=str(data["outcome"]),
        total_return=float(data["total_return"]),
        snapshot_id=data.get("snapshot_id"),
        disruptions_active=tuple(data.get("disruptions_active", [])),
    )


def snapshot_to_dict(snap: PolicySnapshot) -> dict:
    entries = [
        [key[0][0], key[0][1], key[1], list(values)]
        for key, values in sorted(snap.qtable.items())
    ]
    return {
        "id": snap.id,
        "episode_index": snap.episode_index,
        "captured_pre_disruption": snap.captured_pre_disruption,
        "disruption_id_before": snap.disruption_id_before,
        "qtable": entries,
    }


def snapshot_from_dict(data: dict) -> PolicySnapshot:
    qtable = {
        ((int(x), int(y)), bool(occ)): tuple(float(v) for v in values)
        for x, y, occ, values in data["qtable"]
    }
    return PolicySnapshot(
        id=data["id"],
        episode_index=int(data["episode_index"]),
        qtable=qtable,
        captured_pre_disruption=bool(data["captured_pre_disruption"]),
        disruption_id_before=data.get("disruption_id_before"),
    )


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def persist(db: GhostDatabase, directory: str | Path) -> Path:
    """Write the store to ``directory``; returns the directory path."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / GHOSTS_FILE, "w", encoding="utf-8") as f:
            for t in db.trajectories:
                f.write(dumps_line(trajectory_to_dict(t)) + "\n")
        with open(directory / SNAPSHOTS_FILE, "w", encoding="utf-8") as f:
            for snap in db.snapshots:
                f.write(dumps_line(snapshot_to_dict(snap)) + "\n")
        with open(directory / LABELS_FILE, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(LABELS_HEADER)
            for rec in db.labels:
                writer.writerow(
                    [rec.trajectory_id, rec.rater_id, rec.failure_mode.value, rec.unix_ts]
                )
    except OSError as exc:
        raise StorageError(f"cannot write ghost store to {directory}: {exc}") from exc
    return directory


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
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
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path.name}:{lineno}: invalid JSON: {exc.msg}", line=lineno) from exc
        if not isinstance(data, dict):
            raise ParseError(f"{path.name}:{lineno}: expected an object", line=lineno)
        yield lineno, data


def read_labels_csv(path: str | Path) -> list[LabelRecord]:
    """Parse a labels.csv file; E_PARSE names the offending line."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != LABELS_HEADER:
        raise ParseError(
            f"{path.name}:1: expected header {','.join(LABELS_HEADER)}", line=1
        )
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            tid, rater, mode, ts = row
            records.append(LabelRecord(tid, rater, failure_mode_from_wire(mode), float(ts)))
        except (ValueError, ValidationError) as exc:
            raise ParseError(f"{path.name}:{lineno}: bad label row: {exc}", line=lineno) from exc
    return records


def load(directory: str | Path) -> GhostDatabase:
    """Rebuild a GhostDatabase (including indexes) from ``persist`` output."""
    directory = Path(directory)
    db = GhostDatabase()
    for lineno, data in _read_jsonl(directory / SNAPSHOTS_FILE):
        try:
            db.add_snapshot(snapshot_from_dict(data))
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise ParseError(
                f"{SNAPSHOTS_FILE}:{lineno}: bad snapshot record: {exc}", line=lineno
            ) from exc
    for lineno, data in _read_jsonl(directory / GHOSTS_FILE):
        try:
            db.record_episode(trajectory_from_dict(data))
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise ParseError(
                f"{GHOSTS_FILE}:{lineno}: bad trajectory record: {exc}", line=lineno
            ) from exc
    for rec in read_labels_csv(directory / LABELS_FILE):
        try:
            db.add_label(rec.trajectory_id, rec.rater_id, rec.failure_mode, rec.unix_ts)
        except StateError as exc:
            raise ParseError(f"{LABELS_FILE}: {exc}") from exc
    return db
