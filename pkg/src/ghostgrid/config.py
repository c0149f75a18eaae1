"""Run configuration: the versioned JSON config file schema.

One file configures everything: environment, agent, ghost layers, taxonomy
thresholds, dual-loop conditioning, experiment protocol, server and paths.
Unknown keys are rejected at every level so threshold typos fail loudly,
and parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .agent import Hyperparams
from .disruptions import ScheduledDisruption, scheduled_disruptions_from_list
from .dualloop import ExperimentConfig, PenaltyConfig
from .env import GridConfig, grid_config_from_dict, grid_config_to_dict
from .errors import ConfigError, StorageError
from .ghosts import LayerConfig
from .taxonomy import Thresholds

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AgentConfig:
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    snapshot_interval: int = 10


@dataclass(frozen=True)
class ServerConfig:
    port: int = 7777
    tick_rate_hz: float = 10.0
    seed: int = 0
    auto_label: bool = False
    session_id: str = "session-1"


@dataclass(frozen=True)
class PathsConfig:
    data_dir: str = "data"


@dataclass(frozen=True)
class ExperimentSection:
    seeds: tuple[int, ...] = tuple(range(20))
    episodes: int = 600
    criterion_fraction: float = 0.9
    disruption_schedule: tuple[ScheduledDisruption, ...] = ()
    heldout_disruption: Optional[ScheduledDisruption] = None


@dataclass(frozen=True)
class RunConfig:
    environment: GridConfig = field(default_factory=GridConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    layers: LayerConfig = field(default_factory=LayerConfig)
    taxonomy: Thresholds = field(default_factory=Thresholds)
    dual_loop: PenaltyConfig = field(default_factory=PenaltyConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    server: ServerConfig = field(default_factory=ServerConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


_TOP_KEYS = {
    "schema_version", "environment", "agent", "layers", "taxonomy",
    "dual_loop", "experiment", "server", "paths",
}


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key {where}.{sorted(unknown)[0]}")


def _agent_from_dict(data: dict) -> AgentConfig:
    keys = {
        "alpha", "gamma", "epsilon_start", "epsilon_end",
        "epsilon_decay_episodes", "snapshot_interval",
    }
    _check_keys(data, keys, "agent")
    base = Hyperparams()
    hp = Hyperparams(
        alpha=float(data.get("alpha", base.alpha)),
        gamma=float(data.get("gamma", base.gamma)),
        epsilon_start=float(data.get("epsilon_start", base.epsilon_start)),
        epsilon_end=float(data.get("epsilon_end", base.epsilon_end)),
        epsilon_decay_episodes=int(
            data.get("epsilon_decay_episodes", base.epsilon_decay_episodes)
        ),
    )
    interval = int(data.get("snapshot_interval", 10))
    if interval < 1:
        raise ConfigError(f"agent.snapshot_interval must be >= 1, got {interval}")
    return AgentConfig(hyperparams=hp, snapshot_interval=interval)


def _agent_to_dict(agent: AgentConfig) -> dict:
    hp = agent.hyperparams
    return {
        "alpha": hp.alpha,
        "gamma": hp.gamma,
        "epsilon_start": hp.epsilon_start,
        "epsilon_end": hp.epsilon_end,
        "epsilon_decay_episodes": hp.epsilon_decay_episodes,
        "snapshot_interval": agent.snapshot_interval,
    }


def _server_from_dict(data: dict) -> ServerConfig:
    keys = {"port", "tick_rate_hz", "seed", "auto_label", "session_id"}
    _check_keys(data, keys, "server")
    base = ServerConfig()
    cfg = ServerConfig(
        port=int(data.get("port", base.port)),
        tick_rate_hz=float(data.get("tick_rate_hz", base.tick_rate_hz)),
        seed=int(data.get("seed", base.seed)),
        auto_label=bool(data.get("auto_label", base.auto_label)),
        session_id=str(data.get("session_id", base.session_id)),
    )
    if not 1.0 <= cfg.tick_rate_hz <= 120.0:
        raise ConfigError(f"server.tick_rate_hz must be in [1, 120], got {cfg.tick_rate_hz}")
    return cfg


def _experiment_from_dict(data: dict) -> ExperimentSection:
    keys = {
        "seeds", "episodes", "criterion_fraction",
        "disruption_schedule", "heldout_disruption",
    }
    _check_keys(data, keys, "experiment")
    base = ExperimentSection()
    seeds = data.get("seeds", list(base.seeds))
    if not isinstance(seeds, list) or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in seeds
    ):
        raise ConfigError("experiment.seeds must be a list of integers")
    schedule = scheduled_disruptions_from_list(data.get("disruption_schedule", []))
    heldout = None
    if data.get("heldout_disruption") is not None:
        raw = dict(data["heldout_disruption"])
        raw.setdefault("episode", 0)  # applied post-training; episode is moot
        (heldout,) = scheduled_disruptions_from_list([raw], "experiment.heldout_disruption")
    return ExperimentSection(
        seeds=tuple(seeds),
        episodes=int(data.get("episodes", base.episodes)),
        criterion_fraction=float(data.get("criterion_fraction", base.criterion_fraction)),
        disruption_schedule=schedule,
        heldout_disruption=heldout,
    )


def _experiment_to_dict(exp: ExperimentSection) -> dict:
    return {
        "seeds": list(exp.seeds),
        "episodes": exp.episodes,
        "criterion_fraction": exp.criterion_fraction,
        "disruption_schedule": [sd.to_dict() for sd in exp.disruption_schedule],
        "heldout_disruption": (
            exp.heldout_disruption.to_dict() if exp.heldout_disruption else None
        ),
    }


def parse_run_config(data: dict) -> RunConfig:
    _check_keys(data, _TOP_KEYS, "config")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    return RunConfig(
        environment=grid_config_from_dict(data.get("environment", grid_config_to_dict(GridConfig()))),
        agent=_agent_from_dict(data.get("agent", {})),
        layers=LayerConfig.from_dict(data.get("layers", {})),
        taxonomy=Thresholds.from_dict(data.get("taxonomy", {})),
        dual_loop=PenaltyConfig.from_dict(data.get("dual_loop", {})),
        experiment=_experiment_from_dict(data.get("experiment", {})),
        server=_server_from_dict(data.get("server", {})),
        paths=_paths_from_dict(data.get("paths", {})),
    )


def _paths_from_dict(data: dict) -> PathsConfig:
    _check_keys(data, {"data_dir"}, "paths")
    return PathsConfig(data_dir=str(data.get("data_dir", "data")))


def run_config_to_dict(rc: RunConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "environment": grid_config_to_dict(rc.environment),
        "agent": _agent_to_dict(rc.agent),
        "layers": rc.layers.to_dict(),
        "taxonomy": rc.taxonomy.to_dict(),
        "dual_loop": rc.dual_loop.to_dict(),
        "experiment": _experiment_to_dict(rc.experiment),
        "server": {
            "port": rc.server.port,
            "tick_rate_hz": rc.server.tick_rate_hz,
            "seed": rc.server.seed,
            "auto_label": rc.server.auto_label,
            "session_id": rc.server.session_id,
        },
        "paths": {"data_dir": rc.paths.data_dir},
    }


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path.name}: invalid JSON: {exc}") from exc
    return parse_run_config(data)


def save_run_config(rc: RunConfig, path: str | Path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(run_config_to_dict(rc), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write config {path}: {exc}") from exc


def experiment_config_from_run(rc: RunConfig) -> ExperimentConfig:
    return ExperimentConfig(
        environment=rc.environment,
        seeds=rc.experiment.seeds,
        episodes=rc.experiment.episodes,
        hyperparams=rc.agent.hyperparams,
        snapshot_interval=rc.agent.snapshot_interval,
        criterion_fraction=rc.experiment.criterion_fraction,
        schedule=rc.experiment.disruption_schedule,
        heldout=rc.experiment.heldout_disruption,
        penalty=rc.dual_loop,
        thresholds=rc.taxonomy,
    )


def with_port(rc: RunConfig, port: int) -> RunConfig:
    return replace(rc, server=replace(rc.server, port=port))
