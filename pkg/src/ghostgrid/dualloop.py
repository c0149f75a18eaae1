"""Ghost-conditioned action selection and the comparative evaluation harness.

The conditioning reads failure evidence out of the ghost database: actions
that labeled failure trajectories took at the agent's current cell are
either masked outright (hard_mask) or penalized by a recency-weighted value
discount (soft_penalty). Exploration applies before conditioning and is
never restricted.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from statistics import median
from typing import Optional, Sequence

from .agent import Hyperparams, QTable, greedy_action
from .disruptions import ScheduledDisruption, make_disruption, apply_disruption
from .env import ACTIONS, Action, GridConfig, State, optimal_return, validate_config
from .errors import ConfigError
from .ghosts import GhostDatabase, greedy_rollout
from .taxonomy import Thresholds

HARD_MASK = "hard_mask"
SOFT_PENALTY = "soft_penalty"


@dataclass(frozen=True)
class PenaltyConfig:
    mode: str = SOFT_PENALTY
    lam: float = 1.0
    radius: int = 0
    recency_half_life: float = 50.0

    def __post_init__(self) -> None:
        if self.mode not in (HARD_MASK, SOFT_PENALTY):
            raise ConfigError(f"penalty mode must be hard_mask or soft_penalty, got {self.mode!r}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.radius < 0:
            raise ConfigError(f"radius must be >= 0, got {self.radius}")
        if self.recency_half_life <= 0:
            raise ConfigError(f"recency_half_life must be > 0, got {self.recency_half_life}")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "lambda": self.lam,
            "radius": self.radius,
            "recency_half_life": self.recency_half_life,
        }

    @classmethod
    def from_dict(cls, data: dict, where: str = "dual_loop") -> "PenaltyConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"{where} must be an object")
        unknown = set(data) - {"mode", "lambda", "radius", "recency_half_life"}
        if unknown:
            raise ConfigError(f"unknown key {where}.{sorted(unknown)[0]}")
        base = cls()
        return cls(
            mode=str(data.get("mode", base.mode)),
            lam=float(data.get("lambda", base.lam)),
            radius=int(data.get("radius", base.radius)),
            recency_half_life=float(data.get("recency_half_life", base.recency_half_life)),
        )


def conditioned_action(
    q: QTable,
    s: State,
    db: GhostDatabase,
    pc: PenaltyConfig,
    epsilon: float,
    rng: random.Random,
    occluded: bool = False,
) -> Action:
    """Epsilon-greedy action selection that avoids retrieved failure actions.

    Draw-for-draw identical to plain ``select_action`` whenever nothing is
    retrieved or lambda is 0 in soft mode. Failure actions at a cell come
    only from labeled failure trajectories that acted at that exact cell, so
    the retrieval radius widens the trajectory pool without ever adding
    actions taken elsewhere.
    """
    if epsilon > 0 and rng.random() < epsilon:
        return ACTIONS[rng.randrange(len(ACTIONS))]
    values = q.values((s.agent, occluded))
    found = db.failure_action_weights(s.agent, s.episode, pc.recency_half_life)
    if found is None:
        return greedy_action(values)
    masked, weights = found
    if pc.mode == HARD_MASK:
        if len(masked) >= len(ACTIONS):
            return greedy_action(values)
        best = None
        best_v = 0.0
        for a in ACTIONS:
            if a in masked:
                continue
            if best is None or values[a.value] > best_v:
                best, best_v = a, values[a.value]
        return best
    scores = [values[i] - pc.lam * weights[i] for i in range(len(ACTIONS))]
    return greedy_action(scores)


def episodes_to_criterion(curve: Sequence[float], criterion: float) -> Optional[int]:
    """First episode whose greedy-evaluation return meets the criterion."""
    for i, value in enumerate(curve):
        if value >= criterion:
            return i
    return None


# ---------------------------------------------------------------------------
# Experiment harness
# ---------------------------------------------------------------------------

BASELINE = "baseline"
CONDITIONED = "conditioned"
ARMS = (BASELINE, CONDITIONED)


@dataclass(frozen=True)
class ExperimentConfig:
    environment: GridConfig
    seeds: tuple[int, ...]
    episodes: int = 600
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    snapshot_interval: int = 10
    criterion_fraction: float = 0.9
    schedule: tuple[ScheduledDisruption, ...] = ()
    heldout: Optional[ScheduledDisruption] = None
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    asymptote_window: int = 50


@dataclass(frozen=True)
class ArmSeedMetrics:
    episodes_to_criterion: Optional[int]
    asymptotic_return: float
    recovery_episodes: Optional[int]
    robustness_return: Optional[float]
    trajectory_log_sha256: str

    def to_dict(self) -> dict:
        return {
            "episodes_to_criterion": self.episodes_to_criterion,
            "asymptotic_return": self.asymptotic_return,
            "recovery_episodes": self.recovery_episodes,
            "robustness_return": self.robustness_return,
            "trajectory_log_sha256": self.trajectory_log_sha256,
        }


@dataclass
class ExperimentReport:
    criterion_return: float
    seeds: tuple[int, ...]
    arms: dict[str, dict[int, ArmSeedMetrics]]
    summary: dict
    hypothesis: dict

    def to_dict(self) -> dict:
        return {
            "criterion_return": self.criterion_return,
            "seeds": list(self.seeds),
            "arms": {
                arm: {str(seed): m.to_dict() for seed, m in sorted(results.items())}
                for arm, results in sorted(self.arms.items())
            },
            "summary": self.summary,
            "hypothesis": self.hypothesis,
        }


CurveRow = tuple[int, str, int, float]  # (seed, arm, episode, greedy_return)


def _median_or_none(values: list) -> Optional[float]:
    reached = [v for v in values if v is not None]
    return float(median(reached)) if reached else None


def _summary_block(per_arm: dict[str, list], lower_is_better: bool) -> dict:
    out: dict = {}
    for arm in ARMS:
        values = per_arm[arm]
        out[arm] = {
            "median": _median_or_none(values),
            "not_reached": sum(1 for v in values if v is None),
        }
    cond_better = base_better = ties = 0
    for b, c in zip(per_arm[BASELINE], per_arm[CONDITIONED]):
        b_cmp = float("inf") if b is None else b
        c_cmp = float("inf") if c is None else c
        if not lower_is_better:
            b_cmp, c_cmp = -b_cmp, -c_cmp
        if c_cmp < b_cmp:
            cond_better += 1
        elif b_cmp < c_cmp:
            base_better += 1
        else:
            ties += 1
    out["sign_test"] = {
        "conditioned_better": cond_better,
        "baseline_better": base_better,
        "ties": ties,
    }
    return out


def run_experiment(cfg: ExperimentConfig) -> tuple[ExperimentReport, list[CurveRow]]:
    """Run paired baseline/conditioned arms over the seed list.

    Both arms of a seed consume identical environment and exploration random
    streams (split per concern), identical configs and identical disruption
    schedules; only action selection differs. Episodes are auto-labeled by
    the rule classifier before retrieval can use them. Returns the report
    plus the raw learning curves as (seed, arm, episode, greedy_return) rows.
    """
    from .training import run_training  # local import: training builds on this module

    validate_config(cfg.environment)
    if len(cfg.seeds) < 20:
        raise ConfigError(f"experiment needs >= 20 seeds, got {len(cfg.seeds)}")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("experiment seeds must be distinct")
    if cfg.episodes < 1:
        raise ConfigError(f"episodes must be >= 1, got {cfg.episodes}")
    if not 0.0 < cfg.criterion_fraction <= 1.0:
        raise ConfigError(
            f"criterion_fraction must be in (0, 1], got {cfg.criterion_fraction}"
        )

    criterion = cfg.criterion_fraction * optimal_return(cfg.environment)
    first_disruption = cfg.schedule[0].episode if cfg.schedule else None

    arms: dict[str, dict[int, ArmSeedMetrics]] = {arm: {} for arm in ARMS}
    curves: list[CurveRow] = []
    for arm in ARMS:
        penalty = cfg.penalty if arm == CONDITIONED else None
        for seed in cfg.seeds:
            result = run_training(
                cfg.environment,
                cfg.hyperparams,
                cfg.episodes,
                seed,
                snapshot_interval=cfg.snapshot_interval,
                schedule=cfg.schedule,
                penalty=penalty,
                thresholds=cfg.thresholds,
                auto_label=True,
            )
            curve = result.curve
            recovery = None
            if first_disruption is not None and 1 <= first_disruption < len(curve):
                pre_level = curve[first_disruption - 1]
                hit = episodes_to_criterion(curve[first_disruption:], 0.9 * pre_level)
                recovery = hit if hit is not None else None
            robustness = None
            if cfg.heldout is not None:
                heldout = make_disruption(
                    "heldout", cfg.heldout.kind, cfg.heldout.params, cfg.heldout.author
                )
                heldout_config = apply_disruption(result.config, heldout)
                robustness = greedy_rollout(
                    result.q,
                    heldout_config,
                    State(heldout_config.start, 0, cfg.episodes),
                ).total_return
            arms[arm][seed] = ArmSeedMetrics(
                episodes_to_criterion=episodes_to_criterion(curve, criterion),
                asymptotic_return=sum(curve[-cfg.asymptote_window:])
                / min(cfg.asymptote_window, len(curve)),
                recovery_episodes=recovery,
                robustness_return=robustness,
                trajectory_log_sha256=result.trajectory_log_sha256,
            )
            curves.extend(
                (seed, arm, episode, value) for episode, value in enumerate(curve)
            )

    summary = {
        "episodes_to_criterion": _summary_block(
            {arm: [arms[arm][s].episodes_to_criterion for s in cfg.seeds] for arm in ARMS},
            lower_is_better=True,
        ),
        "asymptotic_return": _summary_block(
            {arm: [arms[arm][s].asymptotic_return for s in cfg.seeds] for arm in ARMS},
            lower_is_better=False,
        ),
        "recovery_episodes": _summary_block(
            {arm: [arms[arm][s].recovery_episodes for s in cfg.seeds] for arm in ARMS},
            lower_is_better=True,
        ),
    }
    if cfg.heldout is not None:
        summary["robustness_return"] = _summary_block(
            {arm: [arms[arm][s].robustness_return for s in cfg.seeds] for arm in ARMS},
            lower_is_better=False,
        )

    cond_med = summary["recovery_episodes"][CONDITIONED]["median"]
    base_med = summary["recovery_episodes"][BASELINE]["median"]
    hypothesis = {
        "statement": "conditioned median recovery_episodes <= baseline median",
        "conditioned_median": cond_med,
        "baseline_median": base_med,
        # Reported, not asserted: the direction is a hypothesis under test.
        "direction_holds": (
            None if cond_med is None or base_med is None else bool(cond_med <= base_med)
        ),
    }
    report = ExperimentReport(
        criterion_return=criterion,
        seeds=tuple(cfg.seeds),
        arms=arms,
        summary=summary,
        hypothesis=hypothesis,
    )
    return report, curves


def trajectory_log_digest(serialized_lines: Sequence[str]) -> str:
    h = hashlib.sha256()
    for line in serialized_lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
