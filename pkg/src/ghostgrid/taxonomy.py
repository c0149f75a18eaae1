"""Behavioural failure taxonomy.

Five maladaptation modes over trajectory windows, the metrics that expose
them, a rule classifier with precedence Catatonic > Manic > Obsessive >
Fragmentation > Drift, inter-rater agreement statistics, and threshold
fitting against human labels.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Hashable, Sequence

import numpy as np

from .env import ACTIONS, OPPOSITE_ACTION, Cell
from .errors import ConfigError, ValidationError

if TYPE_CHECKING:  # pragma: no cover
    from .ghosts import Trajectory


class FailureMode(Enum):
    CATATONIC_COLLAPSE = "CatatonicCollapse"
    MANIC_OSCILLATION = "ManicOscillation"
    OBSESSIVE_LOOP = "ObsessiveLoop"
    GRADUAL_DRIFT = "GradualDrift"
    POLICY_FRAGMENTATION = "PolicyFragmentation"
    NONE = "None"


FAILURE_MODES: tuple[FailureMode, ...] = tuple(
    m for m in FailureMode if m is not FailureMode.NONE
)


def failure_mode_from_wire(name: str) -> FailureMode:
    try:
        return FailureMode(name)
    except ValueError:
        raise ValidationError(f"unknown failure mode {name!r}") from None


@dataclass(frozen=True)
class BehaviourMetrics:
    stationarity_ratio: float
    reversal_rate: float
    loop_cycle_len: int
    loop_repeats: int
    loop_coverage: float
    fragmentation_entropy: float
    goal_reached: bool
    drift_slope: float = 0.0

    def with_drift(self, slope: float) -> "BehaviourMetrics":
        return replace(self, drift_slope=slope)


@dataclass(frozen=True)
class Thresholds:
    theta_cat: float = 0.8
    theta_osc: float = 0.5
    loop_min_repeats: int = 3
    loop_max_cycle: int = 8
    theta_loop: float = 0.6
    theta_frag: float = 0.7
    frag_min_revisits: int = 3
    theta_drift: float = 0.0
    drift_window_episodes: int = 5

    def to_dict(self) -> dict:
        return {
            "theta_cat": self.theta_cat,
            "theta_osc": self.theta_osc,
            "loop_min_repeats": self.loop_min_repeats,
            "loop_max_cycle": self.loop_max_cycle,
            "theta_loop": self.theta_loop,
            "theta_frag": self.theta_frag,
            "frag_min_revisits": self.frag_min_revisits,
            "theta_drift": self.theta_drift,
            "drift_window_episodes": self.drift_window_episodes,
        }

    @classmethod
    def from_dict(cls, data: dict, where: str = "taxonomy") -> "Thresholds":
        if not isinstance(data, dict):
            raise ConfigError(f"{where} must be an object")
        known = cls().to_dict()
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown key {where}.{sorted(unknown)[0]}")
        merged = {**known, **data}
        return cls(
            theta_cat=float(merged["theta_cat"]),
            theta_osc=float(merged["theta_osc"]),
            loop_min_repeats=int(merged["loop_min_repeats"]),
            loop_max_cycle=int(merged["loop_max_cycle"]),
            theta_loop=float(merged["theta_loop"]),
            theta_frag=float(merged["theta_frag"]),
            frag_min_revisits=int(merged["frag_min_revisits"]),
            theta_drift=float(merged["theta_drift"]),
            drift_window_episodes=int(merged["drift_window_episodes"]),
        )


def _state_sequence(t: "Trajectory") -> list[Cell]:
    cells = [tr.s.agent for tr in t.transitions]
    cells.append(t.transitions[-1].s_next.agent)
    return cells


def _longest_loop(cells: list[Cell], max_cycle: int) -> tuple[int, int, float]:
    """Longest-covering repeated state cycle, as (cycle_len, repeats, coverage).

    For each period L, a maximal run of m consecutive positions with
    cells[i] == cells[i+L] marks an L-periodic segment of m+L states, i.e.
    a cycle repeated floor(m/L)+1 full times. Coverage is the covered span
    over the whole state sequence; only >= 2 repeats counts as a loop.
    Prefers higher coverage, then more repeats, then the shorter cycle.
    """
    n = len(cells)
    best = (0, 0, 0.0)
    for length in range(2, max_cycle + 1):
        if 2 * length > n:
            break
        run = 0
        for i in range(n - length):
            if cells[i] == cells[i + length]:
                run += 1
                continue
            if run >= length:
                r = run // length + 1
                coverage = (r * length) / n
                if (coverage, r) > (best[2], best[1]):
                    best = (length, r, coverage)
            run = 0
        if run >= length:
            r = run // length + 1
            coverage = (r * length) / n
            if (coverage, r) > (best[2], best[1]):
                best = (length, r, coverage)
    return best


def compute_metrics(
    t: "Trajectory",
    reference: "Trajectory | None" = None,
    *,
    max_cycle: int = 8,
    min_revisits: int = 3,
) -> BehaviourMetrics:
    """Single-window behavioural metrics for one trajectory.

    ``drift_slope`` stays 0 here: drift is the one cross-episode symptom and
    is computed by ``drift_score`` over an episode window, then attached via
    ``BehaviourMetrics.with_drift``. ``reference`` is accepted for symmetry
    with that workflow and is unused for the single-window metrics.
    """
    transitions = t.transitions
    n = len(transitions)
    stationary = sum(1 for tr in transitions if tr.s.agent == tr.s_next.agent)
    stationarity = stationary / n

    if n >= 2:
        reversals = sum(
            1
            for a, b in zip(transitions, transitions[1:])
            if OPPOSITE_ACTION.get(a.a) is b.a
        )
        reversal_rate = reversals / (n - 1)
    else:
        reversal_rate = 0.0

    cycle_len, repeats, coverage = _longest_loop(_state_sequence(t), max_cycle)

    by_cell: dict[Cell, Counter] = defaultdict(Counter)
    for tr in transitions:
        by_cell[tr.s.agent][tr.a] += 1
    entropies = []
    log_k = math.log(len(ACTIONS))
    for counts in by_cell.values():
        total = sum(counts.values())
        if total < min_revisits:
            continue
        h = -sum((c / total) * math.log(c / total) for c in counts.values())
        entropies.append(h / log_k)
    fragmentation = sum(entropies) / len(entropies) if entropies else 0.0

    return BehaviourMetrics(
        stationarity_ratio=stationarity,
        reversal_rate=reversal_rate,
        loop_cycle_len=cycle_len,
        loop_repeats=repeats,
        loop_coverage=coverage,
        fragmentation_entropy=fragmentation,
        goal_reached=t.outcome == "success",
    )


def classify(metrics: BehaviourMetrics, th: Thresholds) -> FailureMode:
    """Rule classifier. Success gates everything; otherwise first match wins."""
    if metrics.goal_reached:
        return FailureMode.NONE
    if metrics.stationarity_ratio >= th.theta_cat:
        return FailureMode.CATATONIC_COLLAPSE
    if metrics.reversal_rate >= th.theta_osc:
        return FailureMode.MANIC_OSCILLATION
    if (
        metrics.loop_repeats >= th.loop_min_repeats
        and metrics.loop_coverage >= th.theta_loop
        and 2 <= metrics.loop_cycle_len <= th.loop_max_cycle
    ):
        return FailureMode.OBSESSIVE_LOOP
    if metrics.fragmentation_entropy >= th.theta_frag:
        return FailureMode.POLICY_FRAGMENTATION
    if metrics.drift_slope > th.theta_drift:
        return FailureMode.GRADUAL_DRIFT
    return FailureMode.NONE


def drift_score(episodes: Sequence["Trajectory"], reference: "Trajectory") -> float:
    """Least-squares slope of per-episode divergence from a reference path.

    Divergence of one episode is the mean Manhattan distance between its
    path and the reference path at matching step indices, truncated to the
    shorter of the two.
    """
    if len(episodes) < 2:
        raise ValidationError(f"drift needs >= 2 episodes, got {len(episodes)}")
    if not reference.transitions:
        raise ValidationError("drift reference trajectory is empty")
    ref = _state_sequence(reference)
    divergences = []
    for ep in episodes:
        if not ep.transitions:
            raise ValidationError("drift episode trajectory is empty")
        path = _state_sequence(ep)
        m = min(len(path), len(ref))
        d = sum(abs(path[i][0] - ref[i][0]) + abs(path[i][1] - ref[i][1]) for i in range(m))
        divergences.append(d / m)
    n = len(divergences)
    x_mean = (n - 1) / 2
    y_mean = sum(divergences) / n
    num = sum((i - x_mean) * (y - y_mean) for i, y in enumerate(divergences))
    den = sum((i - x_mean) ** 2 for i in range(n))
    return num / den


def metrics_with_drift(
    t: "Trajectory",
    window: Sequence["Trajectory"],
    reference: "Trajectory | None",
    th: Thresholds,
) -> BehaviourMetrics:
    """Single-window metrics for ``t`` plus the cross-episode drift slope
    over ``window`` (typically the last ``drift_window_episodes`` episodes)
    against ``reference``. Without a reference or enough episodes the slope
    stays 0 and drift simply cannot fire."""
    metrics = compute_metrics(
        t, max_cycle=th.loop_max_cycle, min_revisits=th.frag_min_revisits
    )
    if reference is not None and len(window) >= 2:
        metrics = metrics.with_drift(drift_score(window, reference))
    return metrics


# ---------------------------------------------------------------------------
# Inter-rater reliability
# ---------------------------------------------------------------------------


def cohen_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement between two raters' label lists."""
    if len(a) != len(b):
        raise ValidationError(f"label lists differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise ValidationError("label lists are empty")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a = Counter(a)
    counts_b = Counter(b)
    p_e = sum(counts_a[k] * counts_b.get(k, 0) for k in counts_a) / (n * n)
    if p_e == 1.0:
        # Both raters used one identical category throughout.
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def fleiss_kappa(item_labels: Sequence[Sequence[Hashable]]) -> float:
    """Fleiss' kappa for >= 2 raters; each item carries the same rater count."""
    if not item_labels:
        raise ValidationError("no items")
    n_raters = len(item_labels[0])
    if n_raters < 2:
        raise ValidationError("fleiss kappa needs >= 2 raters per item")
    if any(len(labels) != n_raters for labels in item_labels):
        raise ValidationError("all items must have the same number of ratings")
    categories = sorted({lab for labels in item_labels for lab in labels}, key=repr)
    n_items = len(item_labels)
    counts = np.zeros((n_items, len(categories)))
    index = {c: j for j, c in enumerate(categories)}
    for i, labels in enumerate(item_labels):
        for lab in labels:
            counts[i, index[lab]] += 1
    p_i = (np.square(counts).sum(axis=1) - n_raters) / (n_raters * (n_raters - 1))
    p_bar = p_i.mean()
    p_j = counts.sum(axis=0) / (n_items * n_raters)
    p_e = float(np.square(p_j).sum())
    if p_e == 1.0:
        return 1.0
    return float((p_bar - p_e) / (1.0 - p_e))


# ---------------------------------------------------------------------------
# Threshold fitting (the automated "phase 2" classifier)
# ---------------------------------------------------------------------------

_LATTICE = {
    "theta_cat": [round(0.50 + 0.05 * i, 2) for i in range(10)],     # 0.50..0.95
    "theta_osc": [round(0.20 + 0.10 * i, 2) for i in range(7)],      # 0.20..0.80
    "loop_min_repeats": [2, 3, 4, 5],
    "theta_loop": [round(0.30 + 0.10 * i, 2) for i in range(7)],     # 0.30..0.90
    "theta_frag": [round(0.30 + 0.10 * i, 2) for i in range(7)],     # 0.30..0.90
    "theta_drift": [0.0, 0.05, 0.1, 0.25, 0.5],
}

_MODE_INDEX = {
    FailureMode.CATATONIC_COLLAPSE: 0,
    FailureMode.MANIC_OSCILLATION: 1,
    FailureMode.OBSESSIVE_LOOP: 2,
    FailureMode.POLICY_FRAGMENTATION: 3,
    FailureMode.GRADUAL_DRIFT: 4,
    FailureMode.NONE: 5,
}


def fit_thresholds(
    labeled: Sequence[tuple[BehaviourMetrics, FailureMode]],
) -> Thresholds:
    """Grid-search the decision thresholds against human labels.

    Maximizes exact-match accuracy of ``classify`` over a fixed lattice;
    ties break toward the default Thresholds. Requires at least one example
    of every failure mode.
    """
    present = {mode for _, mode in labeled}
    missing = [m.value for m in FAILURE_MODES if m not in present]
    if missing:
        raise ValidationError(f"no labeled example for mode(s): {', '.join(missing)}")

    defaults = Thresholds()
    stat = np.array([m.stationarity_ratio for m, _ in labeled])
    rev = np.array([m.reversal_rate for m, _ in labeled])
    reps = np.array([m.loop_repeats for m, _ in labeled])
    cov = np.array([m.loop_coverage for m, _ in labeled])
    cyc_ok = np.array(
        [2 <= m.loop_cycle_len <= defaults.loop_max_cycle for m, _ in labeled]
    )
    frag = np.array([m.fragmentation_entropy for m, _ in labeled])
    drift = np.array([m.drift_slope for m, _ in labeled])
    success = np.array([m.goal_reached for m, _ in labeled])
    truth = np.array([_MODE_INDEX[mode] for _, mode in labeled])

    default_vec = {
        "theta_cat": defaults.theta_cat,
        "theta_osc": defaults.theta_osc,
        "loop_min_repeats": defaults.loop_min_repeats,
        "theta_loop": defaults.theta_loop,
        "theta_frag": defaults.theta_frag,
        "theta_drift": defaults.theta_drift,
    }
    spans = {
        k: (max(vs) - min(vs)) or 1.0 for k, vs in _LATTICE.items()
    }

    best_acc = -1.0
    best_dist = math.inf
    best_combo = None
    names = list(_LATTICE)
    for combo in itertools.product(*(_LATTICE[k] for k in names)):
        c = dict(zip(names, combo))
        fires_cat = stat >= c["theta_cat"]
        fires_osc = rev >= c["theta_osc"]
        fires_loop = (reps >= c["loop_min_repeats"]) & (cov >= c["theta_loop"]) & cyc_ok
        fires_frag = frag >= c["theta_frag"]
        fires_drift = drift > c["theta_drift"]
        pred = np.select(
            [success, fires_cat, fires_osc, fires_loop, fires_frag, fires_drift],
            [5, 0, 1, 2, 3, 4],
            default=5,
        )
        acc = float(np.mean(pred == truth))
        if acc < best_acc:
            continue
        dist = sum(abs(c[k] - default_vec[k]) / spans[k] for k in names)
        if acc > best_acc or dist < best_dist:
            best_acc, best_dist, best_combo = acc, dist, c

    assert best_combo is not None
    return replace(
        defaults,
        theta_cat=best_combo["theta_cat"],
        theta_osc=best_combo["theta_osc"],
        loop_min_repeats=best_combo["loop_min_repeats"],
        theta_loop=best_combo["theta_loop"],
        theta_frag=best_combo["theta_frag"],
        theta_drift=best_combo["theta_drift"],
    )
