"""Tabular Q-learning agent with freezable policy snapshots.

State keys are (cell, occlusion_flag): when the goal direction is hidden by
a sensory occlusion the flag flips and the agent reads/writes a separate
slice of the value table, which is what makes occlusion behaviourally potent
in the tabular setting.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .env import ACTIONS, Action, Cell, GridConfig, State
from .errors import ConfigError

StateKey = tuple[Cell, bool]

_ZEROS: tuple[float, ...] = (0.0,) * len(ACTIONS)


def state_key(config: GridConfig, state: State) -> StateKey:
    return (state.agent, config.goal_direction_occluded())


def greedy_action(values: Sequence[float]) -> Action:
    """Argmax with ties broken by the fixed order Up<Down<Left<Right<Stay."""
    best = 0
    best_v = values[0]
    for i in range(1, len(ACTIONS)):
        if values[i] > best_v:
            best, best_v = i, values[i]
    return ACTIONS[best]


class QTable:
    """Mutable action-value table; missing entries read as 0.0."""

    __slots__ = ("_table",)

    def __init__(self) -> None:
        self._table: dict[StateKey, list[float]] = {}

    def values(self, key: StateKey) -> Sequence[float]:
        return self._table.get(key, _ZEROS)

    def get(self, key: StateKey, action: Action) -> float:
        return self._table.get(key, _ZEROS)[action.value]

    def row(self, key: StateKey) -> list[float]:
        row = self._table.get(key)
        if row is None:
            row = [0.0] * len(ACTIONS)
            self._table[key] = row
        return row

    def items(self):
        return self._table.items()

    def __len__(self) -> int:
        return len(self._table)


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 500

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.epsilon_end > self.epsilon_start:
            raise ConfigError("epsilon_end must not exceed epsilon_start")
        if self.epsilon_decay_episodes < 1:
            raise ConfigError("epsilon_decay_episodes must be >= 1")


def epsilon_at(h: Hyperparams, episode: int) -> float:
    """Linear decay from epsilon_start to epsilon_end over the decay window."""
    if episode >= h.epsilon_decay_episodes:
        return h.epsilon_end
    frac = episode / h.epsilon_decay_episodes
    return h.epsilon_start + (h.epsilon_end - h.epsilon_start) * frac


def select_action(
    q: QTable | "PolicySnapshot",
    state: State,
    epsilon: float,
    rng: random.Random,
    occluded: bool = False,
) -> Action:
    """Epsilon-greedy over the 5 Q-values.

    With epsilon 0 this is a pure function of state (no RNG draw is made).
    """
    if epsilon > 0 and rng.random() < epsilon:
        return ACTIONS[rng.randrange(len(ACTIONS))]
    return greedy_action(q.values((state.agent, occluded)))


def update(q: QTable, t, h: Hyperparams, occluded: bool = False) -> float:
    """One-step Q-learning backup for transition ``t``; returns the new Q(s,a)."""
    key = (t.s.agent, occluded)
    bootstrap = 0.0 if t.done else max(q.values((t.s_next.agent, occluded)))
    row = q.row(key)
    row[t.a.value] += h.alpha * (t.r + h.gamma * bootstrap - row[t.a.value])
    return row[t.a.value]


@dataclass(frozen=True)
class PolicySnapshot:
    """Deep, immutable copy of a QTable at an episode boundary."""

    id: str
    episode_index: int
    qtable: Mapping[StateKey, tuple[float, ...]] = field(repr=False)
    captured_pre_disruption: bool = False
    disruption_id_before: str | None = None

    def values(self, key: StateKey) -> Sequence[float]:
        return self.qtable.get(key, _ZEROS)


def snapshot_policy(
    q: QTable,
    episode: int,
    snapshot_id: str,
    *,
    pre_disruption: bool = False,
    disruption_id_before: str | None = None,
) -> PolicySnapshot:
    frozen = {key: tuple(row) for key, row in q.items()}
    return PolicySnapshot(
        id=snapshot_id,
        episode_index=episode,
        qtable=frozen,
        captured_pre_disruption=pre_disruption,
        disruption_id_before=disruption_id_before,
    )
