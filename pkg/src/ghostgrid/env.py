"""Deterministic, cloneable gridworld.

Coordinates are (x, y) with the origin at the top-left: Up decrements y,
Down increments y, Left decrements x, Right increments x. All dynamics are
pure functions over explicit state; the caller owns the RNG, so identical
(config, seed, action sequence) triples replay bit-for-bit.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, NamedTuple, Optional

from .errors import ConfigError, EpisodeDone

Cell = tuple[int, int]


class Action(Enum):
    # Declaration order is the fixed tie-break order everywhere.
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4

    @property
    def wire(self) -> str:
        return self.name.lower()


ACTIONS: tuple[Action, ...] = tuple(Action)

ACTION_DELTAS: dict[Action, Cell] = {
    Action.UP: (0, -1),
    Action.DOWN: (0, 1),
    Action.LEFT: (-1, 0),
    Action.RIGHT: (1, 0),
    Action.STAY: (0, 0),
}

OPPOSITE_ACTION: dict[Action, Action] = {
    Action.UP: Action.DOWN,
    Action.DOWN: Action.UP,
    Action.LEFT: Action.RIGHT,
    Action.RIGHT: Action.LEFT,
}

# Slip swaps a move for one of its perpendicular neighbours; Stay never slips.
PERPENDICULAR: dict[Action, tuple[Action, Action]] = {
    Action.UP: (Action.LEFT, Action.RIGHT),
    Action.DOWN: (Action.LEFT, Action.RIGHT),
    Action.LEFT: (Action.UP, Action.DOWN),
    Action.RIGHT: (Action.UP, Action.DOWN),
}


def action_from_wire(name: str) -> Action:
    try:
        return Action[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown action name {name!r}") from None


IDENTITY_PERMUTATION: tuple[Action, ...] = ACTIONS


@dataclass(frozen=True)
class PhysicsParams:
    """Movement physics: slip probability and an action relabelling."""

    slip_prob: float = 0.0
    # action_permutation[a.value] is the action actually attempted for a.
    action_permutation: tuple[Action, ...] = IDENTITY_PERMUTATION

    def permuted(self, action: Action) -> Action:
        return self.action_permutation[action.value]


@dataclass(frozen=True)
class OcclusionMask:
    """Grid cells whose contents are hidden from observations."""

    cells: frozenset[Cell] = frozenset()


@dataclass(frozen=True)
class GridConfig:
    width: int = 8
    height: int = 8
    obstacles: frozenset[Cell] = frozenset()
    start: Cell = (0, 0)
    goal: Cell = (7, 7)
    step_penalty: float = -0.01
    goal_reward: float = 1.0
    max_steps: int = 200
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    occlusion: Optional[OcclusionMask] = None
    reward_sign: int = 1

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def passable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.obstacles

    def goal_direction_occluded(self) -> bool:
        return self.occlusion is not None and self.goal in self.occlusion.cells


class State(NamedTuple):
    agent: Cell
    tick: int
    episode: int


class Transition(NamedTuple):
    s: State
    a: Action
    r: float
    s_next: State
    done: bool
    done_reason: str  # "goal" | "timeout" | "none"


class CellContent(Enum):
    FREE = "free"
    OBSTACLE = "obstacle"
    GOAL = "goal"
    UNKNOWN = "unknown"


class Observation(NamedTuple):
    # cells[dy + 1][dx + 1] is the content at agent + (dx, dy).
    cells: tuple[tuple[CellContent, ...], ...]
    # Sign vector toward the goal, or None when the goal cell is occluded.
    goal_direction: Optional[Cell]


def validate_config(config: GridConfig) -> None:
    """Raise ConfigError naming the first violated GridConfig invariant."""
    if not (2 <= config.width <= 64 and 2 <= config.height <= 64):
        raise ConfigError(
            f"grid dimensions must be in [2, 64], got {config.width}x{config.height}"
        )
    if config.max_steps < 1:
        raise ConfigError(f"max_steps must be >= 1, got {config.max_steps}")
    if config.reward_sign not in (1, -1):
        raise ConfigError(f"reward_sign must be +1 or -1, got {config.reward_sign}")
    if not 0.0 <= config.physics.slip_prob <= 1.0:
        raise ConfigError(f"slip_prob must be in [0, 1], got {config.physics.slip_prob}")
    perm = config.physics.action_permutation
    if len(perm) != len(ACTIONS) or set(perm) != set(ACTIONS):
        raise ConfigError("action_permutation must be a bijection over the 5 actions")
    if not config.in_bounds(config.start):
        raise ConfigError(f"start {config.start} out of bounds")
    if not config.in_bounds(config.goal):
        raise ConfigError(f"goal {config.goal} out of bounds")
    if config.start == config.goal:
        raise ConfigError("start and goal must differ")
    for cell in config.obstacles:
        if not config.in_bounds(cell):
            raise ConfigError(f"obstacle {cell} out of bounds")
    if config.start in config.obstacles:
        raise ConfigError(f"start {config.start} is an obstacle")
    if config.goal in config.obstacles:
        raise ConfigError(f"goal {config.goal} is an obstacle")
    if config.occlusion is not None:
        for cell in config.occlusion.cells:
            if not config.in_bounds(cell):
                raise ConfigError(f"occlusion cell {cell} out of bounds")
    if _bfs_distance(config, config.start, config.goal) is None:
        raise ConfigError(f"goal {config.goal} unreachable from start {config.start}")


def _bfs_distance(config: GridConfig, src: Cell, dst: Cell) -> Optional[int]:
    if src == dst:
        return 0
    seen = {src}
    frontier = deque([(src, 0)])
    while frontier:
        cell, dist = frontier.popleft()
        x, y = cell
        for dx, dy in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            nxt = (x + dx, y + dy)
            if nxt == dst:
                return dist + 1
            if nxt not in seen and config.passable(nxt):
                seen.add(nxt)
                frontier.append((nxt, dist + 1))
    return None


def is_reachable(config: GridConfig, src: Cell, dst: Cell) -> bool:
    return _bfs_distance(config, src, dst) is not None


def shortest_path_length(config: GridConfig) -> int:
    """Length of the shortest obstacle-free start->goal path (4 moves)."""
    validate_config(config)
    dist = _bfs_distance(config, config.start, config.goal)
    if dist is None:
        raise ConfigError("goal unreachable from start")
    return dist


def optimal_return(config: GridConfig) -> float:
    """Return collected by a shortest greedy path under the current rewards."""
    n = shortest_path_length(config)
    return config.reward_sign * ((n - 1) * config.step_penalty + config.goal_reward)


def is_terminal(config: GridConfig, state: State) -> bool:
    return state.agent == config.goal or state.tick >= config.max_steps


def reset(config: GridConfig, episode: int) -> State:
    validate_config(config)
    return State(agent=config.start, tick=0, episode=episode)


def step(config: GridConfig, state: State, action: Action, rng: random.Random) -> Transition:
    """Advance one tick. Walls and obstacles clamp movement in place."""
    if is_terminal(config, state):
        raise EpisodeDone(f"episode already terminal at tick {state.tick}")

    effective = config.physics.permuted(action)
    if effective is not Action.STAY and config.physics.slip_prob > 0:
        if rng.random() < config.physics.slip_prob:
            effective = PERPENDICULAR[effective][rng.randrange(2)]

    dx, dy = ACTION_DELTAS[effective]
    candidate = (state.agent[0] + dx, state.agent[1] + dy)
    agent_next = candidate if config.passable(candidate) else state.agent

    tick_next = state.tick + 1
    s_next = State(agent=agent_next, tick=tick_next, episode=state.episode)
    if agent_next == config.goal:
        reward = config.reward_sign * config.goal_reward
        done, reason = True, "goal"
    else:
        reward = config.reward_sign * config.step_penalty
        if tick_next >= config.max_steps:
            done, reason = True, "timeout"
        else:
            done, reason = False, "none"
    return Transition(s=state, a=action, r=reward, s_next=s_next, done=done, done_reason=reason)


def observe(config: GridConfig, state: State) -> Observation:
    """Local 3x3 window around the agent plus a goal direction vector.

    Occluded cells read UNKNOWN; cells beyond the grid edge read OBSTACLE
    (the walls behave like obstacles for movement). The goal direction is
    None when the goal cell itself is occluded.
    """
    occluded = config.occlusion.cells if config.occlusion is not None else frozenset()
    ax, ay = state.agent
    rows = []
    for dy in (-1, 0, 1):
        row = []
        for dx in (-1, 0, 1):
            cell = (ax + dx, ay + dy)
            if cell in occluded:
                row.append(CellContent.UNKNOWN)
            elif not config.in_bounds(cell) or cell in config.obstacles:
                row.append(CellContent.OBSTACLE)
            elif cell == config.goal:
                row.append(CellContent.GOAL)
            else:
                row.append(CellContent.FREE)
        rows.append(tuple(row))

    if config.goal_direction_occluded():
        direction = None
    else:
        gx, gy = config.goal
        direction = (_sign(gx - ax), _sign(gy - ay))
    return Observation(cells=tuple(rows), goal_direction=direction)


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


# ---------------------------------------------------------------------------
# JSON codec (shared by the config file schema, the disruption journal and
# the wire protocol's session_hello).
# ---------------------------------------------------------------------------


def permutation_to_dict(perm: tuple[Action, ...]) -> dict[str, str]:
    return {a.wire: perm[a.value].wire for a in ACTIONS}


def permutation_from_dict(mapping: dict[str, str]) -> tuple[Action, ...]:
    if set(mapping) != {a.wire for a in ACTIONS}:
        raise ConfigError(f"action_permutation must map all 5 actions, got {sorted(mapping)}")
    return tuple(action_from_wire(mapping[a.wire]) for a in ACTIONS)


def grid_config_to_dict(config: GridConfig) -> dict:
    return {
        "width": config.width,
        "height": config.height,
        "obstacles": sorted([list(c) for c in config.obstacles]),
        "start": list(config.start),
        "goal": list(config.goal),
        "step_penalty": config.step_penalty,
        "goal_reward": config.goal_reward,
        "max_steps": config.max_steps,
        "reward_sign": config.reward_sign,
        "physics": {
            "slip_prob": config.physics.slip_prob,
            "action_permutation": permutation_to_dict(config.physics.action_permutation),
        },
        "occlusion": (
            sorted([list(c) for c in config.occlusion.cells])
            if config.occlusion is not None
            else None
        ),
    }


_GRID_KEYS = {
    "width", "height", "obstacles", "start", "goal", "step_penalty",
    "goal_reward", "max_steps", "reward_sign", "physics", "occlusion",
}


def _cell(value, what: str) -> Cell:
    if not (isinstance(value, (list, tuple)) and len(value) == 2
            and all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        raise ConfigError(f"{what} must be a [x, y] integer pair, got {value!r}")
    return (value[0], value[1])


def cells_from_list(values, what: str) -> frozenset[Cell]:
    if not isinstance(values, list):
        raise ConfigError(f"{what} must be a list of [x, y] pairs")
    return frozenset(_cell(v, what) for v in values)


def grid_config_from_dict(data: dict, where: str = "environment") -> GridConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(data) - _GRID_KEYS
    if unknown:
        raise ConfigError(f"unknown key {where}.{sorted(unknown)[0]}")
    base = GridConfig()
    physics = base.physics
    if "physics" in data:
        pdata = data["physics"]
        if not isinstance(pdata, dict):
            raise ConfigError(f"{where}.physics must be an object")
        punknown = set(pdata) - {"slip_prob", "action_permutation"}
        if punknown:
            raise ConfigError(f"unknown key {where}.physics.{sorted(punknown)[0]}")
        physics = PhysicsParams(
            slip_prob=float(pdata.get("slip_prob", 0.0)),
            action_permutation=(
                permutation_from_dict(pdata["action_permutation"])
                if "action_permutation" in pdata
                else IDENTITY_PERMUTATION
            ),
        )
    occlusion = None
    if data.get("occlusion") is not None:
        occlusion = OcclusionMask(cells=cells_from_list(data["occlusion"], f"{where}.occlusion"))
    config = GridConfig(
        width=int(data.get("width", base.width)),
        height=int(data.get("height", base.height)),
        obstacles=cells_from_list(data.get("obstacles", []), f"{where}.obstacles"),
        start=_cell(data.get("start", list(base.start)), f"{where}.start"),
        goal=_cell(data.get("goal", list(base.goal)), f"{where}.goal"),
        step_penalty=float(data.get("step_penalty", base.step_penalty)),
        goal_reward=float(data.get("goal_reward", base.goal_reward)),
        max_steps=int(data.get("max_steps", base.max_steps)),
        physics=physics,
        occlusion=occlusion,
        reward_sign=int(data.get("reward_sign", base.reward_sign)),
    )
    validate_config(config)
    return config


def with_physics(config: GridConfig, **kwargs) -> GridConfig:
    return replace(config, physics=replace(config.physics, **kwargs))


def random_config(rng: random.Random, *, max_side: int = 8) -> GridConfig:
    """A random valid config; used by fuzz and determinism suites."""
    while True:
        width = rng.randint(4, max_side)
        height = rng.randint(4, max_side)
        cells = [(x, y) for x in range(width) for y in range(height)]
        start, goal = rng.sample(cells, 2)
        n_obstacles = rng.randint(0, (width * height) // 5)
        pool = [c for c in cells if c not in (start, goal)]
        obstacles = frozenset(rng.sample(pool, min(n_obstacles, len(pool))))
        config = GridConfig(
            width=width,
            height=height,
            obstacles=obstacles,
            start=start,
            goal=goal,
            max_steps=rng.choice([60, 100, 150]),
            physics=PhysicsParams(slip_prob=rng.choice([0.0, 0.0, 0.1, 0.25])),
        )
        try:
            validate_config(config)
        except ConfigError:
            continue
        return config


def iter_cells(config: GridConfig) -> Iterable[Cell]:
    for y in range(config.height):
        for x in range(config.width):
            yield (x, y)
