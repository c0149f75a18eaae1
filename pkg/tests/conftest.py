"""Shared helpers: synthetic trajectory construction and tiny configs."""

from __future__ import annotations

import pytest

from ghostgrid import Action, GridConfig, State, Transition, make_trajectory


def synth_trajectory(
    cells,
    actions,
    episode=0,
    reached_goal=False,
    step_penalty=-0.01,
    goal_reward=1.0,
):
    """Build a chained Trajectory from an explicit cell path and action list.

    len(cells) must be len(actions) + 1. The last transition is terminal:
    done_reason "goal" when reached_goal else "timeout".
    """
    assert len(cells) == len(actions) + 1
    transitions = []
    n = len(actions)
    for k in range(n):
        done = k == n - 1
        reason = "goal" if (done and reached_goal) else ("timeout" if done else "none")
        reward = goal_reward if (done and reached_goal) else step_penalty
        transitions.append(
            Transition(
                s=State(agent=cells[k], tick=k, episode=episode),
                a=actions[k],
                r=reward,
                s_next=State(agent=cells[k + 1], tick=k + 1, episode=episode),
                done=done,
                done_reason=reason,
            )
        )
    return make_trajectory(episode, transitions)


def stay_trajectory(cell=(0, 0), steps=50, episode=0):
    return synth_trajectory(
        [cell] * (steps + 1), [Action.STAY] * steps, episode=episode
    )


@pytest.fixture
def small_config():
    return GridConfig(width=6, height=6, start=(0, 0), goal=(5, 5), max_steps=80)


@pytest.fixture
def open_4x4():
    return GridConfig(width=4, height=4, start=(0, 0), goal=(3, 3), max_steps=50)
