"""Train a tabular agent, freeze a policy snapshot, replay it as a ghost.

Walks through the core loop: a deterministic 8x8 gridworld, epsilon-greedy
Q-learning, per-episode greedy evaluation, and a slip-free greedy replay of
the frozen policy. Everything here is bit-reproducible for a fixed seed.
"""

from ghostgrid import (
    GridConfig,
    Hyperparams,
    State,
    greedy_rollout,
    run_training,
    shortest_path_length,
    snapshot_policy,
)

SPARK = " .:-=+*#%@"


def sparkline(values, lo=-2.0, hi=1.0):
    span = hi - lo
    return "".join(
        SPARK[min(len(SPARK) - 1, max(0, int((v - lo) / span * (len(SPARK) - 1))))]
        for v in values
    )


def render(config, path):
    cells = set(path)
    rows = []
    for y in range(config.height):
        row = ""
        for x in range(config.width):
            if (x, y) == config.start:
                row += "S"
            elif (x, y) == config.goal:
                row += "G"
            elif (x, y) in config.obstacles:
                row += "#"
            elif (x, y) in cells:
                row += "o"
            else:
                row += "."
        rows.append(row)
    return "\n".join(rows)


def main():
    config = GridConfig(
        width=8, height=8, start=(0, 0), goal=(7, 7),
        obstacles=frozenset({(3, 3), (3, 4), (4, 3), (5, 1), (1, 5)}),
        max_steps=200,
    )
    print(f"shortest path: {shortest_path_length(config)} steps")

    result = run_training(
        config, Hyperparams(epsilon_decay_episodes=300), episodes=400, seed=7
    )
    curve = result.curve
    print("\ngreedy return per episode (every 10th):")
    print("  " + sparkline(curve[::10]))
    print(f"  first episode: {curve[0]:+.2f}   last episode: {curve[-1]:+.2f}")

    snapshot = snapshot_policy(result.q, 400, "demo-snapshot")
    replay = greedy_rollout(snapshot, config, State(config.start, 0, 400))
    print(f"\nfrozen policy replay: outcome={replay.outcome}, "
          f"{len(replay.transitions)} steps, return {replay.total_return:+.2f}")
    print(render(config, replay.path()))

    again = greedy_rollout(snapshot, config, State(config.start, 0, 400))
    print(f"\nreplayed twice, identical: {again.transitions == replay.transitions}")


if __name__ == "__main__":
    main()
