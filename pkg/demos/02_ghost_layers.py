"""The layered ghost view: live agent, Recent, Historical, Pre-disruption.

Trains long enough to accumulate snapshots, relocates the goal mid-run, and
then spawns the ghost layers an operator would see: a nearly-opaque recent
ghost, a faint historical one, and a green pre-disruption ghost that still
walks to the old goal under the old rules.
"""

from ghostgrid import GridConfig, Hyperparams, LayerConfig, run_training
from ghostgrid.disruptions import DisruptionKind, ScheduledDisruption

GLYPHS = {"recent": "r", "historical": "h", "pre_disruption": "p"}


def overlay(config, ghosts):
    grid = [["." for _ in range(config.width)] for _ in range(config.height)]
    for g in ghosts:
        glyph = GLYPHS[g.kind.value]
        for x, y in g.trajectory.path():
            grid[y][x] = glyph
    for x, y in config.obstacles:
        grid[y][x] = "#"
    sx, sy = config.start
    gx, gy = config.goal
    grid[sy][sx] = "S"
    grid[gy][gx] = "G"
    return "\n".join("".join(row) for row in grid)


def main():
    config = GridConfig(width=8, height=8, start=(0, 0), goal=(7, 7), max_steps=150)
    schedule = (
        ScheduledDisruption(220, DisruptionKind.GOAL_RELOCATION, {"new_goal": [0, 7]}),
    )
    result = run_training(
        config,
        Hyperparams(epsilon_decay_episodes=180),
        episodes=260,
        seed=3,
        snapshot_interval=10,
        schedule=schedule,
        layers=LayerConfig(k_recent=5, k_historical=50),
        auto_label=False,
    )

    for episode in (100, 230, 259):
        ghosts = result.ghosts_by_episode[episode]
        print(f"\n=== episode {episode} "
              f"({'before' if episode < 220 else 'after'} the goal moved) ===")
        print("live agent is layer 1 at alpha 1.00")
        for g in sorted(ghosts, key=lambda g: -g.alpha):
            print(f"  {g.kind.value:15s} alpha={g.alpha:.2f} color={g.color_tag:5s} "
                  f"source={g.source_snapshot_id} outcome={g.trajectory.outcome}")
        cfg = result.config if episode >= 220 else config
        print(overlay(cfg, ghosts))
    print("\nlegend: r recent ghost, h historical ghost, p pre-disruption ghost")


if __name__ == "__main__":
    main()
