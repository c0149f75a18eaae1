"""The dual learning loop, measured.

Runs the paired experiment: a baseline epsilon-greedy agent versus one whose
action selection penalizes actions retrieved from labeled failure ghosts.
Both arms share seeds, configs and disruption schedules; only the selection
rule differs. The directional result is reported, not asserted.
"""

from ghostgrid import (
    ExperimentConfig,
    GridConfig,
    Hyperparams,
    PenaltyConfig,
    run_experiment,
)
from ghostgrid.disruptions import DisruptionKind, ScheduledDisruption


def fmt(v):
    return "not reached" if v is None else f"{v:g}"


def main():
    cfg = ExperimentConfig(
        environment=GridConfig(width=8, height=8, start=(0, 0), goal=(7, 7),
                               max_steps=200),
        seeds=tuple(range(20)),
        episodes=500,
        hyperparams=Hyperparams(alpha=0.3, epsilon_end=0.15,
                                epsilon_decay_episodes=350),
        schedule=(
            ScheduledDisruption(250, DisruptionKind.GOAL_RELOCATION,
                                {"new_goal": [0, 7]}),
        ),
        heldout=ScheduledDisruption(0, DisruptionKind.PHYSICS_ALTERATION,
                                    {"slip_prob": 0.2}),
        penalty=PenaltyConfig(mode="soft_penalty", lam=1.0),
    )
    print("running 20 paired seeds, goal relocation at episode 250 "
          "(this takes a minute)...")
    report, _curves = run_experiment(cfg)

    for metric in ("episodes_to_criterion", "recovery_episodes",
                   "asymptotic_return", "robustness_return"):
        block = report.summary[metric]
        sign = block["sign_test"]
        print(f"\n{metric}:")
        for arm in ("baseline", "conditioned"):
            print(f"  {arm:12s} median={fmt(block[arm]['median'])} "
                  f"(not reached: {block[arm]['not_reached']})")
        print(f"  sign test: conditioned better {sign['conditioned_better']}, "
              f"baseline better {sign['baseline_better']}, ties {sign['ties']}")

    h = report.hypothesis
    print(f"\nhypothesis: {h['statement']}")
    print(f"  conditioned={fmt(h['conditioned_median'])} vs "
          f"baseline={fmt(h['baseline_median'])} -> holds: {h['direction_holds']}")


if __name__ == "__main__":
    main()
