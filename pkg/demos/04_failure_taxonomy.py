"""Behavioural failure taxonomy on real maladaptation.

Trains an agent, then springs a goal relocation on it late in training when
exploration has nearly stopped. The stale policy keeps walking to the old
goal: the episodes that follow are genuine maladaptation, which the metrics
expose and the rule classifier names. Two simulated raters then label a
batch and Cohen's kappa scores their agreement.
"""

import random
from collections import Counter

from ghostgrid import (
    FailureMode,
    GridConfig,
    Hyperparams,
    Thresholds,
    classify,
    cohen_kappa,
    run_training,
)
from ghostgrid.disruptions import DisruptionKind, ScheduledDisruption
from ghostgrid.taxonomy import metrics_with_drift


def main():
    th = Thresholds()
    config = GridConfig(width=8, height=8, start=(0, 0), goal=(7, 7), max_steps=120)
    # exploration is almost gone by episode 300, so the relocation bites hard
    schedule = (
        ScheduledDisruption(300, DisruptionKind.GOAL_RELOCATION, {"new_goal": [0, 7]}),
    )
    result = run_training(
        config,
        Hyperparams(epsilon_start=1.0, epsilon_end=0.01, epsilon_decay_episodes=250),
        episodes=340,
        seed=11,
        schedule=schedule,
        auto_label=True,
    )

    print("episodes after the disruption, as the classifier saw them:")
    verdicts = []
    for t in result.db.trajectories[300:]:
        labels = [mode for _, mode in t.labels] or [FailureMode.NONE]
        verdicts.append(labels[0])
    counts = Counter(v.value for v in verdicts)
    for mode, n in counts.most_common():
        print(f"  {mode:22s} x{n}")

    print("\nmetrics for the first post-disruption episode:")
    first = result.db.trajectories[300]
    m = metrics_with_drift(first, [], None, th)
    print(f"  stationarity={m.stationarity_ratio:.2f} reversal={m.reversal_rate:.2f} "
          f"loop=({m.loop_cycle_len},{m.loop_repeats},{m.loop_coverage:.2f}) "
          f"entropy={m.fragmentation_entropy:.2f} -> {classify(m, th).value}")

    # two raters who mostly agree: rater B second-guesses 15% of items
    rng = random.Random(0)
    modes = list(FailureMode)
    rater_a = verdicts
    rater_b = [
        v if rng.random() > 0.15 else modes[rng.randrange(len(modes))]
        for v in verdicts
    ]
    print(f"\ninter-rater reliability over {len(rater_a)} episodes: "
          f"kappa={cohen_kappa(rater_a, rater_b):.3f}")


if __name__ == "__main__":
    main()
