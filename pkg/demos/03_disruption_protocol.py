"""The human disruption protocol: five typed, validated, journalled mutations.

Applies one of each disruption kind to a config, shows the minimal-diff
contract, and demonstrates why validation exists: disruptions may make an
agent maladapt but never make the task unsolvable.
"""

import dataclasses

from ghostgrid import GridConfig, ValidationError, apply_disruption, make_disruption
from ghostgrid.disruptions import DisruptionJournal, DisruptionKind, mark_applied


def diff(before, after):
    return sorted(
        f.name
        for f in dataclasses.fields(GridConfig)
        if getattr(before, f.name) != getattr(after, f.name)
    )


def main():
    config = GridConfig(width=8, height=8, start=(0, 0), goal=(7, 7))
    journal = DisruptionJournal()
    agent_cell = (2, 2)

    script = [
        (DisruptionKind.OBSTACLE_PLACEMENT, {"cells": [[4, 4], [4, 5], [5, 4]]}),
        (DisruptionKind.GOAL_RELOCATION, {"new_goal": [0, 7]}),
        (DisruptionKind.PHYSICS_ALTERATION, {"slip_prob": 0.25}),
        (DisruptionKind.REWARD_INVERSION, {}),
        (DisruptionKind.SENSORY_OCCLUSION, {"cells": [[0, 7], [1, 7], [0, 6]]}),
    ]
    for episode, (kind, params) in enumerate(script, start=10):
        d = make_disruption(journal.new_id(), kind, params, author="rater-1")
        new_config = apply_disruption(config, d, agent=agent_cell)
        journal.log(mark_applied(d, episode, 0), config)
        print(f"{d.id} {kind.value:20s} changed fields: {diff(config, new_config)}")
        config = new_config

    print(f"\njournal holds {len(journal.entries)} entries; "
          f"active ids: {journal.active_ids()}")
    print(f"goal now {config.goal}, reward sign {config.reward_sign}, "
          f"slip {config.physics.slip_prob}, "
          f"occluded cells {sorted(config.occlusion.cells)}")

    print("\nrejected disruptions name a reason code:")
    attempts = [
        (DisruptionKind.OBSTACLE_PLACEMENT, {"cells": [[2, 2]]}, "on the agent"),
        (DisruptionKind.OBSTACLE_PLACEMENT, {"cells": [[0, 1], [1, 1], [1, 0]]},
         "walls off the start"),
        (DisruptionKind.GOAL_RELOCATION, {"new_goal": [42, 0]}, "off the grid"),
        (DisruptionKind.PHYSICS_ALTERATION, {"slip_prob": 2.0}, "slip > 1"),
    ]
    for kind, params, why in attempts:
        try:
            d = make_disruption("dx", kind, params, author="rater-1")
            apply_disruption(config, d, agent=agent_cell)
            print(f"  {kind.value}: unexpectedly accepted ({why})")
        except ValidationError as exc:
            print(f"  {kind.value:20s} ({why}): rejected {exc.reason}")


if __name__ == "__main__":
    main()
