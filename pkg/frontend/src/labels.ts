// Label panel: six buttons (five failure modes plus None) attached to the
// episode timeline. A label without a rater id never leaves the client.

import { CommandRejected, FAILURE_MODES, LabelCommand } from "./protocol.js";
import { EpisodeChip } from "./viewmodel.js";

export const LABEL_BUTTONS = FAILURE_MODES;

export function labelMessage(
  chip: EpisodeChip,
  mode: string,
  raterId: string,
): LabelCommand {
  if (!raterId || !raterId.trim()) {
    throw new CommandRejected("set a rater id before labeling");
  }
  if (!(FAILURE_MODES as readonly string[]).includes(mode)) {
    throw new CommandRejected(`unknown failure mode ${mode}`);
  }
  return {
    type: "label",
    trajectory_id: chip.trajectoryId,
    failure_mode: mode,
    rater_id: raterId.trim(),
  };
}
