import { describe, expect, it } from "vitest";

import { LABEL_BUTTONS, labelMessage } from "../src/labels.js";
import {
  goalMoveMessage,
  obstacleBrushMessage,
  occlusionBrushMessage,
  physicsMessage,
  rewardInvertMessage,
} from "../src/palette.js";
import { CommandRejected, encodeClientMessage } from "../src/protocol.js";
import type { EpisodeChip } from "../src/viewmodel.js";

const CHIP: EpisodeChip = {
  episode: 4,
  trajectoryId: "t000005",
  failureMode: "ObsessiveLoop",
  greedyReturn: -2,
  labels: [],
  ackPending: false,
};

describe("disruption palette", () => {
  it("emits well-formed messages for all five tools", () => {
    const msgs = [
      obstacleBrushMessage([{ x: 2, y: 3 }], "rater-1"),
      goalMoveMessage({ x: 0, y: 5 }, "rater-1"),
      physicsMessage({ slipProb: 0.3 }, "rater-1"),
      rewardInvertMessage("rater-1"),
      occlusionBrushMessage([{ x: 1, y: 1 }, { x: 2, y: 1 }], "rater-1"),
    ];
    const kinds = msgs.map((m) => m.kind);
    expect(kinds).toEqual([
      "obstacle_placement", "goal_relocation", "physics_alteration",
      "reward_inversion", "sensory_occlusion",
    ]);
    for (const m of msgs) expect(() => encodeClientMessage(m)).not.toThrow();
    expect(msgs[2].params).toEqual({ slip_prob: 0.3 });
    expect(msgs[1].params).toEqual({ new_goal: [0, 5] });
  });

  it("blocks malformed palette input before send", () => {
    expect(() => obstacleBrushMessage([], "r")).toThrow(CommandRejected);
    expect(() => goalMoveMessage({ x: 1.5, y: 0 }, "r")).toThrow(CommandRejected);
    expect(() => physicsMessage({ slipProb: 1.7 }, "r")).toThrow(CommandRejected);
    expect(() => physicsMessage({}, "r")).toThrow(CommandRejected);
  });
});

describe("label panel", () => {
  it("offers exactly the five failure modes plus None", () => {
    expect([...LABEL_BUTTONS]).toEqual([
      "CatatonicCollapse", "ManicOscillation", "ObsessiveLoop",
      "GradualDrift", "PolicyFragmentation", "None",
    ]);
  });

  it("builds a label for the selected chip", () => {
    const msg = labelMessage(CHIP, "ObsessiveLoop", "rater-7");
    expect(msg).toEqual({
      type: "label", trajectory_id: "t000005",
      failure_mode: "ObsessiveLoop", rater_id: "rater-7",
    });
  });

  it("requires a rater id client-side", () => {
    expect(() => labelMessage(CHIP, "None", "")).toThrow(CommandRejected);
    expect(() => labelMessage(CHIP, "None", "   ")).toThrow(CommandRejected);
  });

  it("rejects unknown modes", () => {
    expect(() => labelMessage(CHIP, "Tantrum", "r")).toThrow(CommandRejected);
  });
});
