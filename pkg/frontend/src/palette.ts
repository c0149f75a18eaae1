// Disruption palette: five tools, each emitting a well-formed disruption
// message. Anything malformed is blocked here, before it reaches the wire.

import { Cell, CommandRejected, DisruptionCommand } from "./protocol.js";

function cellPair(c: Cell): number[] {
  if (!Number.isInteger(c.x) || !Number.isInteger(c.y)) {
    throw new CommandRejected(`cell must have integer coordinates, got ${JSON.stringify(c)}`);
  }
  return [c.x, c.y];
}

/** Obstacle brush: paint one or more cells solid. */
export function obstacleBrushMessage(cells: Cell[], author: string): DisruptionCommand {
  if (cells.length === 0) throw new CommandRejected("obstacle brush needs at least one cell");
  return {
    type: "disruption",
    kind: "obstacle_placement",
    params: { cells: cells.map(cellPair) },
    author,
  };
}

/** Goal mover: drag the goal marker to a new cell. */
export function goalMoveMessage(cell: Cell, author: string): DisruptionCommand {
  return {
    type: "disruption",
    kind: "goal_relocation",
    params: { new_goal: cellPair(cell) },
    author,
  };
}

/** Physics sliders: slip probability and/or an action relabelling. */
export function physicsMessage(
  opts: { slipProb?: number; actionPermutation?: Record<string, string> },
  author: string,
): DisruptionCommand {
  const params: Record<string, unknown> = {};
  if (opts.slipProb !== undefined) {
    if (!(opts.slipProb >= 0 && opts.slipProb <= 1)) {
      throw new CommandRejected(`slip probability must be in [0, 1], got ${opts.slipProb}`);
    }
    params["slip_prob"] = opts.slipProb;
  }
  if (opts.actionPermutation !== undefined) {
    params["action_permutation"] = opts.actionPermutation;
  }
  if (Object.keys(params).length === 0) {
    throw new CommandRejected("physics tool needs a slider value");
  }
  return { type: "disruption", kind: "physics_alteration", params, author };
}

/** Reward-invert toggle. */
export function rewardInvertMessage(author: string): DisruptionCommand {
  return { type: "disruption", kind: "reward_inversion", params: {}, author };
}

/** Occlusion brush: replace the hidden-cell mask (empty clears it). */
export function occlusionBrushMessage(cells: Cell[], author: string): DisruptionCommand {
  return {
    type: "disruption",
    kind: "sensory_occlusion",
    params: { cells: cells.map(cellPair) },
    author,
  };
}
