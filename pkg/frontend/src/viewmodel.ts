// View model: everything on screen originates from a server message. The
// console never simulates; it folds the inbound stream into this state and
// tracks its own outbound commands only until they are acked.

import type {
  Cell,
  DisruptionCommand,
  GhostWire,
  ServerMessage,
} from "./protocol.js";

export const TIMELINE_LIMIT = 20;

export interface EpisodeChip {
  episode: number;
  trajectoryId: string;
  failureMode: string; // classifier's live verdict, shown as a hint
  greedyReturn: number;
  labels: { rater: string; mode: string }[];
  ackPending: boolean;
}

export interface PendingDisruption {
  kind: DisruptionCommand["kind"];
  params: Record<string, unknown>;
  status: "pending" | "acked" | "rejected";
  detail: string;
}

export interface ViewModel {
  connection: "connecting" | "connected" | "lost";
  sessionId: string | null;
  tickRateHz: number;
  grid: {
    width: number;
    height: number;
    obstacles: Cell[];
    start: Cell;
    goal: Cell;
    occlusion: Cell[];
  } | null;
  agent: {
    cell: Cell;
    tick: number;
    episode: number;
    reward: number;
    cumulativeReturn: number;
    lastAction: string | null;
  } | null;
  ghosts: GhostWire[];
  metrics: {
    episode: number;
    greedyReturn: number;
    epsilon: number;
    liveFailureMode: string;
  } | null;
  timeline: EpisodeChip[];
  pendingDisruptions: PendingDisruption[];
  pendingLabels: string[]; // trajectory ids awaiting label_ack
  lastError: string | null;
  stateUpdates: number;
}

export function initialViewModel(): ViewModel {
  return {
    connection: "connecting",
    sessionId: null,
    tickRateHz: 0,
    grid: null,
    agent: null,
    ghosts: [],
    metrics: null,
    timeline: [],
    pendingDisruptions: [],
    pendingLabels: [],
    lastError: null,
    stateUpdates: 0,
  };
}

/** Trajectories are recorded once per episode, in order, ids t000001... */
export function trajectoryIdForEpisode(episode: number): string {
  return "t" + String(episode + 1).padStart(6, "0");
}

function toCell(pair: number[]): Cell {
  return { x: pair[0], y: pair[1] };
}

export function applyServerMessage(vm: ViewModel, msg: ServerMessage): ViewModel {
  switch (msg.type) {
    case "session_hello": {
      const g = msg.grid_config;
      return {
        ...vm,
        connection: "connected",
        sessionId: msg.session_id,
        tickRateHz: msg.tick_rate_hz,
        grid: {
          width: g.width,
          height: g.height,
          obstacles: (g.obstacles ?? []).map(toCell),
          start: toCell(g.start),
          goal: toCell(g.goal),
          occlusion: (g.occlusion ?? []).map(toCell),
        },
      };
    }
    case "state_update":
      return {
        ...vm,
        connection: "connected",
        stateUpdates: vm.stateUpdates + 1,
        agent: {
          cell: msg.agent,
          tick: msg.tick,
          episode: msg.episode,
          reward: msg.reward,
          cumulativeReturn: msg.cumulative_return,
          lastAction: msg.last_action,
        },
      };
    case "ghost_update":
      return { ...vm, ghosts: msg.ghosts };
    case "metrics_update": {
      const chip: EpisodeChip = {
        episode: msg.episode,
        trajectoryId: trajectoryIdForEpisode(msg.episode),
        failureMode: msg.live_failure_mode,
        greedyReturn: msg.greedy_return,
        labels: [],
        ackPending: false,
      };
      const timeline = [...vm.timeline, chip].slice(-TIMELINE_LIMIT);
      return {
        ...vm,
        timeline,
        metrics: {
          episode: msg.episode,
          greedyReturn: msg.greedy_return,
          epsilon: msg.epsilon,
          liveFailureMode: msg.live_failure_mode,
        },
      };
    }
    case "disruption_ack": {
      const pending = [...vm.pendingDisruptions];
      const i = pending.findIndex((p) => p.status === "pending");
      let grid = vm.grid;
      if (i >= 0) {
        const p = { ...pending[i], status: "acked" as const, detail: msg.id };
        pending[i] = p;
        grid = applyAckedDisruption(vm.grid, p);
      }
      return { ...vm, grid, pendingDisruptions: pending };
    }
    case "label_ack": {
      const timeline = vm.timeline.map((chip) =>
        chip.trajectoryId === msg.trajectory_id
          ? { ...chip, ackPending: false }
          : chip,
      );
      return {
        ...vm,
        timeline,
        pendingLabels: vm.pendingLabels.filter((t) => t !== msg.trajectory_id),
      };
    }
    case "error": {
      let pending = vm.pendingDisruptions;
      if (msg.code === "E_VALIDATION") {
        // validation errors answer disruptions, in send order
        pending = [...pending];
        const i = pending.findIndex((p) => p.status === "pending");
        if (i >= 0) {
          pending[i] = { ...pending[i], status: "rejected", detail: msg.message };
        }
      }
      return { ...vm, pendingDisruptions: pending, lastError: `${msg.code}: ${msg.message}` };
    }
  }
}

function applyAckedDisruption(
  grid: ViewModel["grid"],
  p: PendingDisruption,
): ViewModel["grid"] {
  if (!grid) return grid;
  if (p.kind === "goal_relocation") {
    const goal = p.params["new_goal"] as number[];
    return { ...grid, goal: toCell(goal) };
  }
  if (p.kind === "obstacle_placement") {
    const cells = (p.params["cells"] as number[][]).map(toCell);
    const seen = new Set(grid.obstacles.map((c) => `${c.x},${c.y}`));
    const merged = [...grid.obstacles];
    for (const c of cells) {
      if (!seen.has(`${c.x},${c.y}`)) merged.push(c);
    }
    return { ...grid, obstacles: merged };
  }
  if (p.kind === "sensory_occlusion") {
    const cells = (p.params["cells"] as number[][]).map(toCell);
    return { ...grid, occlusion: cells };
  }
  return grid; // physics / reward changes do not alter the drawn grid
}

export function markConnectionLost(vm: ViewModel): ViewModel {
  return { ...vm, connection: "lost" };
}

export function trackDisruption(
  vm: ViewModel,
  cmd: DisruptionCommand,
): ViewModel {
  return {
    ...vm,
    pendingDisruptions: [
      ...vm.pendingDisruptions,
      { kind: cmd.kind, params: cmd.params, status: "pending", detail: "" },
    ],
  };
}

export function trackLabel(vm: ViewModel, trajectoryId: string): ViewModel {
  const timeline = vm.timeline.map((chip) =>
    chip.trajectoryId === trajectoryId ? { ...chip, ackPending: true } : chip,
  );
  return { ...vm, timeline, pendingLabels: [...vm.pendingLabels, trajectoryId] };
}

/** Local echo once the server confirms: chips show who labeled what. */
export function recordLabel(
  vm: ViewModel,
  trajectoryId: string,
  rater: string,
  mode: string,
): ViewModel {
  const timeline = vm.timeline.map((chip) =>
    chip.trajectoryId === trajectoryId
      ? { ...chip, labels: [...chip.labels, { rater, mode }] }
      : chip,
  );
  return { ...vm, timeline };
}
