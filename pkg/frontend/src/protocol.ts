// Wire protocol: newline-delimited JSON, mirrored from the session server.
// The client may only emit messages that pass these guards (malformed input
// is blocked before send), and treats unparseable inbound lines as noise.

export interface Cell {
  x: number;
  y: number;
}

export interface GridConfigWire {
  width: number;
  height: number;
  obstacles: number[][];
  start: number[];
  goal: number[];
  step_penalty: number;
  goal_reward: number;
  max_steps: number;
  reward_sign: number;
  physics: { slip_prob: number; action_permutation: Record<string, string> };
  occlusion: number[][] | null;
}

export interface SessionHello {
  type: "session_hello";
  session_id: string;
  protocol_version: number;
  grid_config: GridConfigWire;
  tick_rate_hz: number;
}

export interface StateUpdate {
  type: "state_update";
  tick: number;
  episode: number;
  agent: Cell;
  last_action: string | null;
  reward: number;
  cumulative_return: number;
  done: boolean;
  done_reason: string;
}

export type GhostKind = "recent" | "historical" | "pre_disruption";

export interface GhostWire {
  id: string;
  kind: GhostKind;
  alpha: number;
  color: string;
  source_episode: number;
  path: Cell[];
}

export interface GhostUpdate {
  type: "ghost_update";
  ghosts: GhostWire[];
}

export interface MetricsUpdate {
  type: "metrics_update";
  episode: number;
  greedy_return: number;
  epsilon: number;
  live_failure_mode: string;
}

export interface DisruptionAck {
  type: "disruption_ack";
  id: string;
  applied_at_tick: number;
}

export interface LabelAck {
  type: "label_ack";
  trajectory_id: string;
}

export interface ErrorMessage {
  type: "error";
  code: "E_PARSE" | "E_VALIDATION" | "E_STATE";
  message: string;
}

export type ServerMessage =
  | SessionHello
  | StateUpdate
  | GhostUpdate
  | MetricsUpdate
  | DisruptionAck
  | LabelAck
  | ErrorMessage;

export type DisruptionKind =
  | "obstacle_placement"
  | "goal_relocation"
  | "physics_alteration"
  | "reward_inversion"
  | "sensory_occlusion";

export interface DisruptionCommand {
  type: "disruption";
  kind: DisruptionKind;
  params: Record<string, unknown>;
  author: string;
}

export interface LabelCommand {
  type: "label";
  trajectory_id: string;
  failure_mode: string;
  rater_id: string;
}

export interface ControlCommand {
  type: "control";
  cmd: "pause" | "resume" | "step" | "set_speed";
  value?: number;
}

export type ClientMessage = DisruptionCommand | LabelCommand | ControlCommand;

// Wording exactly as the label panel shows it: five modes plus None.
export const FAILURE_MODES = [
  "CatatonicCollapse",
  "ManicOscillation",
  "ObsessiveLoop",
  "GradualDrift",
  "PolicyFragmentation",
  "None",
] as const;

export const DISRUPTION_KINDS: DisruptionKind[] = [
  "obstacle_placement",
  "goal_relocation",
  "physics_alteration",
  "reward_inversion",
  "sensory_occlusion",
];

const GHOST_KINDS = new Set(["recent", "historical", "pre_disruption"]);
const ERROR_CODES = new Set(["E_PARSE", "E_VALIDATION", "E_STATE"]);

function isNum(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isInt(v: unknown): v is number {
  return isNum(v) && Number.isInteger(v);
}

function isStr(v: unknown): v is string {
  return typeof v === "string";
}

function isCell(v: unknown): v is Cell {
  const c = v as Cell;
  return !!c && typeof c === "object" && isInt(c.x) && isInt(c.y);
}

function isGhost(v: unknown): v is GhostWire {
  const g = v as GhostWire;
  return (
    !!g &&
    typeof g === "object" &&
    isStr(g.id) &&
    GHOST_KINDS.has(g.kind) &&
    isNum(g.alpha) &&
    isStr(g.color) &&
    isInt(g.source_episode) &&
    Array.isArray(g.path) &&
    g.path.every(isCell)
  );
}

/** Parse one inbound line; null means "not a valid server message". */
export function parseServerLine(line: string): ServerMessage | null {
  let data: any;
  try {
    data = JSON.parse(line);
  } catch {
    return null;
  }
  if (!data || typeof data !== "object") return null;
  switch (data.type) {
    case "session_hello":
      return isStr(data.session_id) &&
        isInt(data.protocol_version) &&
        data.grid_config &&
        typeof data.grid_config === "object" &&
        isNum(data.tick_rate_hz)
        ? (data as SessionHello)
        : null;
    case "state_update":
      return isInt(data.tick) &&
        isInt(data.episode) &&
        isCell(data.agent) &&
        (data.last_action === null || isStr(data.last_action)) &&
        isNum(data.reward) &&
        isNum(data.cumulative_return) &&
        typeof data.done === "boolean" &&
        isStr(data.done_reason)
        ? (data as StateUpdate)
        : null;
    case "ghost_update":
      return Array.isArray(data.ghosts) && data.ghosts.every(isGhost)
        ? (data as GhostUpdate)
        : null;
    case "metrics_update":
      return isInt(data.episode) &&
        isNum(data.greedy_return) &&
        isNum(data.epsilon) &&
        isStr(data.live_failure_mode)
        ? (data as MetricsUpdate)
        : null;
    case "disruption_ack":
      return isStr(data.id) && isInt(data.applied_at_tick)
        ? (data as DisruptionAck)
        : null;
    case "label_ack":
      return isStr(data.trajectory_id) ? (data as LabelAck) : null;
    case "error":
      return ERROR_CODES.has(data.code) && isStr(data.message)
        ? (data as ErrorMessage)
        : null;
    default:
      return null;
  }
}

export class CommandRejected extends Error {}

/** Validate an outbound command against the protocol grammar, then encode. */
export function encodeClientMessage(msg: ClientMessage): string {
  switch (msg.type) {
    case "control": {
      if (!["pause", "resume", "step", "set_speed"].includes(msg.cmd)) {
        throw new CommandRejected(`unknown control cmd ${msg.cmd}`);
      }
      if (msg.cmd === "set_speed" && !isNum(msg.value)) {
        throw new CommandRejected("set_speed needs a numeric value");
      }
      break;
    }
    case "label": {
      if (!msg.trajectory_id) throw new CommandRejected("missing trajectory_id");
      if (!(FAILURE_MODES as readonly string[]).includes(msg.failure_mode)) {
        throw new CommandRejected(`unknown failure mode ${msg.failure_mode}`);
      }
      if (!msg.rater_id) throw new CommandRejected("rater_id is required");
      break;
    }
    case "disruption": {
      if (!DISRUPTION_KINDS.includes(msg.kind)) {
        throw new CommandRejected(`unknown disruption kind ${msg.kind}`);
      }
      if (!msg.params || typeof msg.params !== "object") {
        throw new CommandRejected("params must be an object");
      }
      if (!msg.author) throw new CommandRejected("author is required");
      break;
    }
    default:
      throw new CommandRejected("unknown message type");
  }
  return JSON.stringify(msg);
}
