// Browser entry point: wires the client, view model, renderer, disruption
// palette and label panel to the DOM. No simulation happens here; the
// canvas redraws whatever the server last said.

import { ConsoleClient } from "./client.js";
import { labelMessage, LABEL_BUTTONS } from "./labels.js";
import {
  goalMoveMessage,
  obstacleBrushMessage,
  occlusionBrushMessage,
  physicsMessage,
  rewardInvertMessage,
} from "./palette.js";
import { CommandRejected, DisruptionCommand } from "./protocol.js";
import { DEFAULT_OPTIONS, render } from "./renderer.js";
import {
  applyServerMessage,
  initialViewModel,
  markConnectionLost,
  recordLabel,
  trackDisruption,
  trackLabel,
  ViewModel,
} from "./viewmodel.js";

type Tool = "obstacle" | "goal" | "occlusion" | null;

let vm: ViewModel = initialViewModel();
let client: ConsoleClient | null = null;
let activeTool: Tool = null;
let occlusionCells: { x: number; y: number }[] = [];
let selectedChip: string | null = null;

const $ = (id: string) => document.getElementById(id)!;
const canvas = () => $("grid") as HTMLCanvasElement;

function raterId(): string {
  return ($("rater") as HTMLInputElement).value;
}

function setStatus(text: string): void {
  $("status").textContent = text;
}

function notice(text: string, isError = false): void {
  const el = $("notice");
  el.textContent = text;
  el.className = isError ? "notice error" : "notice";
}

function sendDisruption(build: () => DisruptionCommand): void {
  try {
    const cmd = build();
    vm = trackDisruption(vm, cmd);
    client?.send(cmd);
    notice(`sent ${cmd.kind}`);
  } catch (err) {
    if (err instanceof CommandRejected) {
      notice(err.message, true);
    } else {
      throw err;
    }
  }
  redraw();
}

function cellAt(ev: MouseEvent): { x: number; y: number } | null {
  if (!vm.grid) return null;
  const rect = canvas().getBoundingClientRect();
  const px = ev.clientX - rect.left - DEFAULT_OPTIONS.originX;
  const py = ev.clientY - rect.top - DEFAULT_OPTIONS.originY;
  const x = Math.floor(px / DEFAULT_OPTIONS.cellSize);
  const y = Math.floor(py / DEFAULT_OPTIONS.cellSize);
  if (x < 0 || y < 0 || x >= vm.grid.width || y >= vm.grid.height) return null;
  return { x, y };
}

function onCanvasClick(ev: MouseEvent): void {
  const cell = cellAt(ev);
  if (!cell) return;
  if (activeTool === "obstacle") {
    sendDisruption(() => obstacleBrushMessage([cell], raterId() || "operator"));
  } else if (activeTool === "goal") {
    sendDisruption(() => goalMoveMessage(cell, raterId() || "operator"));
  } else if (activeTool === "occlusion") {
    occlusionCells.push(cell);
    notice(`occlusion brush: ${occlusionCells.length} cell(s); click apply`);
  }
}

function redraw(): void {
  const ctx = canvas().getContext("2d");
  if (ctx) render(ctx as unknown as Parameters<typeof render>[0], vm);
  renderTimeline();
  renderMetrics();
  renderPending();
}

function renderMetrics(): void {
  const m = vm.metrics;
  $("metrics").textContent = m
    ? `episode ${m.episode}  greedy return ${m.greedyReturn.toFixed(2)}  ` +
      `epsilon ${m.epsilon.toFixed(2)}  live failure mode: ${m.liveFailureMode}`
    : "no completed episodes yet";
  const a = vm.agent;
  $("agent").textContent = a
    ? `tick ${a.tick}  episode ${a.episode}  agent (${a.cell.x}, ${a.cell.y})  ` +
      `return ${a.cumulativeReturn.toFixed(2)}`
    : "";
}

function renderPending(): void {
  const last = vm.pendingDisruptions[vm.pendingDisruptions.length - 1];
  if (last && last.status === "rejected") {
    notice(last.detail, true); // server's reason, verbatim
  }
}

function renderTimeline(): void {
  const strip = $("timeline");
  strip.innerHTML = "";
  for (const chip of vm.timeline) {
    const el = document.createElement("button");
    el.className =
      "chip" +
      (chip.trajectoryId === selectedChip ? " selected" : "") +
      (chip.labels.length > 0 ? " labeled" : "") +
      (chip.ackPending ? " pending" : "");
    const marks = chip.labels.map((l) => `${l.rater}:${l.mode}`).join(", ");
    el.textContent = `#${chip.episode} ${chip.failureMode}${marks ? " [" + marks + "]" : ""}`;
    el.onclick = () => {
      selectedChip = chip.trajectoryId;
      renderTimeline();
    };
    strip.appendChild(el);
  }
}

function buildLabelButtons(): void {
  const panel = $("labels");
  for (const mode of LABEL_BUTTONS) {
    const button = document.createElement("button");
    button.textContent = mode;
    button.onclick = () => {
      const chip = vm.timeline.find((c) => c.trajectoryId === selectedChip);
      if (!chip) {
        notice("select a finished episode on the timeline first", true);
        return;
      }
      try {
        const cmd = labelMessage(chip, mode, raterId());
        vm = trackLabel(vm, chip.trajectoryId);
        vm = recordLabel(vm, chip.trajectoryId, cmd.rater_id, mode);
        client?.send(cmd);
        notice(`labeled ${chip.trajectoryId} as ${mode}`);
      } catch (err) {
        if (err instanceof CommandRejected) notice(err.message, true);
        else throw err;
      }
      redraw();
    };
    panel.appendChild(button);
  }
}

async function connect(): Promise<void> {
  const url = ($("url") as HTMLInputElement).value;
  client = new ConsoleClient(url);
  client.onmessage = (msg) => {
    vm = applyServerMessage(vm, msg);
    if (msg.type === "error") notice(`${msg.code}: ${msg.message}`, true);
    redraw();
  };
  client.onstatus = (status) => {
    if (status === "lost") {
      vm = markConnectionLost(vm);
      setStatus("disconnected");
      redraw();
    } else {
      setStatus(`connected to ${url}`);
    }
  };
  vm = initialViewModel();
  setStatus("connecting...");
  await client.connect();
}

function wireControls(): void {
  $("connect").onclick = () => {
    connect().catch((err) => notice(String(err), true));
  };
  $("pause").onclick = () => client?.send({ type: "control", cmd: "pause" });
  $("resume").onclick = () => client?.send({ type: "control", cmd: "resume" });
  $("step").onclick = () => client?.send({ type: "control", cmd: "step" });
  $("speed").onchange = () => {
    const value = Number(($("speed") as HTMLInputElement).value);
    client?.send({ type: "control", cmd: "set_speed", value });
  };

  const pick = (tool: Tool, label: string) => () => {
    activeTool = activeTool === tool ? null : tool;
    occlusionCells = [];
    notice(activeTool ? `${label}: click cells on the grid` : "tool cleared");
  };
  $("tool-obstacle").onclick = pick("obstacle", "obstacle brush");
  $("tool-goal").onclick = pick("goal", "goal mover");
  $("tool-occlusion").onclick = pick("occlusion", "occlusion brush");
  $("tool-occlusion-apply").onclick = () => {
    const cells = occlusionCells;
    occlusionCells = [];
    sendDisruption(() => occlusionBrushMessage(cells, raterId() || "operator"));
  };
  $("tool-reward").onclick = () =>
    sendDisruption(() => rewardInvertMessage(raterId() || "operator"));
  $("slip").onchange = () => {
    const slip = Number(($("slip") as HTMLInputElement).value);
    sendDisruption(() => physicsMessage({ slipProb: slip }, raterId() || "operator"));
  };
  canvas().addEventListener("click", onCanvasClick);
}

export function start(): void {
  buildLabelButtons();
  wireControls();
  redraw();
  setInterval(redraw, 100); // passive refresh; all state comes from messages
}

if (typeof document !== "undefined" && document.getElementById("grid")) {
  start();
}
