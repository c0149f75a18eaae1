// Canvas renderer. Ghost paths are stroked with globalAlpha set to exactly
// the served alpha; the live agent is drawn last, fully opaque, in blue.
// Draw2D is the minimal 2D-context surface used, so tests can record calls.

import type { GhostWire } from "./protocol.js";
import type { ViewModel } from "./viewmodel.js";

export interface Draw2D {
  fillStyle: string;
  strokeStyle: string;
  globalAlpha: number;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export interface RenderOptions {
  cellSize: number;
  originX: number;
  originY: number;
}

export const DEFAULT_OPTIONS: RenderOptions = { cellSize: 48, originX: 12, originY: 12 };

export const COLOR_CSS: Record<string, string> = {
  red: "#d7263d",
  grey: "#9aa0a6",
  green: "#1b998b",
};

export const LIVE_AGENT_COLOR = "#2176ff";

export const KIND_LEGEND: Record<GhostWire["kind"], string> = {
  recent: "recent ghost",
  historical: "historical ghost",
  pre_disruption: "pre-disruption ghost",
};

function center(opts: RenderOptions, x: number, y: number): [number, number] {
  return [
    opts.originX + x * opts.cellSize + opts.cellSize / 2,
    opts.originY + y * opts.cellSize + opts.cellSize / 2,
  ];
}

function drawGrid(ctx: Draw2D, vm: ViewModel, opts: RenderOptions): void {
  const grid = vm.grid!;
  const { cellSize, originX, originY } = opts;
  ctx.globalAlpha = 1.0;
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(originX, originY, grid.width * cellSize, grid.height * cellSize);
  ctx.strokeStyle = "#d0d0d0";
  ctx.lineWidth = 1;
  for (let y = 0; y < grid.height; y++) {
    for (let x = 0; x < grid.width; x++) {
      ctx.strokeRect(originX + x * cellSize, originY + y * cellSize, cellSize, cellSize);
    }
  }
  ctx.fillStyle = "#33312e";
  for (const c of grid.obstacles) {
    ctx.fillRect(originX + c.x * cellSize, originY + c.y * cellSize, cellSize, cellSize);
  }
  ctx.globalAlpha = 0.35;
  ctx.fillStyle = "#6b5b95";
  for (const c of grid.occlusion) {
    ctx.fillRect(originX + c.x * cellSize, originY + c.y * cellSize, cellSize, cellSize);
  }
  ctx.globalAlpha = 1.0;
  ctx.fillStyle = "#f4b400";
  ctx.fillRect(
    originX + grid.goal.x * cellSize + 6,
    originY + grid.goal.y * cellSize + 6,
    cellSize - 12,
    cellSize - 12,
  );
  ctx.strokeStyle = "#666666";
  ctx.strokeRect(
    originX + grid.start.x * cellSize + 6,
    originY + grid.start.y * cellSize + 6,
    cellSize - 12,
    cellSize - 12,
  );
}

function drawGhost(ctx: Draw2D, ghost: GhostWire, opts: RenderOptions): void {
  if (ghost.path.length === 0) return;
  ctx.globalAlpha = ghost.alpha; // displayed alpha equals served alpha
  ctx.strokeStyle = COLOR_CSS[ghost.color] ?? ghost.color;
  ctx.lineWidth = 4;
  ctx.beginPath();
  const [x0, y0] = center(opts, ghost.path[0].x, ghost.path[0].y);
  ctx.moveTo(x0, y0);
  for (const cell of ghost.path.slice(1)) {
    const [x, y] = center(opts, cell.x, cell.y);
    ctx.lineTo(x, y); // a looping ghost closes on itself here
  }
  ctx.stroke();
}

function drawAgent(ctx: Draw2D, vm: ViewModel, opts: RenderOptions): void {
  if (!vm.agent) return;
  ctx.globalAlpha = 1.0; // layer 1: the live, fully opaque agent
  ctx.fillStyle = LIVE_AGENT_COLOR;
  const [x, y] = center(opts, vm.agent.cell.x, vm.agent.cell.y);
  ctx.beginPath();
  ctx.arc(x, y, opts.cellSize * 0.32, 0, Math.PI * 2);
  ctx.fill();
}

function drawLegend(ctx: Draw2D, vm: ViewModel, opts: RenderOptions): void {
  const grid = vm.grid!;
  const x = opts.originX + grid.width * opts.cellSize + 18;
  let y = opts.originY + 10;
  ctx.globalAlpha = 1.0;
  ctx.font = "13px sans-serif";
  ctx.fillStyle = LIVE_AGENT_COLOR;
  ctx.fillText("live agent (alpha 1.00)", x, y);
  for (const ghost of vm.ghosts) {
    y += 18;
    ctx.fillStyle = COLOR_CSS[ghost.color] ?? ghost.color;
    ctx.fillText(
      `${KIND_LEGEND[ghost.kind]} (alpha ${ghost.alpha.toFixed(2)})`,
      x,
      y,
    );
  }
}

export function render(
  ctx: Draw2D,
  vm: ViewModel,
  opts: RenderOptions = DEFAULT_OPTIONS,
): void {
  ctx.globalAlpha = 1.0;
  ctx.clearRect(0, 0, 10_000, 10_000);
  if (vm.connection === "lost") {
    ctx.fillStyle = "#b00020";
    ctx.font = "16px sans-serif";
    ctx.fillText("connection lost - attempting to reconnect", 16, 28);
    return;
  }
  if (!vm.grid) {
    ctx.fillStyle = "#444444";
    ctx.font = "14px sans-serif";
    ctx.fillText("waiting for session_hello...", 16, 28);
    return;
  }
  drawGrid(ctx, vm, opts);
  // faintest first so stronger layers sit on top, live agent above all
  const ghosts = [...vm.ghosts].sort((a, b) => a.alpha - b.alpha);
  for (const ghost of ghosts) {
    drawGhost(ctx, ghost, opts);
  }
  drawAgent(ctx, vm, opts);
  drawLegend(ctx, vm, opts);
}
