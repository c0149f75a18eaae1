// Scripted console-loop test against the real backend: spawns the Python
// session server, bridges through the real gateway, and drives the actual
// browser client modules end to end.

import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import WebSocket from "ws";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConsoleClient } from "../src/client.js";
import { startGateway, Gateway } from "../gateway/gateway.js";
import { goalMoveMessage } from "../src/palette.js";
import { labelMessage } from "../src/labels.js";
import type { ServerMessage, StateUpdate } from "../src/protocol.js";
import { render } from "../src/renderer.js";
import {
  applyServerMessage,
  initialViewModel,
  trackDisruption,
  trackLabel,
  ViewModel,
} from "../src/viewmodel.js";

const TICK_HZ = 10;

function makeConfig(dataDir: string) {
  return {
    schema_version: 1,
    environment: {
      width: 6, height: 6, start: [0, 0], goal: [5, 5], max_steps: 12,
    },
    agent: { epsilon_decay_episodes: 40, snapshot_interval: 2 },
    server: { port: 0, tick_rate_hz: TICK_HZ, seed: 9 },
    paths: { data_dir: dataDir }, // keep server output inside the tmp dir
  };
}

let serverProc: ChildProcess;
let gateway: Gateway;
let client: ConsoleClient;
let vm: ViewModel;
const inbox: ServerMessage[] = [];
const waiters: { pred: (m: ServerMessage) => boolean; resolve: (m: ServerMessage) => void }[] = [];

function deliver(msg: ServerMessage) {
  vm = applyServerMessage(vm, msg);
  inbox.push(msg);
  for (let i = waiters.length - 1; i >= 0; i--) {
    if (waiters[i].pred(msg)) {
      const [w] = waiters.splice(i, 1);
      w.resolve(msg);
    }
  }
}

function waitFor<T extends ServerMessage>(
  pred: (m: ServerMessage) => boolean,
  timeoutMs = 20_000,
): Promise<T> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error(`timeout waiting for message (saw ${inbox.length})`)),
      timeoutMs,
    );
    waiters.push({
      pred,
      resolve: (m) => {
        clearTimeout(timer);
        resolve(m as T);
      },
    });
  });
}

function startBackend(): Promise<{ proc: ChildProcess; port: number }> {
  const dir = mkdtempSync(join(tmpdir(), "ghostgrid-console-"));
  const configPath = join(dir, "config.json");
  writeFileSync(configPath, JSON.stringify(makeConfig(join(dir, "data"))));
  const proc = spawn(
    "python3",
    ["-m", "ghostgrid.cli", "serve", "--config", configPath, "--port", "0"],
    {
      stdio: ["ignore", "pipe", "pipe"],
      env: { ...process.env, PYTHONUNBUFFERED: "1" },
    },
  );
  return new Promise((resolve, reject) => {
    let out = "";
    const timer = setTimeout(
      () => reject(new Error(`server did not announce a port: ${out}`)),
      20_000,
    );
    proc.stdout!.on("data", (chunk) => {
      out += String(chunk);
      const m = out.match(/listening on [\d.]+:(\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve({ proc, port: Number(m[1]) });
      }
    });
    proc.stderr!.on("data", (chunk) => {
      out += String(chunk);
    });
    proc.on("exit", (code) => reject(new Error(`server exited ${code}: ${out}`)));
  });
}

class RecordingContext {
  fillStyle = "";
  strokeStyle = "";
  globalAlpha = 1;
  lineWidth = 1;
  font = "";
  strokes: number[] = [];
  clearRect() {}
  fillRect() {}
  strokeRect() {}
  beginPath() {}
  moveTo() {}
  lineTo() {}
  stroke() { this.strokes.push(this.globalAlpha); }
  arc() {}
  fill() {}
  fillText() {}
}

beforeAll(async () => {
  const backend = await startBackend();
  serverProc = backend.proc;
  gateway = await startGateway({
    listenPort: 0,
    backendHost: "127.0.0.1",
    backendPort: backend.port,
  });
  vm = initialViewModel();
  client = new ConsoleClient(`ws://127.0.0.1:${gateway.port}`, {
    factory: (url) => new WebSocket(url) as never,
  });
  client.onmessage = deliver;
  await client.connect();
}, 40_000);

afterAll(async () => {
  client?.close();
  await gateway?.close();
  serverProc?.kill("SIGINT");
});

describe("console loop against a live session", () => {
  it("connects and observes at least 10 state updates", async () => {
    await waitFor((m) => m.type === "session_hello");
    expect(vm.grid?.width).toBe(6);
    await waitFor((m) => m.type === "state_update" && vm.stateUpdates >= 10);
    expect(vm.stateUpdates).toBeGreaterThanOrEqual(10);
    expect(client.badLines).toBe(0);
  }, 30_000);

  it("drags the goal and is acked within one tick", async () => {
    const cmd = goalMoveMessage({ x: 0, y: 5 }, "console-test");
    vm = trackDisruption(vm, cmd);
    const before = inbox.length;
    const ackPromise = waitFor((m) => m.type === "disruption_ack");
    client.send(cmd);
    const t0 = Date.now();
    await ackPromise;
    const elapsed = Date.now() - t0;
    // disruptions apply immediately before the next environment step: at
    // most one state_update may slip in between send and ack
    const ackIndex = inbox.slice(before).findIndex((m) => m.type === "disruption_ack");
    const updatesBeforeAck = inbox
      .slice(before, before + ackIndex)
      .filter((m) => m.type === "state_update").length;
    expect(updatesBeforeAck).toBeLessThanOrEqual(1);
    expect(elapsed).toBeLessThanOrEqual(1000 / TICK_HZ + 150); // tick + slack
    expect(vm.grid?.goal).toEqual({ x: 0, y: 5 }); // marker moved after ack
  }, 30_000);

  it("labels a finished episode from the timeline and gets acked", async () => {
    await waitFor((m) => m.type === "metrics_update");
    const chip = vm.timeline[vm.timeline.length - 1];
    const cmd = labelMessage(chip, "ObsessiveLoop", "console-test");
    vm = trackLabel(vm, chip.trajectoryId);
    const ack = waitFor(
      (m) => m.type === "label_ack" && m.trajectory_id === chip.trajectoryId,
    );
    client.send(cmd);
    await ack;
    const updated = vm.timeline.find((c) => c.trajectoryId === chip.trajectoryId);
    expect(updated?.ackPending).toBe(false);
  }, 30_000);

  it("renders ghost layers at exactly the served alphas", async () => {
    const update = await waitFor<Extract<ServerMessage, { type: "ghost_update" }>>(
      (m) => m.type === "ghost_update" && m.ghosts.length > 0,
    );
    const ctx = new RecordingContext();
    render(ctx as never, vm);
    const served = vm.ghosts.map((g) => g.alpha).sort();
    const drawn = ctx.strokes.filter((a) => a !== 1).sort();
    expect(drawn).toEqual(served);
    expect(update.ghosts.length).toBeGreaterThan(0);
  }, 30_000);
});
