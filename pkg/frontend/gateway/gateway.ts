// TCP <-> WebSocket gateway. The session server speaks newline-delimited
// JSON over plain TCP; browsers cannot open raw sockets, so each WebSocket
// connection gets its own TCP bridge. One line per WebSocket frame.

import net from "node:net";
import { WebSocketServer, WebSocket } from "ws";

export interface GatewayOptions {
  listenPort: number; // 0 picks an ephemeral port
  backendHost: string;
  backendPort: number;
}

export interface Gateway {
  port: number;
  close(): Promise<void>;
}

export function startGateway(opts: GatewayOptions): Promise<Gateway> {
  return new Promise((resolve, reject) => {
    const wss = new WebSocketServer({ port: opts.listenPort, host: "127.0.0.1" });
    wss.on("error", reject);
    wss.on("listening", () => {
      const address = wss.address();
      const port = typeof address === "object" && address ? address.port : opts.listenPort;
      resolve({
        port,
        close: () =>
          new Promise<void>((done) => {
            for (const client of wss.clients) client.terminate();
            wss.close(() => done());
          }),
      });
    });

    wss.on("connection", (ws: WebSocket) => {
      const tcp = net.connect(opts.backendPort, opts.backendHost);
      tcp.setNoDelay(true);
      let buffer = "";

      tcp.on("data", (chunk) => {
        buffer += chunk.toString("utf-8");
        let idx: number;
        while ((idx = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, idx);
          buffer = buffer.slice(idx + 1);
          if (line.trim() && ws.readyState === WebSocket.OPEN) {
            ws.send(line);
          }
        }
      });
      tcp.on("error", () => ws.close(1011, "backend unreachable"));
      tcp.on("close", () => ws.close(1000, "backend closed"));

      ws.on("message", (data) => {
        const text = data.toString();
        tcp.write(text.endsWith("\n") ? text : text + "\n");
      });
      ws.on("close", () => tcp.destroy());
      ws.on("error", () => tcp.destroy());
    });
  });
}

// Standalone entry: node dist/gateway/gateway.js --listen 8080 --backend 127.0.0.1:7777
function parseArgs(argv: string[]): GatewayOptions {
  let listenPort = 8080;
  let backendHost = "127.0.0.1";
  let backendPort = 7777;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--listen") listenPort = Number(argv[++i]);
    if (argv[i] === "--backend") {
      const [host, port] = argv[++i].split(":");
      backendHost = host || backendHost;
      backendPort = Number(port);
    }
  }
  return { listenPort, backendHost, backendPort };
}

const isMain =
  typeof process !== "undefined" && process.argv[1]?.endsWith("gateway.js");
if (isMain) {
  const opts = parseArgs(process.argv.slice(2));
  startGateway(opts).then((gw) => {
    console.log(
      `gateway ws://127.0.0.1:${gw.port} -> tcp://${opts.backendHost}:${opts.backendPort}`,
    );
  });
}
