"""A live session over the wire: the console loop without a browser.

Starts the session server on an ephemeral port, talks the newline-delimited
JSON protocol over a raw TCP socket, and narrates the exchange: hello,
state updates, pause/step control, a goal relocation with its ack, a human
failure-mode label, and the ghost layers that follow.
"""

import json
import socket
import time

from ghostgrid.config import AgentConfig, RunConfig, ServerConfig
from ghostgrid import GridConfig, Hyperparams
from ghostgrid.server import SessionServer


class Console:
    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=5)
        self.buffer = bytearray()

    def send(self, msg):
        print(f">>> {json.dumps(msg)}")
        self.sock.sendall((json.dumps(msg) + "\n").encode())

    def recv(self, timeout=2.0):
        deadline = time.monotonic() + timeout
        while b"\n" not in self.buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(4096)
            except (socket.timeout, OSError):
                return None
            if not chunk:
                return None
            self.buffer.extend(chunk)
        line, _, rest = bytes(self.buffer).partition(b"\n")
        self.buffer = bytearray(rest)
        return json.loads(line)

    def wait_for(self, mtype, quiet=False):
        while True:
            msg = self.recv()
            if msg is None:
                raise RuntimeError(f"no {mtype} received")
            if not quiet or msg["type"] == mtype:
                print(f"<<< {json.dumps(msg)[:110]}")
            if msg["type"] == mtype:
                return msg


def main():
    rc = RunConfig(
        environment=GridConfig(width=6, height=6, start=(0, 0), goal=(5, 5),
                               max_steps=25),
        agent=AgentConfig(hyperparams=Hyperparams(epsilon_decay_episodes=60),
                          snapshot_interval=5),
        server=ServerConfig(port=0, tick_rate_hz=60, seed=4),
    )
    server = SessionServer(rc, port=0)
    server.start()
    print(f"session server listening on 127.0.0.1:{server.port}\n")
    try:
        console = Console(server.port)
        console.wait_for("session_hello")
        console.wait_for("state_update", quiet=True)

        print("\n-- watch a couple of episodes finish --")
        console.wait_for("metrics_update", quiet=True)
        console.wait_for("ghost_update", quiet=True)

        print("\n-- pause, then relocate the goal --")
        console.send({"type": "control", "cmd": "pause"})
        time.sleep(0.2)
        console.send({"type": "disruption", "kind": "goal_relocation",
                      "params": {"new_goal": [0, 5]}, "author": "demo-operator"})
        console.send({"type": "control", "cmd": "resume"})
        console.wait_for("disruption_ack", quiet=True)

        print("\n-- label the first recorded episode --")
        console.send({"type": "label", "trajectory_id": "t000001",
                      "failure_mode": "ObsessiveLoop", "rater_id": "demo-operator"})
        console.wait_for("label_ack", quiet=True)

        print("\n-- ghosts now include a green pre-disruption layer --")
        while True:
            msg = console.wait_for("ghost_update", quiet=True)
            kinds = [g["kind"] for g in msg["ghosts"]]
            if "pre_disruption" in kinds:
                for g in msg["ghosts"]:
                    print(f"    {g['kind']:15s} alpha={g['alpha']:.2f} "
                          f"color={g['color']} path length {len(g['path'])}")
                break
    finally:
        server.stop()
    print("\nsession stopped.")


if __name__ == "__main__":
    main()
