"""Live session server.

One authoritative simulation loop steps the agent at the configured tick
rate and broadcasts state over plain TCP, one JSON message per line. Client
reader threads funnel inbound commands through a single ordered queue;
control and label commands apply between steps, disruptions apply
immediately before the next environment step (so a disruption sent while
paused lands at the first step after resume). Slow or dead clients are
disconnected rather than ever blocking the tick loop.
"""

from __future__ import annotations

import queue
import random
import socket
import sys
import threading
import time
import traceback
from pathlib import Path
from typing import Optional

from .agent import QTable, epsilon_at, snapshot_policy, update
from .config import RunConfig
from .disruptions import (
    DisruptionJournal,
    apply_disruption,
    kind_from_wire,
    make_disruption,
    mark_applied,
    validate,
)
from .dualloop import conditioned_action
from .env import State, grid_config_to_dict, step, validate_config
from .errors import BindError, GhostgridError, ParseError, StateError, ValidationError
from .ghosts import (
    GhostDatabase,
    LABELS_FILE,
    Trajectory,
    greedy_rollout,
    make_trajectory,
    persist,
    spawn_ghosts,
)
from .protocol import PROTOCOL_VERSION, encode_message, parse_line
from .taxonomy import FailureMode, classify, failure_mode_from_wire, metrics_with_drift

MAX_LINE_BYTES = 1 << 20
OUTBOX_LIMIT = 512
# Kernel-side bound per client connection; None keeps the OS default. The
# application-level outbox only overflows once this fills, so shrinking it
# makes slow-client eviction prompt.
SNDBUF_BYTES: Optional[int] = None

RUNNING = "running"
PAUSED = "paused"


class _Client:
    def __init__(self, conn: socket.socket, addr) -> None:
        self.conn = conn
        self.addr = addr
        self.outbox: queue.Queue = queue.Queue(maxsize=OUTBOX_LIMIT)
        self.closed = threading.Event()

    def close(self) -> None:
        self.closed.set()
        try:
            self.conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.conn.close()
        except OSError:
            pass


class SessionServer:
    """Runs one session: simulation thread plus per-client I/O threads."""

    def __init__(
        self,
        rc: RunConfig,
        host: str = "127.0.0.1",
        port: Optional[int] = None,
        data_dir: Optional[str] = None,
    ) -> None:
        validate_config(rc.environment)
        self.rc = rc
        self.host = host
        self.port = rc.server.port if port is None else port
        self.data_dir = Path(data_dir) if data_dir is not None else None

        self.config = rc.environment
        self.q = QTable()
        self.db = GhostDatabase()
        journal_path = self.data_dir / "disruptions.jsonl" if self.data_dir else None
        self.journal = DisruptionJournal(journal_path)
        seed = rc.server.seed
        self._env_rng = random.Random(f"{seed}/env")
        self._explore_rng = random.Random(f"{seed}/explore")

        self.mode = RUNNING
        self.tick_rate_hz = rc.server.tick_rate_hz
        self.episode = 0
        self.state = State(self.config.start, 0, 0)
        self._transitions: list = []
        self._cumulative = 0.0
        self._step_requests = 0
        self._drift_reference: Optional[Trajectory] = None
        self._post_disruption: list[Trajectory] = []

        self._commands: queue.Queue = queue.Queue()
        self._pending_disruptions: list[tuple[Optional[_Client], dict]] = []
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._listener: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            listener.bind((self.host, self.port))
            listener.listen(16)
        except OSError as exc:
            listener.close()
            raise BindError(f"cannot listen on {self.host}:{self.port}: {exc}") from exc
        # Closing a socket does not wake a thread blocked in accept(), so the
        # accept loop polls.
        listener.settimeout(0.2)
        self._listener = listener
        self.port = listener.getsockname()[1]
        for target in (self._accept_loop, self._sim_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        for t in self._threads:
            t.join(timeout=5.0)
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            client.close()
        if self.data_dir is not None:
            persist(self.db, self.data_dir)

    def run_forever(self) -> None:
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    @property
    def alive(self) -> bool:
        return not self._stop.is_set() and all(t.is_alive() for t in self._threads)

    # -- client I/O ----------------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            if SNDBUF_BYTES is not None:
                conn.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, SNDBUF_BYTES)
            client = _Client(conn, addr)
            with self._clients_lock:
                self._clients.append(client)
            threading.Thread(target=self._writer_loop, args=(client,), daemon=True).start()
            threading.Thread(target=self._reader_loop, args=(client,), daemon=True).start()
            self._send(
                client,
                {
                    "type": "session_hello",
                    "session_id": self.rc.server.session_id,
                    "protocol_version": PROTOCOL_VERSION,
                    "grid_config": grid_config_to_dict(self.config),
                    "tick_rate_hz": self.tick_rate_hz,
                },
            )

    def _reader_loop(self, client: _Client) -> None:
        f = client.conn.makefile("rb")
        try:
            while not self._stop.is_set() and not client.closed.is_set():
                raw = f.readline(MAX_LINE_BYTES + 1)
                if not raw:
                    break
                if len(raw) > MAX_LINE_BYTES:
                    self._send_error(client, "E_PARSE", "line too long")
                    break
                text = raw.decode("utf-8", errors="replace").strip()
                if not text:
                    continue
                try:
                    msg = parse_line(text)
                except ParseError as exc:
                    self._send_error(client, "E_PARSE", str(exc))
                    continue
                self._commands.put((client, msg))
        except OSError:
            pass
        finally:
            self._drop(client)

    def _writer_loop(self, client: _Client) -> None:
        while not client.closed.is_set():
            try:
                line = client.outbox.get(timeout=0.2)
            except queue.Empty:
                continue
            if line is None:
                break
            try:
                client.conn.sendall(line.encode("utf-8") + b"\n")
            except OSError:
                break
        client.close()

    def _send(self, client: Optional[_Client], msg: dict) -> None:
        if client is None or client.closed.is_set():
            return
        line = encode_message(msg)
        try:
            client.outbox.put_nowait(line)
        except queue.Full:
            # Bounded buffering: a client that cannot keep up is dropped.
            self._kick(client, "outbound buffer overflow")

    def _send_error(self, client: Optional[_Client], code: str, message: str) -> None:
        self._send(client, {"type": "error", "code": code, "message": message})

    def _kick(self, client: _Client, why: str) -> None:
        def farewell() -> None:
            try:
                client.conn.settimeout(0.2)
                line = encode_message({"type": "error", "code": "E_STATE", "message": why})
                client.conn.sendall(line.encode("utf-8") + b"\n")
            except OSError:
                pass
            client.close()

        threading.Thread(target=farewell, daemon=True).start()
        self._drop(client)

    def _drop(self, client: _Client) -> None:
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)
        client.closed.set()
        try:
            client.outbox.put_nowait(None)
        except queue.Full:
            pass

    def _broadcast(self, msg: dict) -> None:
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            self._send(client, msg)

    # -- simulation ----------------------------------------------------------

    def _sim_loop(self) -> None:
        next_tick = time.monotonic()
        while not self._stop.is_set():
            try:
                self._drain_commands()
                if self.mode == RUNNING or self._step_requests > 0:
                    if self._step_requests > 0:
                        self._step_requests -= 1
                    self._apply_pending_disruptions()
                    self._advance()
            except Exception:  # pragma: no cover - never halt the simulation
                traceback.print_exc(file=sys.stderr)
            period = 1.0 / self.tick_rate_hz
            next_tick += period
            now = time.monotonic()
            if next_tick <= now:
                next_tick = now
            else:
                self._stop.wait(next_tick - now)

    def _drain_commands(self) -> None:
        while True:
            try:
                client, msg = self._commands.get_nowait()
            except queue.Empty:
                return
            try:
                self._dispatch(client, msg)
            except GhostgridError as exc:
                code = exc.code if exc.code in ("E_VALIDATION", "E_STATE", "E_PARSE") else "E_STATE"
                self._send_error(client, code, str(exc))
            except Exception as exc:  # pragma: no cover
                traceback.print_exc(file=sys.stderr)
                self._send_error(client, "E_STATE", f"internal error: {exc}")

    def _dispatch(self, client: Optional[_Client], msg: dict) -> None:
        mtype = msg["type"]
        if mtype == "control":
            self._handle_control(client, msg)
        elif mtype == "label":
            self._handle_label(client, msg)
        elif mtype == "disruption":
            self._pending_disruptions.append((client, msg))
        else:
            self._send_error(client, "E_PARSE", f"unexpected message type {mtype!r}")

    def _handle_control(self, client: Optional[_Client], msg: dict) -> None:
        cmd = msg["cmd"]
        if cmd == "pause":
            self.mode = PAUSED
        elif cmd == "resume":
            self.mode = RUNNING
        elif cmd == "step":
            if self.mode == PAUSED:
                self._step_requests += 1
        elif cmd == "set_speed":
            value = msg.get("value")
            if value is None or not 1.0 <= float(value) <= 120.0:
                raise ValidationError(f"set_speed value must be in [1, 120], got {value!r}")
            self.tick_rate_hz = float(value)

    def _handle_label(self, client: Optional[_Client], msg: dict) -> None:
        mode = failure_mode_from_wire(msg["failure_mode"])
        tid = msg["trajectory_id"]
        if not self.db.has_trajectory(tid):
            raise StateError(f"unknown trajectory id {tid!r}")
        record = self.db.add_label(tid, msg["rater_id"], mode, unix_ts=time.time())
        if self.data_dir is not None:
            self._append_label_line(record)
        self._send(client, {"type": "label_ack", "trajectory_id": tid})

    def _append_label_line(self, record) -> None:
        path = self.data_dir / LABELS_FILE
        try:
            new = not path.exists()
            self.data_dir.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8", newline="") as f:
                if new:
                    f.write("trajectory_id,rater_id,failure_mode,unix_ts\n")
                f.write(
                    f"{record.trajectory_id},{record.rater_id},"
                    f"{record.failure_mode.value},{record.unix_ts}\n"
                )
        except OSError as exc:  # pragma: no cover
            print(f"label append failed: {exc}", file=sys.stderr)

    def _apply_pending_disruptions(self) -> None:
        pending, self._pending_disruptions = self._pending_disruptions, []
        for client, msg in pending:
            try:
                kind = kind_from_wire(msg["kind"])
                d = make_disruption(self.journal.new_id(), kind, msg["params"], msg["author"])
                validate(d, self.config, agent=self.state.agent)
            except ValidationError as exc:
                reason = f" ({exc.reason})" if exc.reason else ""
                self._send_error(client, "E_VALIDATION", f"{exc}{reason}")
                continue
            pre_snap = snapshot_policy(
                self.q,
                self.episode,
                self.db.new_snapshot_id(),
                pre_disruption=True,
                disruption_id_before=(
                    self.journal.entries[-1].disruption.id if self.journal.entries else None
                ),
            )
            self.db.add_snapshot(pre_snap)
            new_config = apply_disruption(self.config, d, agent=self.state.agent)
            stamped = mark_applied(d, self.episode, self.state.tick)
            self.journal.log(stamped, self.config)
            self._drift_reference = greedy_rollout(
                pre_snap, self.config, State(self.config.start, 0, self.episode)
            )
            self._post_disruption = []
            self.config = new_config
            self._send(
                client,
                {
                    "type": "disruption_ack",
                    "id": stamped.id,
                    "applied_at_tick": stamped.applied_at_tick,
                },
            )

    def _advance(self) -> None:
        occluded = self.config.goal_direction_occluded()
        eps = epsilon_at(self.rc.agent.hyperparams, self.episode)
        action = conditioned_action(
            self.q, self.state, self.db, self.rc.dual_loop, eps, self._explore_rng, occluded
        )
        tr = step(self.config, self.state, action, self._env_rng)
        update(self.q, tr, self.rc.agent.hyperparams, occluded)
        self._transitions.append(tr)
        self._cumulative += tr.r
        self.state = tr.s_next
        self._broadcast(
            {
                "type": "state_update",
                "tick": tr.s_next.tick,
                "episode": self.episode,
                "agent": {"x": tr.s_next.agent[0], "y": tr.s_next.agent[1]},
                "last_action": tr.a.wire,
                "reward": tr.r,
                "cumulative_return": self._cumulative,
                "done": tr.done,
                "done_reason": tr.done_reason,
            }
        )
        if tr.done:
            self._finish_episode()

    def _finish_episode(self) -> None:
        traj = make_trajectory(
            self.episode, self._transitions, disruptions_active=self.journal.active_ids()
        )
        tid = self.db.record_episode(traj)
        stored = self.db.get(tid)

        if self._drift_reference is not None:
            self._post_disruption.append(stored)
        window = self._post_disruption[-self.rc.taxonomy.drift_window_episodes:]
        metrics = metrics_with_drift(stored, window, self._drift_reference, self.rc.taxonomy)
        live_mode = classify(metrics, self.rc.taxonomy)
        if self.rc.server.auto_label and live_mode is not FailureMode.NONE:
            record = self.db.add_label(tid, "auto", live_mode, unix_ts=time.time())
            if self.data_dir is not None:
                self._append_label_line(record)

        next_episode = self.episode + 1
        if next_episode % self.rc.agent.snapshot_interval == 0:
            self.db.add_snapshot(
                snapshot_policy(
                    self.q,
                    next_episode,
                    self.db.new_snapshot_id(),
                    pre_disruption=not self.journal.entries,
                    disruption_id_before=(
                        self.journal.entries[-1].disruption.id
                        if self.journal.entries
                        else None
                    ),
                )
            )

        start_next = State(self.config.start, 0, next_episode)
        greedy_return = greedy_rollout(self.q, self.config, start_next).total_return
        ghosts = spawn_ghosts(self.db, self.config, start_next, self.rc.layers, self.journal)
        self._broadcast(
            {
                "type": "ghost_update",
                "ghosts": [
                    {
                        "id": g.id,
                        "kind": g.kind.value,
                        "alpha": g.alpha,
                        "color": g.color_tag,
                        "source_episode": self.db.get_snapshot(g.source_snapshot_id).episode_index,
                        "path": [{"x": c[0], "y": c[1]} for c in g.trajectory.path()],
                    }
                    for g in ghosts
                ],
            }
        )
        self._broadcast(
            {
                "type": "metrics_update",
                "episode": self.episode,
                "greedy_return": greedy_return,
                "epsilon": epsilon_at(self.rc.agent.hyperparams, self.episode),
                "live_failure_mode": live_mode.value,
            }
        )
        self.episode = next_episode
        self.state = start_next
        self._transitions = []
        self._cumulative = 0.0


def run_session(rc: RunConfig, host: str = "127.0.0.1", port: Optional[int] = None,
                data_dir: Optional[str] = None) -> None:
    """Run a session until interrupted (the CLI `serve` entry point)."""
    server = SessionServer(rc, host=host, port=port, data_dir=data_dir)
    server.start()
    print(f"session {rc.server.session_id} listening on {host}:{server.port}")
    try:
        while not server._stop.is_set():
            time.sleep(0.2)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
