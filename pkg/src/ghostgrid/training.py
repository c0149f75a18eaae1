"""Headless training loop shared by the CLI, the experiment harness and the
acceptance suite.

Per episode boundary: periodic policy snapshot, scheduled disruptions (each
preceded by an immediate pre-disruption snapshot), optional ghost spawning,
then the training episode itself, trajectory recording, optional
auto-labeling and a slip-free greedy evaluation rollout. Random streams are
split per concern (environment vs. exploration) so paired experiment arms
stay aligned.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .agent import (
    Hyperparams,
    QTable,
    epsilon_at,
    select_action,
    snapshot_policy,
    update,
)
from .disruptions import (
    DisruptionJournal,
    ScheduledDisruption,
    apply_disruption,
    log_disruption,
    make_disruption,
    mark_applied,
)
from .dualloop import PenaltyConfig, conditioned_action, trajectory_log_digest
from .env import GridConfig, State, step, validate_config
from .errors import ConfigError
from .ghosts import (
    Ghost,
    GhostDatabase,
    LayerConfig,
    Trajectory,
    dumps_line,
    greedy_rollout,
    make_trajectory,
    spawn_ghosts,
    trajectory_to_dict,
)
from .taxonomy import FailureMode, Thresholds, classify, metrics_with_drift


@dataclass
class TrainResult:
    db: GhostDatabase
    journal: DisruptionJournal
    q: QTable
    config: GridConfig  # config in force after the last episode
    curve: list[float]  # per-episode greedy-evaluation returns
    trajectory_log_sha256: str
    ghosts_by_episode: list[list[Ghost]] = field(default_factory=list)


def run_training(
    config: GridConfig,
    h: Hyperparams,
    episodes: int,
    seed: int,
    *,
    snapshot_interval: int = 10,
    schedule: Sequence[ScheduledDisruption] = (),
    penalty: Optional[PenaltyConfig] = None,
    thresholds: Thresholds = Thresholds(),
    auto_label: bool = True,
    layers: Optional[LayerConfig] = None,
    journal_path=None,
) -> TrainResult:
    """Train a fresh agent for ``episodes`` episodes.

    ``penalty=None`` trains the plain epsilon-greedy baseline; a
    PenaltyConfig switches action selection to the ghost-conditioned dual
    loop. With ``layers`` set, the ghost layers are spawned at every episode
    boundary and returned for inspection.
    """
    validate_config(config)
    if episodes < 1:
        raise ConfigError(f"episodes must be >= 1, got {episodes}")
    if snapshot_interval < 1:
        raise ConfigError(f"snapshot_interval must be >= 1, got {snapshot_interval}")

    env_rng = random.Random(f"{seed}/env")
    explore_rng = random.Random(f"{seed}/explore")
    db = GhostDatabase()
    journal = DisruptionJournal(journal_path)
    q = QTable()
    cur = config
    pending = sorted(schedule, key=lambda sd: sd.episode)
    next_scheduled = 0
    curve: list[float] = []
    ghosts_by_episode: list[list[Ghost]] = []
    log_lines: list[str] = []
    # Cross-episode drift bookkeeping: reference replay of the policy from
    # before the latest disruption, plus the trajectories recorded since.
    drift_reference: Optional[Trajectory] = None
    post_disruption: list[Trajectory] = []

    for episode in range(episodes):
        if episode > 0 and episode % snapshot_interval == 0:
            db.add_snapshot(
                snapshot_policy(
                    q,
                    episode,
                    db.new_snapshot_id(),
                    pre_disruption=not journal.entries,
                    disruption_id_before=(
                        journal.entries[-1].disruption.id if journal.entries else None
                    ),
                )
            )
        while next_scheduled < len(pending) and pending[next_scheduled].episode == episode:
            sd = pending[next_scheduled]
            next_scheduled += 1
            pre_snap = snapshot_policy(
                q,
                episode,
                db.new_snapshot_id(),
                pre_disruption=True,
                disruption_id_before=(
                    journal.entries[-1].disruption.id if journal.entries else None
                ),
            )
            db.add_snapshot(pre_snap)
            d = make_disruption(journal.new_id(), sd.kind, sd.params, sd.author)
            new_config = apply_disruption(cur, d, agent=cur.start)
            log_disruption(journal, mark_applied(d, episode, 0), cur)
            drift_reference = greedy_rollout(
                pre_snap, cur, State(cur.start, 0, episode)
            )
            post_disruption = []
            cur = new_config

        if layers is not None:
            ghosts_by_episode.append(
                spawn_ghosts(db, cur, State(cur.start, 0, episode), layers, journal)
            )

        occluded = cur.goal_direction_occluded()
        eps = epsilon_at(h, episode)
        state = State(cur.start, 0, episode)
        transitions = []
        while True:
            if penalty is None:
                action = select_action(q, state, eps, explore_rng, occluded)
            else:
                action = conditioned_action(q, state, db, penalty, eps, explore_rng, occluded)
            tr = step(cur, state, action, env_rng)
            update(q, tr, h, occluded)
            transitions.append(tr)
            state = tr.s_next
            if tr.done:
                break
        traj = make_trajectory(episode, transitions, disruptions_active=journal.active_ids())
        tid = db.record_episode(traj)
        stored = db.get(tid)
        log_lines.append(dumps_line(trajectory_to_dict(stored)))

        if auto_label:
            if drift_reference is not None:
                post_disruption.append(stored)
                window = post_disruption[-thresholds.drift_window_episodes:]
            else:
                window = []
            metrics = metrics_with_drift(stored, window, drift_reference, thresholds)
            mode = classify(metrics, thresholds)
            if mode is not FailureMode.NONE:
                db.add_label(tid, "auto", mode, unix_ts=float(episode))

        curve.append(
            greedy_rollout(q, cur, State(cur.start, 0, episode)).total_return
        )

    return TrainResult(
        db=db,
        journal=journal,
        q=q,
        config=cur,
        curve=curve,
        trajectory_log_sha256=trajectory_log_digest(log_lines),
        ghosts_by_episode=ghosts_by_episode,
    )
