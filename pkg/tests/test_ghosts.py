"""Ghost database: recording, layers, retrieval, persistence."""

from __future__ import annotations

import random

import pytest

from ghostgrid import (
    Action,
    FailureMode,
    GhostDatabase,
    GhostKind,
    GridConfig,
    LayerConfig,
    ParseError,
    QTable,
    State,
    StorageError,
    ValidationError,
    alpha_for_age,
    get_failure_actions,
    greedy_rollout,
    load,
    make_disruption,
    mark_applied,
    persist,
    retrieve_ghosts,
    snapshot_policy,
    spawn_ghosts,
)
from ghostgrid.disruptions import DisruptionJournal, DisruptionKind
from conftest import synth_trajectory


def right_actions(n):
    return [Action.RIGHT] * n


class TestRecordEpisode:
    def test_append_and_id(self):
        db = GhostDatabase()
        t = synth_trajectory([(0, 0), (1, 0), (2, 0), (3, 0)], right_actions(3))
        tid = db.record_episode(t)
        assert tid == "t000001"
        assert len(db.trajectories) == 1

    def test_broken_chain_rejected(self):
        db = GhostDatabase()
        t = synth_trajectory([(0, 0), (1, 0), (2, 0)], right_actions(2))
        broken = t.transitions[0], t.transitions[1]._replace(
            s=t.transitions[1].s._replace(agent=(5, 5))
        )
        t.transitions = broken
        with pytest.raises(ValidationError):
            db.record_episode(t)

    def test_duplicate_content_distinct_ids(self):
        db = GhostDatabase()
        a = db.record_episode(synth_trajectory([(0, 0), (1, 0)], right_actions(1)))
        b = db.record_episode(synth_trajectory([(0, 0), (1, 0)], right_actions(1)))
        assert a != b
        assert len(db.trajectories) == 2

    def test_total_return_checked(self):
        db = GhostDatabase()
        t = synth_trajectory([(0, 0), (1, 0)], right_actions(1))
        t.total_return = 42.0
        with pytest.raises(ValidationError):
            db.record_episode(t)


class TestAlpha:
    def test_boundaries(self):
        assert alpha_for_age(0) == 1.0
        assert alpha_for_age(100) == 0.15
        assert alpha_for_age(5000) == 0.15

    def test_linear_midpoint(self):
        assert alpha_for_age(50) == 0.5

    def test_negative_age_rejected(self):
        with pytest.raises(ValidationError):
            alpha_for_age(-1)

    def test_monotone_nonincreasing(self):
        alphas = [alpha_for_age(a) for a in range(0, 200, 3)]
        assert alphas == sorted(alphas, reverse=True)


def snap_at(db, episode, pre=False):
    snap = snapshot_policy(QTable(), episode, db.new_snapshot_id(), pre_disruption=pre)
    db.add_snapshot(snap)
    return snap


def test_duplicate_snapshot_id_rejected():
    db = GhostDatabase()
    db.add_snapshot(snapshot_policy(QTable(), 1, "s1"))
    with pytest.raises(ValidationError):
        db.add_snapshot(snapshot_policy(QTable(), 2, "s1"))


class TestSpawnGhosts:
    def test_empty_db_no_ghosts(self):
        db = GhostDatabase()
        cfg = GridConfig()
        assert spawn_ghosts(db, cfg, State(cfg.start, 0, 0)) == []

    def test_recent_picks_nearest_to_offset(self):
        db = GhostDatabase()
        cfg = GridConfig()
        for ep in (10, 20, 30, 40):
            snap_at(db, ep)
        ghosts = spawn_ghosts(db, cfg, State(cfg.start, 0, 50), LayerConfig(k_recent=5))
        recent = next(g for g in ghosts if g.kind is GhostKind.RECENT)
        assert db.get_snapshot(recent.source_snapshot_id).episode_index == 40

    def test_historical_strictly_older_with_lower_alpha(self):
        db = GhostDatabase()
        cfg = GridConfig()
        for ep in (10, 20, 30, 40):
            snap_at(db, ep)
        ghosts = spawn_ghosts(db, cfg, State(cfg.start, 0, 50), LayerConfig(k_historical=50))
        by_kind = {g.kind: g for g in ghosts}
        recent = by_kind[GhostKind.RECENT]
        historical = by_kind[GhostKind.HISTORICAL]
        assert db.get_snapshot(historical.source_snapshot_id).episode_index == 10
        assert 1.0 > recent.alpha > historical.alpha >= 0.15
        assert recent.color_tag == "red" and historical.color_tag == "grey"

    def test_single_snapshot_omits_historical(self):
        db = GhostDatabase()
        cfg = GridConfig()
        snap_at(db, 10)
        ghosts = spawn_ghosts(db, cfg, State(cfg.start, 0, 20))
        assert [g.kind for g in ghosts] == [GhostKind.RECENT]

    def test_pre_disruption_layer(self):
        db = GhostDatabase()
        cfg = GridConfig()
        journal = DisruptionJournal()
        snap_at(db, 90)
        pre = snap_at(db, 100, pre=True)
        d = make_disruption(journal.new_id(), DisruptionKind.GOAL_RELOCATION,
                            {"new_goal": [0, 7]}, "rater-1")
        journal.log(mark_applied(d, 100, 0), cfg)
        ghosts = spawn_ghosts(db, cfg, State(cfg.start, 0, 101), journal=journal)
        pd = next(g for g in ghosts if g.kind is GhostKind.PRE_DISRUPTION)
        assert pd.source_snapshot_id == pre.id
        assert pd.color_tag == "green"
        # replays under the pre-disruption config (old goal, old timeout)
        assert len(pd.trajectory.transitions) <= cfg.max_steps

    def test_no_pre_disruption_without_journal_entries(self):
        db = GhostDatabase()
        cfg = GridConfig()
        snap_at(db, 10, pre=True)
        ghosts = spawn_ghosts(db, cfg, State(cfg.start, 0, 20), journal=DisruptionJournal())
        assert all(g.kind is not GhostKind.PRE_DISRUPTION for g in ghosts)

    def test_replay_fidelity(self):
        db = GhostDatabase()
        cfg = GridConfig()
        q = QTable()
        q.row(((0, 0), False))[Action.RIGHT.value] = 1.0
        snap = snapshot_policy(q, 10, db.new_snapshot_id())
        db.add_snapshot(snap)
        (ghost,) = spawn_ghosts(db, cfg, State(cfg.start, 0, 12))
        rederived = greedy_rollout(snap, cfg, State(cfg.start, 0, 12))
        assert ghost.trajectory.transitions == rederived.transitions


class TestRetrieval:
    def build_db(self):
        db = GhostDatabase()
        # t1: failure loop at (2,2) taking Up; t2: unlabeled; t3: failure at (4,4)
        loop = synth_trajectory(
            [(2, 2), (2, 1), (2, 2), (2, 1), (2, 2)],
            [Action.UP, Action.DOWN, Action.UP, Action.DOWN],
        )
        t1 = db.record_episode(loop)
        db.add_label(t1, "rater-1", FailureMode.MANIC_OSCILLATION)
        db.record_episode(synth_trajectory([(0, 0), (1, 0)], right_actions(1), episode=1))
        t3 = db.record_episode(
            synth_trajectory([(4, 4), (4, 5)], [Action.DOWN], episode=2)
        )
        db.add_label(t3, "rater-2", FailureMode.OBSESSIVE_LOOP)
        return db, t1, t3

    def test_empty_db(self):
        db = GhostDatabase()
        assert retrieve_ghosts(db, State((0, 0), 0, 0)) == []

    def test_exact_hit(self):
        db, t1, _ = self.build_db()
        hits = retrieve_ghosts(db, State((2, 2), 0, 5))
        assert [t.id for t in hits] == [t1]

    def test_radius_one_reaches_neighbors(self):
        db, _, t3 = self.build_db()
        assert retrieve_ghosts(db, State((3, 4), 0, 5)) == []
        hits = retrieve_ghosts(db, State((3, 4), 0, 5), radius=1)
        assert [t.id for t in hits] == [t3]

    def test_unlabeled_and_none_labeled_excluded(self):
        db = GhostDatabase()
        tid = db.record_episode(synth_trajectory([(0, 0), (1, 0)], right_actions(1)))
        assert retrieve_ghosts(db, State((0, 0), 0, 1)) == []
        db.add_label(tid, "rater-1", FailureMode.NONE)
        assert retrieve_ghosts(db, State((0, 0), 0, 1)) == []
        db.add_label(tid, "rater-2", FailureMode.CATATONIC_COLLAPSE)
        assert [t.id for t in retrieve_ghosts(db, State((0, 0), 0, 1))] == [tid]

    def test_newest_first(self):
        db = GhostDatabase()
        ids = []
        for ep in range(3):
            tid = db.record_episode(
                synth_trajectory([(0, 0), (1, 0)], right_actions(1), episode=ep)
            )
            db.add_label(tid, "r", FailureMode.GRADUAL_DRIFT)
            ids.append(tid)
        hits = retrieve_ghosts(db, State((0, 0), 0, 9))
        assert [t.id for t in hits] == list(reversed(ids))

    def test_get_failure_actions(self):
        db, t1, _ = self.build_db()
        hits = retrieve_ghosts(db, State((2, 2), 0, 5))
        assert get_failure_actions(hits, State((2, 2), 0, 5)) == {Action.UP}
        assert get_failure_actions([], State((2, 2), 0, 5)) == set()

    def test_failure_actions_union(self):
        db = GhostDatabase()
        a = db.record_episode(synth_trajectory([(1, 1), (1, 0)], [Action.UP]))
        b = db.record_episode(synth_trajectory([(1, 1), (0, 1)], [Action.LEFT], episode=1))
        db.add_label(a, "r", FailureMode.OBSESSIVE_LOOP)
        db.add_label(b, "r", FailureMode.OBSESSIVE_LOOP)
        hits = retrieve_ghosts(db, State((1, 1), 0, 2))
        assert get_failure_actions(hits, State((1, 1), 0, 2)) == {Action.UP, Action.LEFT}

    def test_retrieval_matches_brute_force(self):
        rng = random.Random(4)
        db = GhostDatabase()
        for ep in range(30):
            cells = [(rng.randrange(6), rng.randrange(6))]
            actions = []
            for _ in range(rng.randint(1, 12)):
                actions.append(Action.STAY)
                cells.append(cells[-1])
            tid = db.record_episode(synth_trajectory(cells, actions, episode=ep))
            if rng.random() < 0.5:
                db.add_label(tid, "r", FailureMode.CATATONIC_COLLAPSE)
        for x in range(6):
            for y in range(6):
                s = State((x, y), 0, 99)
                got = {t.id for t in retrieve_ghosts(db, s)}
                want = {
                    t.id
                    for t in db.trajectories
                    if t.has_failure_label() and (x, y) in t.visited_cells()
                }
                assert got == want


class TestPersistence:
    def test_empty_round_trip(self, tmp_path):
        db = GhostDatabase()
        persist(db, tmp_path)
        assert load(tmp_path) == db

    def test_populated_round_trip(self, tmp_path):
        db = GhostDatabase()
        q = QTable()
        q.row(((1, 1), False))[2] = -0.25
        db.add_snapshot(snapshot_policy(q, 10, db.new_snapshot_id(), pre_disruption=True))
        ids = []
        for ep in range(3):
            ids.append(
                db.record_episode(
                    synth_trajectory(
                        [(0, 0), (1, 0), (1, 1)],
                        [Action.RIGHT, Action.DOWN],
                        episode=ep,
                    )
                )
            )
        db.add_label(ids[0], "rater-1", FailureMode.OBSESSIVE_LOOP, unix_ts=12.5)
        db.add_label(ids[2], "rater-2", FailureMode.NONE, unix_ts=13.0)
        persist(db, tmp_path)
        loaded = load(tmp_path)
        assert loaded == db
        # index reconstruction: retrieval behaves identically
        s = State((1, 0), 0, 9)
        assert [t.id for t in retrieve_ghosts(loaded, s)] == [
            t.id for t in retrieve_ghosts(db, s)
        ]

    def test_truncated_file_names_line(self, tmp_path):
        db = GhostDatabase()
        db.record_episode(synth_trajectory([(0, 0), (1, 0)], right_actions(1)))
        db.record_episode(synth_trajectory([(0, 0), (1, 0)], right_actions(1), episode=1))
        persist(db, tmp_path)
        path = tmp_path / "ghosts.jsonl"
        text = path.read_text()
        path.write_text(text[: len(text) - 40])  # chop the tail of line 2
        with pytest.raises(ParseError) as err:
            load(tmp_path)
        assert err.value.line == 2

    def test_bad_labels_header(self, tmp_path):
        persist(GhostDatabase(), tmp_path)
        (tmp_path / "labels.csv").write_text("nope\n")
        with pytest.raises(ParseError):
            load(tmp_path)

    def test_missing_directory_is_io_error(self, tmp_path):
        with pytest.raises(StorageError):
            load(tmp_path / "absent")

    def test_append_only_stored_copy_isolated(self):
        db = GhostDatabase()
        t = synth_trajectory([(0, 0), (1, 0)], right_actions(1))
        tid = db.record_episode(t)
        t.labels.append(("sneaky", FailureMode.GRADUAL_DRIFT))
        assert db.get(tid).labels == []
