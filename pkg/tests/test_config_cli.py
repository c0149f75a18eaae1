"""Config schema round-trips and CLI subcommand behaviour."""

from __future__ import annotations

import json

import pytest

from ghostgrid.cli import main
from ghostgrid.config import (
    RunConfig,
    load_run_config,
    parse_run_config,
    run_config_to_dict,
    save_run_config,
)
from ghostgrid.errors import ConfigError


def minimal_config_dict(**overrides):
    data = {
        "schema_version": 1,
        "environment": {
            "width": 4, "height": 4, "start": [0, 0], "goal": [3, 3],
            "max_steps": 40,
        },
        "agent": {"epsilon_decay_episodes": 30},
        "experiment": {
            "seeds": list(range(20)),
            "episodes": 40,
            "disruption_schedule": [
                {"episode": 20, "kind": "goal_relocation",
                 "params": {"new_goal": [0, 3]}, "author": "script"}
            ],
        },
        "server": {"port": 0, "tick_rate_hz": 50, "seed": 5},
    }
    data.update(overrides)
    return data


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


class TestConfigSchema:
    def test_defaults_round_trip(self):
        rc = RunConfig()
        assert parse_run_config(run_config_to_dict(rc)) == rc

    def test_parse_serialize_parse_identity(self, tmp_path):
        path = write_config(tmp_path, minimal_config_dict())
        rc = load_run_config(path)
        out = tmp_path / "normalized.json"
        save_run_config(rc, out)
        assert load_run_config(out) == rc

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.update(schema_version=2),
            lambda d: d.pop("schema_version"),
            lambda d: d.update(extra_section={}),
            lambda d: d["environment"].update(widht=8),
            lambda d: d["agent"].update(learning_rate=0.1),
            lambda d: d["server"].update(tick_rate_hz=500),
            lambda d: d.update(taxonomy={"theta_catt": 0.5}),
            lambda d: d["experiment"].update(seeds=["a"]),
        ],
    )
    def test_bad_configs_rejected(self, mutate):
        data = minimal_config_dict()
        mutate(data)
        with pytest.raises(ConfigError):
            parse_run_config(data)

    def test_invalid_environment_names_invariant(self):
        data = minimal_config_dict()
        data["environment"]["goal"] = [0, 0]
        with pytest.raises(ConfigError, match="start and goal"):
            parse_run_config(data)


class TestKappaCommand:
    def write_labels(self, path, rows):
        lines = ["trajectory_id,rater_id,failure_mode,unix_ts"]
        lines += [f"{t},{r},{m},{ts}" for t, r, m, ts in rows]
        path.write_text("\n".join(lines) + "\n")

    def test_identical_files_kappa_one(self, tmp_path, capsys):
        rows = [
            ("t1", "a", "CatatonicCollapse", 0.0),
            ("t2", "a", "None", 0.0),
            ("t3", "a", "ObsessiveLoop", 0.0),
        ]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        self.write_labels(a, rows)
        self.write_labels(b, rows)
        assert main(["kappa", "--a", str(a), "--b", str(b)]) == 0
        assert capsys.readouterr().out.strip() == "kappa=1.0000"

    def test_half_agreement_value(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        self.write_labels(a, [("t1", "a", "None", 0), ("t2", "a", "None", 0),
                              ("t3", "a", "GradualDrift", 0), ("t4", "a", "GradualDrift", 0)])
        self.write_labels(b, [("t1", "b", "None", 0), ("t2", "b", "GradualDrift", 0),
                              ("t3", "b", "GradualDrift", 0), ("t4", "b", "GradualDrift", 0)])
        assert main(["kappa", "--a", str(a), "--b", str(b)]) == 0
        assert capsys.readouterr().out.strip() == "kappa=0.5000"

    def test_missing_file_is_io_exit_2(self, tmp_path, capsys):
        assert main(["kappa", "--a", str(tmp_path / "x.csv"), "--b", str(tmp_path / "y.csv")]) == 2

    def test_bad_labels_file_is_parse_exit_2(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        a.write_text("wrong,header\n")
        assert main(["kappa", "--a", str(a), "--b", str(a)]) == 2


class TestServeCommand:
    def test_invalid_config_exit_1_names_invariant(self, tmp_path, capsys):
        data = minimal_config_dict()
        data["environment"]["goal"] = [0, 0]
        path = write_config(tmp_path, data)
        assert main(["serve", "--config", str(path)]) == 1
        err = capsys.readouterr().err
        assert "E_CONFIG" in err and "start and goal" in err

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["serve", "--config", str(tmp_path / "nope.json")]) == 2


class TestPipeline:
    def test_train_classify_evaluate_export_headless(self, tmp_path, capsys):
        config = write_config(tmp_path, minimal_config_dict())
        out = tmp_path / "run1"

        assert main(["train", "--config", str(config), "--episodes", "40",
                     "--out", str(out)]) == 0
        assert (out / "ghosts.jsonl").exists()
        assert (out / "snapshots.jsonl").exists()
        assert (out / "disruptions.jsonl").exists()

        labels = tmp_path / "labels.csv"
        assert main(["classify", "--in", str(out / "ghosts.jsonl"),
                     "--out", str(labels)]) == 0
        lines = labels.read_text().strip().splitlines()
        assert lines[0] == "trajectory_id,rater_id,failure_mode,unix_ts"
        assert len(lines) == 41  # header + one row per episode

        report = tmp_path / "report.json"
        assert main(["evaluate", "--config", str(config), "--out", str(report)]) == 0
        body = json.loads(report.read_text())
        assert set(body["arms"]) == {"baseline", "conditioned"}
        assert report.with_suffix(".curves.csv").exists()

        exported = tmp_path / "flat.csv"
        assert main(["export", "--data", str(out), "--format", "csv",
                     "--out", str(exported)]) == 0
        header = exported.read_text().splitlines()[0]
        assert header.startswith("trajectory_id,episode_index,step,x,y,action")

        exported_jsonl = tmp_path / "flat.jsonl"
        assert main(["export", "--data", str(out), "--format", "jsonl",
                     "--out", str(exported_jsonl)]) == 0
        first = json.loads(exported_jsonl.read_text().splitlines()[0])
        assert "labels" in first and "transitions" in first

    def test_classify_flags_all_stay_episode(self, tmp_path, capsys):
        # hand-built ghosts.jsonl holding one catatonic episode
        from conftest import stay_trajectory
        from ghostgrid import GhostDatabase, persist

        db = GhostDatabase()
        db.record_episode(stay_trajectory(steps=30))
        persist(db, tmp_path / "data")
        labels = tmp_path / "labels.csv"
        assert main(["classify", "--in", str(tmp_path / "data" / "ghosts.jsonl"),
                     "--out", str(labels)]) == 0
        rows = labels.read_text().strip().splitlines()
        assert rows[1].split(",")[2] == "CatatonicCollapse"

    def test_classify_threshold_overrides(self, tmp_path):
        from conftest import stay_trajectory
        from ghostgrid import GhostDatabase, persist

        db = GhostDatabase()
        db.record_episode(stay_trajectory(steps=30))
        persist(db, tmp_path / "data")
        th = tmp_path / "th.json"
        th.write_text(json.dumps({"theta_cat": 1.1}))  # impossible bar
        labels = tmp_path / "labels.csv"
        assert main(["classify", "--in", str(tmp_path / "data" / "ghosts.jsonl"),
                     "--out", str(labels), "--thresholds", str(th)]) == 0
        # the override suppressed the catatonic verdict (a constant cell
        # sequence still trips the generic loop rule further down)
        got = labels.read_text().strip().splitlines()[1].split(",")[2]
        assert got != "CatatonicCollapse"
