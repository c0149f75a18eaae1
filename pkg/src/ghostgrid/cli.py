"""Headless entry points.

Subcommands: serve, train, classify, kappa, evaluate, export. Exit codes:
0 success, 1 on configuration/validation errors, 2 on I/O or parse errors;
messages go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import (
    experiment_config_from_run,
    load_run_config,
)
from .dualloop import run_experiment
from .errors import GhostgridError, StorageError, ValidationError
from .ghosts import (
    _read_jsonl,
    load,
    persist,
    read_labels_csv,
    trajectory_from_dict,
    trajectory_to_dict,
)
from .server import run_session
from .taxonomy import Thresholds, classify, cohen_kappa, compute_metrics
from .training import run_training


def _cmd_serve(args) -> int:
    rc = load_run_config(args.config)
    run_session(rc, port=args.port, data_dir=rc.paths.data_dir)
    return 0


def _cmd_train(args) -> int:
    rc = load_run_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_training(
        rc.environment,
        rc.agent.hyperparams,
        args.episodes,
        rc.server.seed,
        snapshot_interval=rc.agent.snapshot_interval,
        schedule=rc.experiment.disruption_schedule,
        penalty=None,
        thresholds=rc.taxonomy,
        auto_label=False,
        journal_path=out / "disruptions.jsonl",
    )
    persist(result.db, out)
    with open(out / "curves.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["seed", "arm", "episode", "greedy_return"])
        for episode, value in enumerate(result.curve):
            writer.writerow([rc.server.seed, "train", episode, value])
    print(
        f"trained {args.episodes} episodes; final greedy return "
        f"{result.curve[-1]:.4f}; data in {out}"
    )
    return 0


def _cmd_classify(args) -> int:
    th = Thresholds()
    if args.thresholds:
        try:
            data = json.loads(Path(args.thresholds).read_text(encoding="utf-8"))
        except OSError as exc:
            raise StorageError(f"cannot read thresholds {args.thresholds}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.thresholds}: invalid JSON: {exc}") from exc
        th = Thresholds.from_dict(data)
    rows = []
    for lineno, data in _read_jsonl(Path(args.infile)):
        t = trajectory_from_dict(data)
        metrics = compute_metrics(
            t, max_cycle=th.loop_max_cycle, min_revisits=th.frag_min_revisits
        )
        # Batch mode has no reference trajectory, so GradualDrift cannot fire.
        rows.append((t.id, classify(metrics, th)))
    with open(args.out, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["trajectory_id", "rater_id", "failure_mode", "unix_ts"])
        for tid, mode in rows:
            writer.writerow([tid, "auto", mode.value, 0.0])
    print(f"classified {len(rows)} trajectories -> {args.out}")
    return 0


def _cmd_kappa(args) -> int:
    def by_id(path: str) -> dict[str, str]:
        out: dict[str, str] = {}
        for rec in read_labels_csv(Path(path)):
            out[rec.trajectory_id] = rec.failure_mode.value  # last label wins
        return out

    labels_a = by_id(args.a)
    labels_b = by_id(args.b)
    shared = sorted(set(labels_a) & set(labels_b))
    if not shared:
        raise ValidationError("no shared trajectory ids between the two label files")
    k = cohen_kappa([labels_a[i] for i in shared], [labels_b[i] for i in shared])
    print(f"kappa={k:.4f}")
    return 0


def _cmd_evaluate(args) -> int:
    rc = load_run_config(args.config)
    report, curves = run_experiment(experiment_config_from_run(rc))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        out.write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        curves_path = Path(args.curves) if args.curves else out.with_suffix(".curves.csv")
        with open(curves_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["seed", "arm", "episode", "greedy_return"])
            writer.writerows(curves)
    except OSError as exc:
        raise StorageError(f"cannot write report: {exc}") from exc
    rec = report.summary["recovery_episodes"]
    print(
        f"report -> {out}; median recovery baseline={rec['baseline']['median']} "
        f"conditioned={rec['conditioned']['median']}; "
        f"direction_holds={report.hypothesis['direction_holds']}"
    )
    return 0


def _cmd_export(args) -> int:
    db = load(args.data)
    out = Path(args.out)
    try:
        if args.format == "jsonl":
            with open(out, "w", encoding="utf-8") as f:
                for t in db.trajectories:
                    record = trajectory_to_dict(t)
                    record["labels"] = [[rater, mode.value] for rater, mode in t.labels]
                    f.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
        else:
            with open(out, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(
                    ["trajectory_id", "episode_index", "step", "x", "y", "action",
                     "reward", "next_x", "next_y", "done", "done_reason", "outcome",
                     "labels"]
                )
                for t in db.trajectories:
                    labels = ";".join(f"{rater}:{mode.value}" for rater, mode in t.labels)
                    for i, tr in enumerate(t.transitions):
                        writer.writerow(
                            [t.id, t.episode_index, i, tr.s.agent[0], tr.s.agent[1],
                             tr.a.wire, tr.r, tr.s_next.agent[0], tr.s_next.agent[1],
                             tr.done, tr.done_reason, t.outcome, labels]
                        )
    except OSError as exc:
        raise StorageError(f"cannot write export {out}: {exc}") from exc
    print(f"exported {len(db.trajectories)} trajectories -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghostgrid",
        description="Gridworld RL testbed with ghost-policy replay, human "
        "disruptions, failure taxonomy, and a ghost-conditioned dual loop.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run a live session server")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("train", help="headless training run producing a ghost store")
    p.add_argument("--config", required=True)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("classify", help="rule-classify a trajectory file into labels.csv")
    p.add_argument("--in", dest="infile", required=True, metavar="GHOSTS_JSONL")
    p.add_argument("--out", required=True, metavar="LABELS_CSV")
    p.add_argument("--thresholds", default=None, help="JSON file of threshold overrides")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("kappa", help="Cohen's kappa between two label files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=_cmd_kappa)

    p = sub.add_parser("evaluate", help="paired baseline/conditioned experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, metavar="REPORT_JSON")
    p.add_argument("--curves", default=None, metavar="CURVES_CSV")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("export", help="export a ghost store as csv or jsonl")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GhostgridError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1 if exc.code in ("E_CONFIG", "E_VALIDATION") else 2


def entrypoint() -> None:  # console script
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
