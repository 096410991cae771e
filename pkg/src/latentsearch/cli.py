"""Command-line entry points.

Subcommands:

- ``run --config exp.toml``  execute an experiment sweep (resumable)
- ``evaluate <dir>``         score a finished experiment, write reports
- ``report <dir>``           print the written reports without recomputing
- ``gradcheck``              finite-difference audit of the toy gradients
- ``bench``                  time toy fitness and gradient evaluations

Exit status: 0 on success, 1 on a domain error (bad config, missing
runs, tolerance failure), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import LatentSearchError
from .experiment import evaluate_experiment, load_config, run_experiment
from .latent import LatentInit, flatten, new_latent, unflatten
from .objective import CutoutPolicy
from .seeds import derive_seed
from .toy import ToyPipeline, finite_diff_grad


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentsearch",
        description="Search a generator's latent space to match a text target.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment sweep from a config file")
    run.add_argument("--config", required=True, help="experiment config file (TOML)")
    run.add_argument("--output-dir", help="override [experiment].output_dir")
    run.add_argument("--runs-per-strategy", type=int, help="override runs per strategy")
    run.add_argument("--master-seed", type=int, help="override the master seed")
    run.add_argument("--evaluations", type=int, help="override the per-run budget")
    run.add_argument("--parallelism", type=int, help="override the worker count")

    evaluate = sub.add_parser("evaluate", help="score a finished experiment directory")
    evaluate.add_argument("dir", help="experiment directory created by run")
    evaluate.add_argument("--baseline", help="baseline strategy label (default: best mean fitness)")
    evaluate.add_argument("--repeats", type=int, help="override evaluation repeats")
    evaluate.add_argument("--grid-size", type=int, help="override occupancy grid size")

    report = sub.add_parser("report", help="print reports written by evaluate")
    report.add_argument("dir", help="experiment directory containing reports/")

    gradcheck = sub.add_parser("gradcheck", help="audit toy gradients with finite differences")
    gradcheck.add_argument("--probes", type=int, default=20, help="random probes (default 20)")
    gradcheck.add_argument("--seed", type=int, default=0, help="probe seed (default 0)")
    gradcheck.add_argument("--step", type=float, default=1e-5, help="FD step (default 1e-5)")
    gradcheck.add_argument(
        "--tolerance", type=float, default=1e-4, help="max relative error (default 1e-4)"
    )

    bench = sub.add_parser("bench", help="time toy fitness and gradient evaluations")
    bench.add_argument("--evaluations", type=int, default=50, help="evaluations to time")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.output_dir is not None:
        overrides["output_dir"] = Path(args.output_dir)
    if args.runs_per_strategy is not None:
        overrides["runs_per_strategy"] = args.runs_per_strategy
    if args.master_seed is not None:
        overrides["master_seed"] = args.master_seed
    if args.evaluations is not None:
        overrides["evaluations"] = args.evaluations
    if args.parallelism is not None:
        overrides["parallelism"] = args.parallelism
    if overrides:
        cfg = replace(cfg, **overrides)
    exp_dir = run_experiment(cfg, log=print)
    print(f"experiment directory: {exp_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    outputs = evaluate_experiment(
        args.dir,
        baseline=args.baseline,
        repeats=args.repeats,
        grid_size=args.grid_size,
    )
    print(f"baseline: {outputs.baseline}")
    for label, score in outputs.report.scores.items():
        print(f"{label}: jaccard {score.mean:.4f} +/- {score.half_width_95:.4f}")
    failed = {label: count for label, count in outputs.failed_runs.items() if count}
    if failed:
        print(f"failed runs excluded: {failed}")
    print(f"reports: {outputs.reports_dir}")
    return 0


def _cmd_report(args) -> int:
    reports_dir = Path(args.dir) / "reports"
    report_csv = reports_dir / "report.csv"
    summary_path = reports_dir / "summary.json"
    if not report_csv.is_file() or not summary_path.is_file():
        raise LatentSearchError(
            f"{reports_dir} has no reports; run 'latentsearch evaluate {args.dir}' first"
        )
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    with report_csv.open(newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    print(
        f"baseline {summary['baseline']}, {summary['repeats']} repeats, "
        f"grid {summary['grid_size']}x{summary['grid_size']}"
    )
    for row in rows:
        print(
            f"{row['method']}: jaccard {float(row['jaccard_mean']):.4f} "
            f"+/- {float(row['jaccard_ci95']):.4f}"
        )
    failed = {label: count for label, count in summary["failed_runs"].items() if count}
    if failed:
        print(f"failed runs excluded: {failed}")
    print(f"curves: {reports_dir / 'curves.csv'}")
    return 0


def _cmd_gradcheck(args) -> int:
    pipeline = ToyPipeline()
    target = pipeline.encode_text("gradient audit target")
    worst = 0.0
    for probe in range(args.probes):
        policy = CutoutPolicy(seed_stream=derive_seed(args.seed, "gradcheck", probe))
        objective = pipeline.objective(target, policy)
        code = new_latent(pipeline.shape, LatentInit(seed=derive_seed(args.seed, "probe", probe)))
        _, grad = objective.loss_and_grad(code)
        fd = finite_diff_grad(
            lambda v: objective.loss(unflatten(v, pipeline.shape)), flatten(code), step=args.step
        )
        rel = float((np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)).max())
        worst = max(worst, rel)
    passed = worst < args.tolerance
    print(
        f"gradcheck: {args.probes} probes, max relative error {worst:.3e} "
        f"{'<' if passed else '>='} {args.tolerance:g} -> {'ok' if passed else 'FAIL'}"
    )
    return 0 if passed else 1


def _cmd_bench(args) -> int:
    pipeline = ToyPipeline()
    objective = pipeline.objective(pipeline.encode_text("bench target"))
    code = new_latent(pipeline.shape, LatentInit(seed=0))
    started = time.perf_counter()
    for _ in range(args.evaluations):
        objective.fitness(code)
    fitness_ms = (time.perf_counter() - started) * 1000 / args.evaluations
    started = time.perf_counter()
    for _ in range(args.evaluations):
        objective.loss_and_grad(code)
    grad_ms = (time.perf_counter() - started) * 1000 / args.evaluations
    print(
        f"toy backend, {args.evaluations} evaluations: "
        f"fitness {fitness_ms:.2f} ms/eval, gradient {grad_ms:.2f} ms/eval"
    )
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
    "gradcheck": _cmd_gradcheck,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (LatentSearchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
