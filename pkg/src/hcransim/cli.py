"""Command-line entry points for the simulator."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys

from .beamforming import ConvergenceError
from .experiments import (
    ExperimentConfig,
    load_config,
    run_mse_sweep,
    run_se_sweep,
    run_tightness,
    solve_one,
)
from .pilot_scheduler import build_conflict_graph, compute_beta, sum_mse
from .experiments import _schedule, _topology_for  # single-instance plumbing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcransim",
        description="Link-level pilot-scheduling and robust-beamforming simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("mse-sweep", "sum channel-estimation MSE vs a swept parameter"),
        ("se-sweep", "sum spectral efficiency vs a swept parameter"),
        ("tightness", "rate lower bound vs Monte-Carlo achievable rate"),
        ("schedule", "pilot-schedule one instance and report its sum MSE"),
        ("solve-one", "full single-instance pipeline with artifact dump"),
    ]:
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", help="JSON experiment config")
        cmd.add_argument("--seed", type=int, help="override the master seed")
        cmd.add_argument("--out", help="output CSV path (or directory for solve-one)")
        cmd.add_argument(
            "--realizations", type=int, help="override the ensemble size"
        )
        cmd.add_argument("--jobs", type=int, help="worker processes")
    return parser


def _configure(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.realizations is not None:
        overrides["num_realizations"] = args.realizations
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None and args.command != "solve-one":
        overrides["output_path"] = args.out
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    if cfg.output_path is None and args.command in {"mse-sweep", "se-sweep", "tightness"}:
        cfg = dataclasses.replace(cfg, output_path=f"{args.command}.csv")
    return cfg


def _run_schedule(cfg: ExperimentConfig, out_path) -> None:
    scenario, training = cfg.scenario, cfg.training
    topology = _topology_for(cfg, scenario, 0)
    graph = build_conflict_graph(topology)
    metrics = compute_beta(topology, graph)
    first = None
    for scheduler in cfg.schedulers:
        assignment = _schedule(topology, metrics, graph, scheduler, training, cfg, 0)
        mse = sum_mse(
            topology, assignment, training.p_rue, training.p_bue, training.noise_power
        )
        print(f"{scheduler}: tau={assignment.tau} sum_mse={mse:.6e}")
        if first is None:
            first = assignment
    if out_path and first is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ue_id", "type", "pilot"])
            for m in range(topology.num_ue):
                kind = "rue" if m in topology.rue_set else "bue"
                writer.writerow([m, kind, first.pilots[m]])
        print(f"assignment written to {out_path}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _configure(args)
        if args.command == "mse-sweep":
            result = run_mse_sweep(cfg)
            print(f"{len(result.rows)} rows written to {result.path}")
        elif args.command == "se-sweep":
            result = run_se_sweep(cfg)
            print(f"{len(result.rows)} rows written to {result.path}")
        elif args.command == "tightness":
            result = run_tightness(cfg)
            print(f"{len(result.rows)} rows written to {result.path}")
        elif args.command == "schedule":
            _run_schedule(cfg, args.out)
        elif args.command == "solve-one":
            out_dir = args.out or "solve-one-out"
            res = solve_one(cfg, out_dir)
            state = res["rtd_state"]
            print(
                f"solved in {state.iterations} iterations "
                f"(converged={state.converged}); artifacts in {out_dir}"
            )
    except (ValueError, ConvergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
