"""Command-line front end: run experiments, benchmark weight-update
frequencies, emit trajectory figures, and self-check the solvers.

Verbs:
    run    execute every (aggregator x init) cell of a config
    bench  time Nash weight-update frequencies from bench_update_every
    plot   turn a summary.json back into SVG trajectory figures
    check  run the gradient/solver property suites, print a table

Exit codes: 0 success, 1 config error, 2 runtime failure.
"""

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baselines, config as config_mod, metrics, nash, optim, problems, svg
from .baselines import AggregatorKind, AggregatorTag
from .errors import ConfigError, NashoptError
from .linalg import gram

log = logging.getLogger(__name__)

_FMT = "%.17g"


def _fmt(x):
    return _FMT % float(x)


def write_trajectory_csv(path, result, dim, num_tasks):
    """Normative trajectory schema; numeric content is deterministic."""
    header = (
        ["step"]
        + [f"theta_{i}" for i in range(dim)]
        + [f"loss_{k}" for k in range(num_tasks)]
        + [f"alpha_{k}" for k in range(num_tasks)]
        + ["step_size", "stationarity", "sigma_k"]
    )
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for rec in result.trajectory:
            row = (
                [str(rec.step)]
                + [_fmt(v) for v in rec.theta]
                + [_fmt(v) for v in rec.losses]
                + [_fmt(v) for v in rec.alpha]
                + [_fmt(rec.step_size), _fmt(rec.stationarity), _fmt(rec.sigma_k)]
            )
            fh.write(",".join(row) + "\n")


def read_trajectory_csv(path):
    """Returns (theta, losses) arrays with one row per trajectory record."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    d = sum(1 for h in header if h.startswith("theta_"))
    k = sum(1 for h in header if h.startswith("loss_"))
    arr = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    return arr[:, 1 : 1 + d], arr[:, 1 + d : 1 + d + k]


def _run_cell(doc, agg_index, init_index):
    """One (aggregator, init) cell; returns the summary entry.

    Takes the plain config tree (not the dataclass) so cells can cross a
    process boundary.
    """
    cfg = config_mod.parse_config(doc)
    problem = cfg.build_problem()
    ocfg = cfg.optimizer
    if cfg.smoothness_from_problem:
        ocfg = replace(ocfg, step_rule=cfg.step_rule_for(problem))
    agg = cfg.aggregators[agg_index]
    theta0 = cfg.init_points(problem)[init_index]
    out = Path(cfg.output_dir)
    t0 = time.perf_counter()
    result = optim.run(problem, agg, ocfg, theta0)
    wall = time.perf_counter() - t0
    csv_name = f"{agg.tag.value}_init{init_index}.csv"
    write_trajectory_csv(out / csv_name, result, problem.dim, problem.num_tasks)
    return {
        "aggregator": agg.tag.value,
        "init_index": init_index,
        "init": [float(v) for v in theta0],
        "csv": csv_name,
        "final_losses": [float(v) for v in result.final_losses],
        "final_stationarity": float(result.trajectory[-1].stationarity),
        "termination": result.termination.value,
        "solver_calls": result.solver_calls,
        "wall_time_s": wall,
    }


def _execute_cells(cfg, doc, jobs):
    cells = [
        (i, j)
        for i in range(len(cfg.aggregators))
        for j in range(len(cfg.init_points(cfg.build_problem())))
    ]
    results, failures = [], []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_cell, doc, i, j): (i, j) for i, j in cells}
            for fut, (i, j) in futures.items():
                try:
                    results.append(fut.result())
                except Exception as e:  # noqa: BLE001 - manifest captures all
                    failures.append({"aggregator_index": i, "init_index": j,
                                     "error": str(e)})
    else:
        for i, j in cells:
            try:
                results.append(_run_cell(doc, i, j))
            except Exception as e:  # noqa: BLE001
                failures.append({"aggregator_index": i, "init_index": j,
                                 "error": str(e)})
    results.sort(key=lambda r: (r["aggregator"], r["init_index"]))
    return results, failures


def _metric_table_dict(cfg, cells):
    names = []
    values = []
    for agg in cfg.aggregators:
        rows = [c["final_losses"] for c in cells if c["aggregator"] == agg.tag.value]
        if not rows:
            continue
        names.append(agg.tag.value)
        values.append(np.mean(np.asarray(rows), axis=0).tolist())
    num_tasks = len(cfg.metrics_baseline)
    table = metrics.MetricTable(
        methods=names,
        tasks=[(f"loss_{k}", False) for k in range(num_tasks)],
        values=np.asarray(values),
        baseline=np.asarray(cfg.metrics_baseline),
    )
    return {
        "methods": table.methods,
        "tasks": [[name, flag] for name, flag in table.tasks],
        "values": table.values.tolist(),
        "baseline": table.baseline.tolist(),
    }


def cmd_run(config_path, out_override=None, jobs=1, seed_override=None):
    cfg = config_mod.load_config(config_path)
    if out_override is not None:
        cfg = replace(cfg, output_dir=str(out_override))
    if seed_override is not None:
        cfg = replace(cfg, optimizer=replace(cfg.optimizer, seed=seed_override))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = config_mod.config_to_dict(cfg)
    cells, failures = _execute_cells(cfg, doc, jobs)
    summary = {
        "config": doc,
        "cells": cells,
    }
    if cfg.metrics_baseline is not None:
        summary["metric_table"] = _metric_table_dict(cfg, cells)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    if failures:
        with open(out / "failures.json", "w") as fh:
            json.dump(failures, fh, indent=2)
        log.error("run: %d cell(s) failed, see failures.json", len(failures))
        return 2
    if cfg.emit_plots:
        return cmd_plot(out / "summary.json")
    return 0


def cmd_bench(config_path, out_override=None, jobs=1, seed_override=None):
    cfg = config_mod.load_config(config_path)
    if out_override is not None:
        cfg = replace(cfg, output_dir=str(out_override))
    if seed_override is not None:
        cfg = replace(cfg, optimizer=replace(cfg.optimizer, seed=seed_override))
    if not cfg.bench_update_every:
        raise ConfigError("bench_update_every: required for the bench verb")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.build_problem()
    inits = cfg.init_points(problem)
    nash_kind = AggregatorKind(AggregatorTag.NASH)
    runs = []
    for T in cfg.bench_update_every:
        ocfg = replace(cfg.optimizer, weight_update_every=T,
                       step_rule=cfg.step_rule_for(problem))
        calls = 0
        stats = []
        t0 = time.perf_counter()
        for theta0 in inits:
            result = optim.run(problem, nash_kind, ocfg, theta0)
            calls += result.solver_calls
            stats.append(float(result.trajectory[-1].stationarity))
        runs.append({
            "weight_update_every": T,
            "solver_calls": calls,
            "wall_time_s": time.perf_counter() - t0,
            "final_stationarity": stats,
        })
    base_calls = runs[0]["solver_calls"]
    bench = {
        "runs": runs,
        "solver_call_ratios": [r["solver_calls"] / base_calls for r in runs],
    }
    with open(out / "bench.json", "w") as fh:
        json.dump(bench, fh, indent=2)
    return 0


def cmd_plot(summary_path, out_override=None):
    summary_path = Path(summary_path)
    try:
        with open(summary_path) as fh:
            summary = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read summary: {e}") from None
    base = summary_path.parent
    out = Path(out_override) if out_override is not None else base
    out.mkdir(parents=True, exist_ok=True)
    by_agg = {}
    for cell in summary["cells"]:
        by_agg.setdefault(cell["aggregator"], []).append(cell)
    for name, cells in by_agg.items():
        loss_paths, theta_paths = [], []
        for cell in sorted(cells, key=lambda c: c["init_index"]):
            csv_path = base / cell["csv"]
            if not csv_path.exists():
                log.error("plot: missing trajectory file %s", csv_path)
                return 2
            theta, losses = read_trajectory_csv(csv_path)
            theta_paths.append(theta)
            loss_paths.append(losses)
        doc = svg.trajectory_figure(loss_paths, theta_paths, title=name)
        with open(out / f"{name}.svg", "w") as fh:
            fh.write(doc)
    return 0


def _check_rows(seed):
    rng = np.random.default_rng(seed)
    rows = []

    quad = problems.random_quadratics(3, 6, 25.0, seed)
    rep = problems.finite_diff_check(quad, samples=100, seed=seed)
    rows.append(("finite-diff quadratics <= 1e-7", rep.max_error <= 1e-7))

    toy = problems.toy_problem()
    rep = problems.finite_diff_check(
        toy, samples=100, seed=seed, accept=problems.toy_away_from_kinks
    )
    rows.append(("finite-diff toy (off-kink) <= 1e-4", rep.max_error <= 1e-4))

    worst_res = 0.0
    worst_norm = 0.0
    for _ in range(50):
        K = int(rng.integers(2, 8))
        d = int(rng.integers(K, 32))
        G = rng.standard_normal((d, K))
        sol = nash.solve(G)
        if sol.status is nash.SolveStatus.DEGENERATE:
            continue
        worst_res = max(worst_res, sol.residual_inf)
        worst_norm = max(
            worst_norm,
            abs(float(sol.direction @ sol.direction) - K) - 2 * K * sol.residual_inf,
        )
    rows.append(("fixed-point residual <= 1e-6", worst_res <= 1e-6))
    rows.append(("direction norm identity", worst_norm <= 0.0))

    drift = 0.0
    for _ in range(20):
        G = rng.standard_normal((10, 3))
        scales = 10.0 ** rng.uniform(-2, 2, 3)
        d0 = nash.solve(G).direction
        d1 = nash.solve(G * scales).direction
        drift = max(drift, float(np.max(np.abs(d0 - d1))))
    rows.append(("scale-invariant direction <= 1e-6", drift <= 1e-6))

    mono_ok = True
    for _ in range(20):
        G = rng.standard_normal((8, 3))
        M = gram(G)
        a = nash.feasibility_init(M)
        phis = []
        cur = a
        for _ in range(5):
            prev_obj = float(np.sum(M @ cur)) + nash._phi(M, cur)
            cur = nash.ccp_refine(M, cur, nash.NashConfig(ccp_max_iters=1))
            phis.append(prev_obj - (float(np.sum(M @ cur)) + nash._phi(M, cur)))
        if min(phis) < -1e-9:
            mono_ok = False
    rows.append(("ccp objective non-increasing", mono_ok))
    return rows


def cmd_check(seed=0):
    rows = _check_rows(seed)
    width = max(len(name) for name, _ in rows)
    ok = True
    for name, passed in rows:
        print(f"{name.ljust(width)}  {'PASS' if passed else 'FAIL'}")
        ok = ok and passed
    return 0 if ok else 2


def build_parser():
    p = argparse.ArgumentParser(prog="nashopt",
                                description="bargaining-based multi-task optimizer")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("run", "bench"):
        sp = sub.add_parser(verb)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None)
    sp = sub.add_parser("plot")
    sp.add_argument("--config", required=True, help="path to a summary.json")
    sp.add_argument("--out", default=None)
    sp = sub.add_parser("check")
    sp.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            return cmd_run(args.config, args.out, args.jobs, args.seed)
        if args.verb == "bench":
            return cmd_bench(args.config, args.out, args.jobs, args.seed)
        if args.verb == "plot":
            return cmd_plot(args.config, args.out)
        return cmd_check(args.seed)
    except ConfigError as e:
        log.error("config error: %s", e)
        return 1
    except NashoptError as e:
        log.error("runtime failure: %s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
