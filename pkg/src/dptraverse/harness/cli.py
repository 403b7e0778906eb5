"""Command-line interface.

Subcommands: oracle (posterior ground truth for one observation), map (one
Stage-1 run), traverse (full D-P sweep -> CSV + SVG), verify (theory checks,
nonzero exit on failure), plot (re-render a sweep CSV).  Exit codes:
0 success, 1 check failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ..observation import observe
from ..posterior import dp_endpoints, gm_posterior, map_point, mmse
from ..priors import GaussianMixture
from ..scores import ExactPriorScore, GridPriorScore
from ..solver import map_stage
from .config import ConfigError, build_problem, load_config
from .report import emit_csv, emit_provenance, emit_svg, parse_csv
from .sweep import SweepResult, run_sweep, trial_rng


def _add_common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", required=config_required, help="path to the JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for trial chunks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dptraverse",
                                     description="distortion-perception traversal experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext, config_required in (
        ("oracle", "print exact posterior statistics and tradeoff endpoints", True),
        ("map", "run Stage 1 once and print the estimate and objective trace", True),
        ("traverse", "run the configured sweep and write CSV/SVG reports", True),
        ("verify", "run theory checks; nonzero exit on any failure", False),
        ("plot", "re-render a sweep CSV as an SVG figure", True),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common(p, config_required)
        if name == "oracle":
            p.add_argument("--json", default=None, help="also write a machine-readable record")
        if name == "plot":
            p.add_argument("--csv", required=True, help="sweep CSV to render")
    return parser


def _load(args) -> dict:
    raw = load_config(args.config)
    if args.seed is not None:
        raw = dict(raw)
        raw["seed"] = args.seed
    return raw


def cmd_oracle(args) -> int:
    raw = _load(args)
    problem = build_problem(raw)
    if not isinstance(problem.prior, GaussianMixture) or problem.codec is not None:
        print("oracle: closed-form posterior statistics need a gm prior without a codec",
              file=sys.stderr)
        return 2
    rng = trial_rng(problem.seed, 0, 0)
    x = problem.prior.sample(rng)
    obs = observe(problem.operator, problem.sigma_y, x, rng,
                  likelihood_form=problem.likelihood_form)
    post = gm_posterior(problem.prior, obs)
    ep_rng = np.random.default_rng(np.random.SeedSequence(entropy=problem.seed, spawn_key=(0xD5, 0)))
    ep = dp_endpoints(problem.prior, problem.operator, problem.sigma_y,
                      n_mc=10_000, rng=ep_rng)
    record = {
        "x_true": x.tolist(),
        "y": obs.y.tolist(),
        "mmse": mmse(post).tolist(),
        "map": map_point(post).tolist(),
        "d_star": ep.d_star,
        "p_star": ep.p_star,
    }
    for key, value in record.items():
        print(f"{key}={value}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_map(args) -> int:
    raw = _load(args)
    problem = build_problem(raw)
    rng = trial_rng(problem.seed, 0, 0)
    x = problem.prior.sample(rng)
    if isinstance(problem.prior, GaussianMixture):
        prior_score = ExactPriorScore(problem.prior, problem.schedule)
    else:
        prior_score = GridPriorScore(problem.prior, problem.schedule)
    if problem.codec is not None:
        x = problem.codec.decode(x)
    obs = observe(problem.operator, problem.sigma_y, x, rng,
                  likelihood_form=problem.likelihood_form)
    x_map, trace = map_stage(obs, prior_score, problem.schedule, problem.stage1, rng=rng)
    print("x_true=" + " ".join(f"{v:.10g}" for v in np.atleast_1d(x)))
    print("y=" + " ".join(f"{v:.10g}" for v in np.atleast_1d(obs.y)))
    print("x_map=" + " ".join(f"{v:.10g}" for v in np.atleast_1d(x_map)))
    print("objective_trace=" + " ".join(f"{v:.6g}" for v in np.atleast_1d(trace).ravel()))
    return 0


def cmd_traverse(args) -> int:
    raw = _load(args)
    os.makedirs(args.out, exist_ok=True)
    result = run_sweep(raw, jobs=args.jobs)
    csv_path = os.path.join(args.out, "sweep.csv")
    svg_path = os.path.join(args.out, "sweep.svg")
    prov_path = os.path.join(args.out, "provenance.json")
    emit_csv(result, csv_path)
    emit_svg(result, svg_path)
    emit_provenance(result, prov_path)
    for p in result.points:
        print(f"t0={p.t0} distortion={p.distortion_mean:.6g} w2={p.w2:.6g} "
              f"n={p.n_trials}")
    print(f"wrote {csv_path}, {svg_path}, {prov_path}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_verify

    raw = _load(args) if args.config else None
    results = run_verify(raw, jobs=args.jobs)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += 0 if r.passed else 1
        print(f"[{status}] {r.name}: measured={r.measured:.6g} bound={r.bound:.6g} "
              f"tol={r.tolerance:.3g}  {r.detail}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def cmd_plot(args) -> int:
    raw = _load(args)
    points = parse_csv(args.csv)
    problem = build_problem(raw)
    from .sweep import _endpoints
    from ..posterior import ideal_curve

    endpoints = _endpoints(problem)
    ideal_pts = ()
    if endpoints is not None:
        finite = [p.w2 for p in points if np.isfinite(p.w2)]
        top = max([endpoints.p_star * 1.25] + finite)
        grid = np.linspace(0.0, top, 64)
        ideal_pts = tuple((float(q), ideal_curve(endpoints, float(q))) for q in grid)
    result = SweepResult(points=points, endpoints=endpoints, ideal_points=ideal_pts,
                         provenance={"source_csv": args.csv})
    os.makedirs(args.out, exist_ok=True)
    svg_path = os.path.join(args.out, "sweep.svg")
    emit_svg(result, svg_path)
    print(f"wrote {svg_path}")
    return 0


COMMANDS = {
    "oracle": cmd_oracle,
    "map": cmd_map,
    "traverse": cmd_traverse,
    "verify": cmd_verify,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
