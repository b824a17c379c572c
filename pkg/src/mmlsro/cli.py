"""Command-line entry point: ``mmlsro {sample,project,optimize,bench}``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import bench
from .errors import MMLSError
from .geometry import GeometryConfig
from .optimize import SolverOptions
from .point_cloud import (
    MANIFOLD_KINDS,
    add_noise,
    estimate_fill_distance,
    read_cloud_csv,
    read_points_csv,
    sample_manifold,
    write_cloud_csv,
)
from .weights import WeightSpec

EXIT_OK, EXIT_USAGE, EXIT_MMLS = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sample(args) -> int:
    cloud = sample_manifold(args.kind, args.shape or (), args.n, args.seed)
    if args.problem:
        defn = bench.get_definition(args.problem)
        if defn.kind != args.kind:
            raise ValueError(f"problem {args.problem!r} lives on {defn.kind!r}, not {args.kind!r}")
        cloud = cloud.with_values(defn.cost(cloud.points))
    if args.noise > 0:
        target = "both" if cloud.values is not None else "points"
        cloud = add_noise(cloud, args.noise, args.seed + 1, target)
    write_cloud_csv(cloud, args.out)
    return EXIT_OK


def _project(args) -> int:
    cloud = read_cloud_csv(args.cloud, d=args.d)
    h = args.h if args.h is not None else estimate_fill_distance(cloud).h_est
    geo = GeometryConfig(degree=args.degree, weight=WeightSpec(h=h, k=args.weight_k))
    queries = read_points_csv(args.points)
    if queries.ndim != 2 or queries.shape[1] != cloud.D:
        raise ValueError(f"query points must have {cloud.D} columns")
    failed = 0
    with open(args.out, "w") as fh:
        q_cols = [f"q{j}" for j in range(cloud.D)]
        p_cols = [f"p{j}" for j in range(cloud.D)]
        fh.write(",".join(q_cols + p_cols + ["support_count", "frame_iterations"]) + "\n")
        for r in queries:
            try:
                proj = geo.project(cloud, r)
                p, count, its = proj.point, proj.support_count, proj.frame.iterations
            except MMLSError as exc:
                logging.warning("projection failed: %s", exc)
                failed += 1
                p, count, its = np.full(cloud.D, np.nan), 0, 0
            fh.write(",".join([repr(float(v)) for v in r] + [repr(float(v)) for v in p] + [str(count), str(its)]) + "\n")
    return EXIT_MMLS if failed else EXIT_OK


def _options(args) -> SolverOptions:
    return SolverOptions(
        grad_tol=args.grad_tol,
        step_tol=args.step_tol,
        max_iters=args.max_iters,
        delta=args.delta,
        gamma=args.gamma,
        alpha_bar=args.alpha_bar,
        beta=args.beta,
    )


def _exit_for(termination: str) -> int:
    return EXIT_MMLS if termination == "mmls_failure" else EXIT_OK


def _optimize(args) -> int:
    noise = args.noise or 0.0
    cfg = bench.ExperimentConfig(
        problem=args.problem,
        n=args.n,
        degree=args.degree,
        noise_points=noise,
        noise_values=noise,
        seed=args.seed,
        solver=args.solver,
        mode="sampled" if args.mode == "sampled" else "explicit_gradient",
        options=_options(args),
        weight_k=args.weight_k,
        h=args.h,
        out=args.out,
    )
    report = bench.run_experiment(cfg)
    final = report.trace.records[-1] if report.trace.records else None
    print(
        f"{args.problem}: {report.termination} after {report.trace.iterations} iterations, "
        f"{report.metric_name}={report.final_metric:.6g}"
        + ("" if final is None else f", grad_norm={final.grad_norm:.3g}")
    )
    return _exit_for(report.termination)


def _bench(args) -> int:
    results = bench.run_suite(bench.suite(args.suite), args.out, workers=args.workers)
    for r in results:
        print(f"{r['label']:40s} {r['termination']:13s} {r['metric']}={r['final_metric']:.4g}")
    return EXIT_MMLS if any(r["termination"] == "mmls_failure" for r in results) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmlsro", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="sample a benchmark manifold to CSV")
    p.add_argument("--kind", required=True, choices=MANIFOLD_KINDS)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise variance")
    p.add_argument("--shape", type=int, nargs="+", help="D, (rows cols) or (rows cols rank)")
    p.add_argument("--problem", choices=sorted(bench.PROBLEMS), help="attach this problem's cost values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_sample)

    p = sub.add_parser("project", help="MMLS-project query points onto a sampled manifold")
    p.add_argument("--cloud", required=True)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--weight-k", type=float, default=1.5)
    p.add_argument("--h", type=float)
    p.add_argument("--d", type=int, help="intrinsic dimension for headerless clouds")
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_project)

    p = sub.add_parser("optimize", help="run one benchmark experiment")
    p.add_argument("--problem", required=True, choices=sorted(bench.PROBLEMS))
    p.add_argument("--solver", choices=("gd", "cg"), default="gd")
    p.add_argument("--mode", choices=("explicit", "sampled"), default="explicit")
    p.add_argument("--n", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--noise", type=float, default=0.0, help="noise variance on points and values (default 0)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grad-tol", type=float, default=0.005)
    p.add_argument("--step-tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--alpha-bar", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--beta", choices=("fr", "prp"), default="prp")
    p.add_argument("--weight-k", type=float, default=1.5)
    p.add_argument("--h", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_optimize)

    p = sub.add_parser("bench", help="run an experiment suite")
    p.add_argument("--suite", choices=("paper", "smoke"), default="smoke")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"mmlsro: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
