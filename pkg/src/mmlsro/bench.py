"""Benchmark problems, metrics and the experiment runner."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import InitialProjectionFailure
from .geometry import GeometryConfig
from .mmls import FrameConfig, n_monomials
from .optimize import Problem, SolverOptions, Trace, conjugate_gradient, gradient_descent
from .point_cloud import SampleSet, add_noise, estimate_fill_distance, sample_manifold
from .weights import WeightSpec

log = logging.getLogger(__name__)

A_SPHERE = np.array([[1.64, 0.9, 0.71], [0.9, 0.82, 0.33], [0.71, 0.33, 0.7]])
A_STIEFEL3 = np.array([[0.23, 0.35, 0.39], [0.35, 1.33, 1.06], [0.39, 1.06, 1.27]])
A_STIEFEL4 = np.array(
    [
        [2.77, 2.4, 1.49, 2.15],
        [2.4, 2.66, 1.18, 2.12],
        [1.49, 1.18, 1.51, 1.92],
        [2.15, 2.12, 1.92, 3.13],
    ]
)
PCA_SEED = 20230301
A_PCA = np.random.Generator(np.random.PCG64(PCA_SEED)).standard_normal((200, 3))
A_LOW_RANK = np.array([[-0.13, -0.24], [-0.49, 0.11]])


def unstack(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Column-stacked vector(s) back to (…, rows, cols) matrices."""
    x = np.asarray(x, dtype=float)
    return np.swapaxes(x.reshape(x.shape[:-1] + (cols, rows)), -1, -2)


def stack(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.swapaxes(X, -1, -2).reshape(X.shape[:-2] + (-1,))


# --- costs and Euclidean gradients; every cost accepts one point or a batch of rows


def _prelim_cost(x):
    x = np.asarray(x, dtype=float)
    return np.sin(2 * np.pi * x[..., 0]) + 4 * x[..., 1] ** 2 + x[..., 0]


def _prelim_grad(x):
    g = np.zeros_like(np.asarray(x, dtype=float))
    g[..., 0] = 2 * np.pi * np.cos(2 * np.pi * x[..., 0]) + 1
    g[..., 1] = 8 * x[..., 1]
    return g


def _rayleigh(A):
    def cost(x):
        x = np.asarray(x, dtype=float)
        return -np.einsum("...i,ij,...j->...", x, A, x)

    def grad(x):
        return -2 * np.asarray(x, dtype=float) @ A

    return cost, grad


def _trace_cost(A):
    p = A.shape[0]

    def cost(x):
        X = unstack(x, p, 2)
        return -np.einsum("...ij,ik,...kj->...", X, A, X)

    def grad(x):
        return stack(-2 * (A @ unstack(x, p, 2)))

    return cost, grad


def _pca_cost(A):
    C = A.T @ A
    p = A.shape[1]

    def cost(x):
        X = unstack(x, p, 2)
        R = A - A @ X @ np.swapaxes(X, -1, -2)
        return np.sum(R**2, axis=(-2, -1))

    def grad(x):
        X = unstack(x, p, 2)
        P = X @ np.swapaxes(X, -1, -2)
        IP = np.eye(p) - P
        return stack(-2 * (C @ IP @ X + IP @ C @ X))

    return cost, grad


def _low_rank_cost(A):
    a = stack(A)

    def cost(x):
        return np.sum((np.asarray(x, dtype=float) - a) ** 2, axis=-1)

    def grad(x):
        return 2 * (np.asarray(x, dtype=float) - a)

    return cost, grad


# --- metrics


def _top_sum(A, k):
    return float(np.sum(np.linalg.eigvalsh(A)[-k:]))


def _eig_metric(A, k):
    lam = _top_sum(A, k)
    if k == 1:
        cost, _ = _rayleigh(A)
    else:
        cost, _ = _trace_cost(A)
    return lambda x: abs(lam + float(cost(x))) / lam


def _pca_metric(A):
    V = np.linalg.svd(A, full_matrices=False)[2][:2].T
    VV = V @ V.T

    def metric(x):
        X = unstack(x, A.shape[1], 2)
        return float(np.linalg.norm(VV - X @ X.T) / np.linalg.norm(VV))

    return metric


def _low_rank_metric(A):
    U, s, Vt = np.linalg.svd(A)
    best = s[0] * np.outer(U[:, 0], Vt[0])

    def metric(x):
        X = unstack(x, *A.shape)
        return float(np.linalg.norm(X - best) / np.linalg.norm(best))

    return metric


@dataclass(frozen=True)
class ProblemDef:
    name: str
    kind: str
    shape: tuple
    D: int
    d: int
    n: int
    degree: int
    noise: float
    cost: Callable
    grad: Callable
    metric: Callable
    metric_name: str


def _registry() -> dict[str, ProblemDef]:
    defs = [
        ProblemDef("prelim", "prelim_surface", (100,), 100, 2, 50000, 1, 1e-3,
                   _prelim_cost, _prelim_grad, lambda x: float(_prelim_cost(x)), "cost"),
        ProblemDef("sphere_eig", "sphere", (3,), 3, 2, 40000, 3, 1e-4,
                   *_rayleigh(A_SPHERE), _eig_metric(A_SPHERE, 1), "suboptimality"),
        ProblemDef("stiefel_eig3", "stiefel", (3, 2), 6, 3, 42875, 3, 1e-3,
                   *_trace_cost(A_STIEFEL3), _eig_metric(A_STIEFEL3, 2), "suboptimality"),
        ProblemDef("stiefel_eig4", "stiefel", (4, 2), 8, 5, 100000, 4, 1e-4,
                   *_trace_cost(A_STIEFEL4), _eig_metric(A_STIEFEL4, 2), "suboptimality"),
        ProblemDef("stiefel_pca", "stiefel", (3, 2), 6, 3, 42875, 6, 1e-4,
                   *_pca_cost(A_PCA), _pca_metric(A_PCA), "relative_frobenius_error"),
        ProblemDef("fixed_rank", "fixed_rank", (2, 2, 1), 4, 3, 100000, 12, 1e-4,
                   *_low_rank_cost(A_LOW_RANK), _low_rank_metric(A_LOW_RANK), "relative_frobenius_error"),
    ]
    return {p.name: p for p in defs}


PROBLEMS = _registry()


def get_definition(name: str) -> ProblemDef:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; expected one of {sorted(PROBLEMS)}") from None


def compute_metric(name: str, x) -> float:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("metric input is not finite")
    return float(get_definition(name).metric(x))


def _seeds(seed: int) -> tuple[int, int, int]:
    a, b, c = np.random.SeedSequence(seed).generate_state(3)
    return int(a), int(b), int(c)


def support_calibrated_h(cloud: SampleSet, degree: int, k: float, factor: float = 2.0, probes: int = 500,
                         count: Optional[int] = None) -> float:
    """Smallest h whose support ball ``k h`` holds ``count`` samples (median over probes).

    ``count`` defaults to ``factor * C(d+m, m)``, about twice the number of
    polynomial coefficients.
    """
    need = count if count is not None else int(math.ceil(factor * n_monomials(cloud.d, degree)))
    need = min(need, cloud.n - 1)
    rng = np.random.default_rng(0)
    pick = rng.choice(cloud.n, size=min(probes, cloud.n), replace=False)
    dist, _ = cloud.tree.query(cloud.points[pick], k=need + 1)
    return float(np.median(np.reshape(dist, (len(pick), -1))[:, -1])) / k


# Samples per support on noisy clouds; averages the noise in both fits.
NOISY_SUPPORT_COUNT = 1500


def build_cloud_for(defn: ProblemDef, n: int, seed: int, noise_points: float = 0.0, noise_values: float = 0.0) -> SampleSet:
    """Clean samples, cost values from the clean points, then independent noise."""
    s_sample, s_noise, _ = _seeds(seed)
    clean = sample_manifold(defn.kind, defn.shape, n, s_sample)
    cloud = clean.with_values(defn.cost(clean.points))
    if noise_points > 0:
        cloud = add_noise(cloud, noise_points, s_noise, "points")
    if noise_values > 0:
        cloud = add_noise(cloud, noise_values, s_noise + 1, "values")
    return cloud


def geometry_for(cloud: SampleSet, degree: int, weight_k: float = 1.5, h: Optional[float] = None,
                 step_guard: Optional[float] = None, frame: FrameConfig = FrameConfig(),
                 noisy: bool = False) -> GeometryConfig:
    """Geometry settings; ``h`` defaults to the larger of the fill-distance
    estimate and the support calibration (a wider one on noisy clouds)."""
    if h is None:
        count = NOISY_SUPPORT_COUNT if noisy else None
        h = max(estimate_fill_distance(cloud).h_est, support_calibrated_h(cloud, degree, weight_k, count=count))
    return GeometryConfig(degree=degree, weight=WeightSpec(h=h, k=weight_k), frame=frame, step_guard=step_guard)


def make_problem(name: str, seed: int = 0, *, mode: str = "explicit_gradient", n: Optional[int] = None,
                 degree: Optional[int] = None, noise: float = 0.0, weight_k: float = 1.5,
                 h: Optional[float] = None):
    """Build a registry problem.

    Returns ``(problem, n_default, m_default, noise_default)``; the problem is
    built with the overrides given (clean samples unless ``noise`` > 0).
    """
    defn = get_definition(name)
    n_used = n or defn.n
    m_used = degree or defn.degree
    cloud = build_cloud_for(defn, n_used, seed, noise, noise)
    geo = geometry_for(cloud, m_used, weight_k, h, noisy=noise > 0)
    problem = Problem(cloud=cloud, geometry=geo, mode=mode, cost=defn.cost, euclid_grad=defn.grad)
    return problem, defn.n, defn.degree, defn.noise


@dataclass
class ExperimentConfig:
    problem: str
    n: Optional[int] = None
    degree: Optional[int] = None
    noise_points: float = 0.0
    noise_values: float = 0.0
    seed: int = 0
    solver: str = "gd"
    mode: str = "explicit_gradient"
    options: SolverOptions = field(default_factory=SolverOptions)
    weight_k: float = 1.5
    h: Optional[float] = None
    step_guard: Optional[float] = None
    out: Optional[str] = None

    def __post_init__(self):
        get_definition(self.problem)
        if self.solver not in ("gd", "cg"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class Report:
    config: dict
    trace: Trace
    metric_name: str
    final_metric: float
    metric_trace: list
    h: float
    initial_index: int

    @property
    def termination(self) -> str:
        return self.trace.termination

    def to_dict(self) -> dict:
        final = self.trace.records[-1] if self.trace.records else None
        return {
            "config": self.config,
            "termination": self.trace.termination,
            "metric": self.metric_name,
            "final_metric": self.final_metric,
            "final_cost": None if final is None else final.cost,
            "final_grad_norm": None if final is None else final.grad_norm,
            "final_point": None if final is None else [float(v) for v in final.point],
            "h": self.h,
            "initial_index": self.initial_index,
            "totals": {
                "iterations": self.trace.iterations,
                "cost_evals": self.trace.cost_evals,
                "projections": self.trace.projections,
            },
        }


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = asdict(cfg)
    echo["options"] = asdict(cfg.options)
    return echo


def run_experiment(config: ExperimentConfig) -> Report:
    """Sample, perturb, pick a random start from the cloud, solve, and write outputs."""
    defn = get_definition(config.problem)
    n = config.n or defn.n
    m = config.degree or defn.degree
    cloud = build_cloud_for(defn, n, config.seed, config.noise_points, config.noise_values)
    noisy = config.noise_points > 0 or config.noise_values > 0
    geo = geometry_for(cloud, m, config.weight_k, config.h, config.step_guard, noisy=noisy)
    problem = Problem(cloud=cloud, geometry=geo, mode=config.mode, cost=defn.cost, euclid_grad=defn.grad)
    start = int(np.random.default_rng(_seeds(config.seed)[2]).integers(cloud.n))
    solve = gradient_descent if config.solver == "gd" else conjugate_gradient
    log.info("%s: n=%d m=%d h=%.4g start=%d", config.problem, n, m, geo.weight.h, start)
    try:
        trace = solve(problem, cloud.points[start], config.options)
    except InitialProjectionFailure:
        trace = Trace(termination="mmls_failure")
    metric_trace = [float(defn.metric(rec.point)) for rec in trace.records]
    report = Report(
        config=_config_echo(config),
        trace=trace,
        metric_name=defn.metric_name,
        final_metric=metric_trace[-1] if metric_trace else float("nan"),
        metric_trace=metric_trace,
        h=geo.weight.h,
        initial_index=start,
    )
    if config.out is not None:
        write_outputs(report, config.out)
    return report


def write_outputs(report: Report, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.trace.to_csv(out / "trace.csv")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))


def suite(name: str) -> list[ExperimentConfig]:
    """Experiment list for ``paper`` (full defaults) or ``smoke`` (reduced n)."""
    if name not in ("paper", "smoke"):
        raise ValueError(f"unknown suite {name!r}")
    configs = []
    for defn in PROBLEMS.values():
        if name == "smoke":
            n = max(defn.n // 10, 2000)
            mode = "sampled" if defn.name == "prelim" else "explicit_gradient"
            configs.append(ExperimentConfig(defn.name, n=n, mode=mode, options=SolverOptions(max_iters=200)))
            continue
        modes = ("sampled",) if defn.name == "prelim" else ("explicit_gradient", "sampled")
        solvers = ("gd",) if defn.name == "prelim" else ("gd", "cg")
        for noise in (0.0, defn.noise):
            for mode in modes:
                for solver in solvers:
                    configs.append(
                        ExperimentConfig(defn.name, noise_points=noise, noise_values=noise, solver=solver, mode=mode)
                    )
    return configs


def experiment_label(cfg: ExperimentConfig) -> str:
    noisy = "noisy" if (cfg.noise_points or cfg.noise_values) else "clean"
    mode = "zo" if cfg.mode == "sampled" else "explicit"
    return f"{cfg.problem}_{cfg.solver}_{mode}_{noisy}"


def _run_one(cfg: ExperimentConfig) -> dict:
    rep = run_experiment(cfg)
    return {"label": experiment_label(cfg), **rep.to_dict()}


def run_suite(configs: list[ExperimentConfig], out_dir, workers: Optional[int] = None) -> list[dict]:
    """Run independent experiments in worker processes; one subdirectory per run."""
    from concurrent.futures import ProcessPoolExecutor

    out = Path(out_dir)
    jobs = [replace(cfg, out=str(out / experiment_label(cfg))) for cfg in configs]
    if workers == 1:
        results = [_run_one(cfg) for cfg in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    summary = [
        {k: r[k] for k in ("label", "termination", "metric", "final_metric", "final_grad_norm")} for r in results
    ]
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return results
