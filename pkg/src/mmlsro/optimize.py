"""Gradient descent and conjugate gradient on the MMLS approximate manifold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from time import perf_counter
from typing import Callable, Optional

import numpy as np

from .errors import InitialProjectionFailure, MMLSError, NonDescentDirection, StepTooSmall
from .func_approx import approx_value_and_grad, fit_scalar_poly
from .geometry import (
    GeometryConfig,
    TangentBasis,
    approx_riemannian_grad,
    approx_riemannian_grad_sampled,
    orth_project,
)
from .mmls import Projection
from .point_cloud import SampleSet

MODES = ("explicit_gradient", "sampled")
BETA_RULES = ("fletcher_reeves", "polak_ribiere_plus", "zero")
TERMINATIONS = ("grad_tol", "step_tol", "max_iters", "mmls_failure")

_MODE_ALIASES = {"explicit": "explicit_gradient", "zo": "sampled"}
_BETA_ALIASES = {"fr": "fletcher_reeves", "prp": "polak_ribiere_plus", "pr+": "polak_ribiere_plus", "none": "zero"}


@dataclass
class Problem:
    """Cost plus constraint cloud.

    ``explicit_gradient`` mode calls ``cost`` and ``euclid_grad`` on ambient
    points; ``sampled`` mode uses only the cost samples carried by the cloud.
    """

    cloud: SampleSet
    geometry: GeometryConfig
    mode: str = "explicit_gradient"
    cost: Optional[Callable[[np.ndarray], float]] = None
    euclid_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        self.mode = _MODE_ALIASES.get(self.mode, self.mode)
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "explicit_gradient" and (self.cost is None or self.euclid_grad is None):
            raise ValueError("explicit_gradient mode needs cost and euclid_grad")
        if self.mode == "sampled" and self.cloud.values is None:
            raise ValueError("sampled mode needs cost samples on the cloud")


@dataclass(frozen=True)
class SolverOptions:
    grad_tol: float = 0.005
    step_tol: float = 1e-10
    max_iters: int = 1000
    delta: float = 0.1
    gamma: float = 0.5
    alpha_bar: float = 1.0
    beta: str = "polak_ribiere_plus"
    fixed_step: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta", _BETA_ALIASES.get(self.beta, self.beta))
        if self.beta not in BETA_RULES:
            raise ValueError(f"unknown beta rule {self.beta!r}")
        if not (0 < self.delta < 0.25):
            raise ValueError("Armijo delta must lie in (0, 0.25)")
        if not (0 < self.gamma < 1):
            raise ValueError("shrink factor gamma must lie in (0, 1)")
        if not (self.grad_tol > 0 and self.step_tol > 0 and self.alpha_bar > 0):
            raise ValueError("tolerances and alpha_bar must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise ValueError("fixed_step must be positive")


@dataclass
class IterationRecord:
    iter: int
    cost: float
    grad_norm: float
    step_size: float
    backtracks: int
    wall_seconds: float
    slope: float = 0.0
    point: Optional[np.ndarray] = None


@dataclass
class Trace:
    records: list = field(default_factory=list)
    termination: Optional[str] = None
    projections: int = 0
    cost_evals: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.records])

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def iterations(self) -> int:
        return max(len(self.records) - 1, 0)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,cost,grad_norm,step_size,backtracks,wall_seconds\n")
            for rec in self.records:
                fh.write(
                    f"{rec.iter},{rec.cost!r},{rec.grad_norm!r},{rec.step_size!r},"
                    f"{rec.backtracks},{rec.wall_seconds!r}\n"
                )
            fh.write(f"# terminated={self.termination}\n")


@dataclass(frozen=True)
class Iterate:
    point: np.ndarray
    projection: Projection
    basis: TangentBasis
    cost: float
    rgrad: np.ndarray

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.rgrad))


def eval_cost_and_grad(problem: Problem, r, projection: Projection, basis: Optional[TangentBasis] = None):
    """Cost and approximate Riemannian gradient at the projected point ``r``."""
    basis = basis or TangentBasis.from_projection(projection)
    if problem.mode == "explicit_gradient":
        cost = float(problem.cost(r))
        rgrad = approx_riemannian_grad(basis, problem.euclid_grad(r))
    else:
        geo = problem.geometry
        poly = fit_scalar_poly(problem.cloud, projection.frame, geo.degree, projection.weight)
        cost, intrinsic = approx_value_and_grad(poly)
        rgrad = approx_riemannian_grad_sampled(basis, intrinsic)
    return cost, rgrad


class _Evaluator:
    """Projection and cost evaluation with work counters."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.projections = 0
        self.cost_evals = 0

    def iterate_at(self, r: np.ndarray) -> Iterate:
        self.projections += 1
        proj = self.problem.geometry.project(self.problem.cloud, r)
        basis = TangentBasis.from_projection(proj)
        self.cost_evals += 1
        cost, rgrad = eval_cost_and_grad(self.problem, proj.point, proj, basis)
        return Iterate(point=proj.point, projection=proj, basis=basis, cost=cost, rgrad=rgrad)


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    iterate: Iterate
    backtracks: int
    slope: float

    @property
    def new_point(self) -> np.ndarray:
        return self.iterate.point

    @property
    def new_cost(self) -> float:
        return self.iterate.cost


def armijo_backtracking(
    problem: Problem,
    current: Iterate,
    opts: SolverOptions,
    direction: Optional[np.ndarray] = None,
    evaluator: Optional[_Evaluator] = None,
) -> LineSearchResult:
    """Backtrack from ``min(alpha_bar, Q / ||dir||)`` until sufficient decrease.

    ``direction=None`` means steepest descent, with slope ``||grad||^2``.
    A trial whose projection fails counts as a rejected trial.
    """
    ev = evaluator or _Evaluator(problem)
    if direction is None:
        direction = -current.rgrad
        slope = current.grad_norm**2
    else:
        slope = -float(np.dot(current.rgrad, direction))
        if slope <= 0:
            raise NonDescentDirection("direction is not a descent direction")
    dir_norm = float(np.linalg.norm(direction))
    if not dir_norm > 0:
        raise NonDescentDirection("zero search direction")
    alpha = min(opts.alpha_bar, problem.geometry.step_guard / dir_norm)
    count = 0
    while alpha >= opts.step_tol:
        try:
            trial = ev.iterate_at(current.point + alpha * direction)
        except MMLSError:
            trial = None
        if trial is not None and current.cost - trial.cost >= opts.delta * alpha * slope:
            return LineSearchResult(alpha=alpha, iterate=trial, backtracks=count, slope=slope)
        alpha *= opts.gamma
        count += 1
    raise StepTooSmall(f"step size fell below {opts.step_tol} after {count} reductions")


def _fixed_step(problem, current, opts, direction, ev) -> LineSearchResult:
    direction = -current.rgrad if direction is None else direction
    alpha = min(opts.fixed_step, problem.geometry.step_guard / float(np.linalg.norm(direction)))
    count = 0
    while alpha >= opts.step_tol:
        try:
            trial = ev.iterate_at(current.point + alpha * direction)
        except MMLSError:
            alpha *= opts.gamma
            count += 1
            continue
        return LineSearchResult(alpha, trial, count, -float(np.dot(current.rgrad, direction)))
    raise StepTooSmall(f"step size fell below {opts.step_tol}")


def _start(problem: Problem, x0, ev: _Evaluator) -> Iterate:
    try:
        return ev.iterate_at(np.asarray(x0, dtype=float))
    except MMLSError as exc:
        raise InitialProjectionFailure(f"initial point could not be projected: {exc}") from exc


def _beta(rule: str, old: Iterate, new: Iterate) -> float:
    g0_sq = old.grad_norm**2
    if rule == "zero" or g0_sq == 0:
        return 0.0
    g1 = new.rgrad
    if rule == "fletcher_reeves":
        return new.grad_norm**2 / g0_sq
    transported = orth_project(new.basis, old.rgrad)
    return max(0.0, float(np.dot(g1, g1 - transported)) / g0_sq)


def _run(problem: Problem, x0, opts: SolverOptions, conjugate: bool) -> Trace:
    ev = _Evaluator(problem)
    t0 = perf_counter()
    it = _start(problem, x0, ev)
    trace = Trace()
    direction = None  # None: steepest descent
    for k in range(opts.max_iters + 1):
        reason = None
        if it.grad_norm <= opts.grad_tol:
            reason = "grad_tol"
        elif k == opts.max_iters:
            reason = "max_iters"
        else:
            if direction is not None and float(np.dot(direction, it.rgrad)) >= 0:
                direction = None
            try:
                if opts.fixed_step is not None:
                    step = _fixed_step(problem, it, opts, direction, ev)
                else:
                    step = armijo_backtracking(problem, it, opts, direction, ev)
            except StepTooSmall:
                reason = "step_tol"
            except MMLSError:
                reason = "mmls_failure"
        if reason is not None:
            trace.records.append(
                IterationRecord(k, it.cost, it.grad_norm, 0.0, 0, perf_counter() - t0, 0.0, it.point)
            )
            trace.termination = reason
            break
        trace.records.append(
            IterationRecord(
                k, it.cost, it.grad_norm, step.alpha, step.backtracks,
                perf_counter() - t0, step.slope, it.point,
            )
        )
        new = step.iterate
        if conjugate:
            beta = _beta(opts.beta, it, new)
            previous = -it.rgrad if direction is None else direction
            direction = None if beta == 0 else -new.rgrad + beta * orth_project(new.basis, previous)
        it = new
    trace.projections = ev.projections
    trace.cost_evals = ev.cost_evals
    return trace


def gradient_descent(problem: Problem, x0, opts: SolverOptions = SolverOptions()) -> Trace:
    """Riemannian steepest descent with Armijo backtracking (or a fixed step).

    Raises :class:`InitialProjectionFailure` if ``x0`` cannot be projected.
    """
    return _run(problem, x0, opts, conjugate=False)


def conjugate_gradient(problem: Problem, x0, opts: SolverOptions = SolverOptions()) -> Trace:
    """Riemannian nonlinear CG; the previous direction moves by tangent projection.

    Falls back to steepest descent whenever the direction stops being a
    descent direction.
    """
    return _run(problem, x0, opts, conjugate=True)
