"""Two-step Manifold Moving Least-Squares projection.

Step one finds a local affine frame ``(q, E)`` around the query; step two
fits a weighted total-degree-``m`` polynomial ``g: R^d -> R^D`` over that
frame.  The projection is ``g(0)`` and the tangent estimate is the range of
``Dg(0)``.

Polynomials are stored in graded-lexicographic monomial order (constant
first, then ``x_1..x_d``, then the degree-2 monomials ``x_1^2, x_1 x_2, ...``)
and evaluated on coordinates divided by ``scale``, which keeps high-degree
design matrices well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import (
    EmptySupport,
    IllConditioned,
    InsufficientSupport,
    NoConvergence,
    RankDeficient,
)
from .point_cloud import SampleSet
from .weights import WeightSpec, theta


def n_monomials(d: int, m: int) -> int:
    return math.comb(d + m, m)


@lru_cache(maxsize=None)
def _grlex_plan(d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """For every non-constant monomial: index of its parent and the variable appended.

    Monomials are the sorted index tuples of ``combinations_with_replacement``,
    so each one is its parent (tuple minus last entry) times one variable.
    """
    position = {(): 0}
    parents, factors = [], []
    for deg in range(1, m + 1):
        for combo in combinations_with_replacement(range(d), deg):
            position[combo] = len(position)
            parents.append(position[combo[:-1]])
            factors.append(combo[-1])
    return np.array(parents, dtype=np.intp), np.array(factors, dtype=np.intp)


def monomials(X: np.ndarray, m: int) -> np.ndarray:
    """Evaluate all monomials of total degree <= m at the rows of ``X`` (N x d)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, d = X.shape
    parents, factors = _grlex_plan(d, m)
    out = np.empty((N, parents.size + 1))
    out[:, 0] = 1.0
    for j, (p, f) in enumerate(zip(parents, factors), start=1):
        out[:, j] = out[:, p] * X[:, f]
    return out


def monomial_basis(d: int, m: int, x) -> np.ndarray:
    """Graded-lex monomial vector of length C(d+m, m) at a single point."""
    if d < 1 or m < 0:
        raise ValueError("need d >= 1 and m >= 0")
    x = np.asarray(x, dtype=float).reshape(1, d)
    return monomials(x, m)[0]


@dataclass(frozen=True)
class FrameConfig:
    tol: float = 1e-10
    max_iters: int = 100
    roi_factor: float = 3.0
    expand_factor: float = 1.3
    max_expansions: int = 3


@dataclass(frozen=True)
class LocalFrame:
    q: np.ndarray
    E: np.ndarray
    r: np.ndarray
    iterations: int
    weight: WeightSpec

    def coords(self, pts: np.ndarray) -> np.ndarray:
        """Frame coordinates ``E^T (p - q)`` of ambient points (rows)."""
        return (pts - self.q) @ self.E


@dataclass(frozen=True)
class VectorPoly:
    degree: int
    dim: int
    coeffs: np.ndarray  # (M, D)
    scale: float = 1.0

    def __call__(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float)) / self.scale
        vals = monomials(X, self.degree) @ self.coeffs
        return vals[0] if np.ndim(x) == 1 else vals

    def unscaled_coeffs(self) -> np.ndarray:
        """Coefficients with respect to monomials of the raw frame coordinates."""
        deg = monomial_degrees(self.dim, self.degree)
        return self.coeffs / self.scale ** deg[:, None]


@lru_cache(maxsize=None)
def _degrees(d: int, m: int) -> np.ndarray:
    return np.concatenate(
        [np.full(n_monomials(d - 1, k) if d > 1 else 1, k) for k in range(m + 1)]
    )


def monomial_degrees(d: int, m: int) -> np.ndarray:
    """Total degree of each graded-lex monomial."""
    return _degrees(d, m)


@dataclass(frozen=True)
class Projection:
    point: np.ndarray
    frame: LocalFrame
    poly: VectorPoly
    support_count: int

    @property
    def weight(self) -> WeightSpec:
        return self.frame.weight


def _supported(cloud: SampleSet, center: np.ndarray, spec: WeightSpec):
    idx, dist = cloud.ball(center, spec.support)
    w = theta(spec, dist) if idx.size else np.empty(0)
    keep = w > 0
    return idx[keep], w[keep]


def local_frame(cloud: SampleSet, r, spec: WeightSpec, cfg: FrameConfig = FrameConfig()) -> LocalFrame:
    """Solve for the local affine frame ``(q, E)`` of ``r`` by alternating updates.

    ``E`` takes the top-d principal directions of the weighted second moment
    about ``q``; then ``q = q_w + E E^T (r - q_w)`` with ``q_w`` the weighted
    mean, which places ``r - q`` orthogonal to ``range(E)``.
    """
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("query point is not finite")
    d = cloud.d
    q = np.array(cloud.points[cloud.nearest(r)])
    step_tol = cfg.tol * max(spec.h, float(np.linalg.norm(r)))
    roi = cfg.roi_factor * spec.support
    for it in range(1, cfg.max_iters + 1):
        idx, w = _supported(cloud, q, spec)
        if idx.size < d + 1:
            raise EmptySupport(f"{idx.size} samples in support, need {d + 1}")
        pts = cloud.points[idx]
        q_w = w @ pts / w.sum()
        X = np.sqrt(w)[:, None] * (pts - q)
        _, s, Vt = np.linalg.svd(X, full_matrices=False)
        if s.size < d or s[d - 1] <= 1e-8 * s[0]:
            raise RankDeficient("weighted second moment has rank < d")
        E = Vt[:d].T
        q_new = q_w + E @ (E.T @ (r - q_w))
        if np.linalg.norm(q_new - r) > roi:
            raise NoConvergence("frame origin left the region of interest")
        moved = np.linalg.norm(q_new - q)
        q = q_new
        if moved <= step_tol:
            return LocalFrame(q=q, E=E, r=r, iterations=it, weight=spec)
    raise NoConvergence(f"frame iteration did not converge in {cfg.max_iters} steps")


def weighted_lstsq(A: np.ndarray, w: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Minimize ``sum_i w_i ||A_i c - Y_i||^2``.

    QR of the sqrt(w)-scaled design; normal equations with a small ridge if
    the triangular factor is numerically singular.  The right-hand sides ride
    along as extra columns, so ``Q`` is never formed.
    """
    sw = np.sqrt(w)
    As = A * sw[:, None]
    Ys = Y * (sw[:, None] if Y.ndim == 2 else sw)
    N, M = A.shape
    if N >= M:
        aug = np.hstack([As, Ys.reshape(N, -1)])
        R_aug = sla.qr(aug, mode="r", overwrite_a=True, check_finite=False)[0]
        R = R_aug[:M, :M]
        diag = np.abs(np.diag(R))
        if diag.min() > 100 * M * np.finfo(float).eps * diag.max():
            coef = sla.solve_triangular(R, R_aug[:M, M:], check_finite=False)
            if np.all(np.isfinite(coef)):
                return coef if Y.ndim == 2 else coef[:, 0]
    G = As.T @ As
    G[np.diag_indices(M)] += 1e-12 * np.trace(G) / M
    try:
        coef = sla.cho_solve(sla.cho_factor(G, check_finite=False), As.T @ Ys)
    except np.linalg.LinAlgError as exc:
        raise IllConditioned("weighted least-squares system is singular") from exc
    if not np.all(np.isfinite(coef)):
        raise IllConditioned("weighted least-squares solution is not finite")
    return coef


def _local_design(cloud: SampleSet, frame: LocalFrame, m: int, spec: WeightSpec):
    idx, w = _supported(cloud, frame.q, spec)
    need = n_monomials(cloud.d, m)
    if idx.size < need:
        raise InsufficientSupport(f"{idx.size} samples in support, need {need}")
    scale = spec.support
    A = monomials(frame.coords(cloud.points[idx]) / scale, m)
    return idx, w, A, scale


def fit_vector_poly(cloud: SampleSet, frame: LocalFrame, m: int, spec: Optional[WeightSpec] = None) -> VectorPoly:
    """Weighted fit of ``g`` with ``g(E^T (r_i - q)) ~ r_i`` over the frame."""
    spec = spec or frame.weight
    idx, w, A, scale = _local_design(cloud, frame, m, spec)
    coef = weighted_lstsq(A, w, cloud.points[idx] - frame.q)
    coef[0] += frame.q
    return VectorPoly(degree=m, dim=cloud.d, coeffs=coef, scale=scale)


def mmls_project(
    cloud: SampleSet,
    r,
    degree: int,
    spec: WeightSpec,
    cfg: FrameConfig = FrameConfig(),
) -> Projection:
    """Project ``r`` onto the approximate manifold.

    The weight support grows by ``cfg.expand_factor`` up to
    ``cfg.max_expansions`` times while the support is too thin, or while the
    fitted ``g(0)`` lands outside the support ball around ``q`` (a wild
    extrapolation that can happen on noisy clouds).
    """
    r = np.asarray(r, dtype=float)
    last: Exception = EmptySupport("no attempt made")
    for j in range(cfg.max_expansions + 1):
        s = spec if j == 0 else spec.scaled(cfg.expand_factor**j)
        try:
            frame = local_frame(cloud, r, s, cfg)
            poly = fit_vector_poly(cloud, frame, degree, s)
            if np.linalg.norm(poly.coeffs[0] - frame.q) > s.support:
                raise IllConditioned("projected point left the support ball")
        except (EmptySupport, RankDeficient, InsufficientSupport, IllConditioned) as exc:
            last = exc
            continue
        count = int(_supported(cloud, frame.q, s)[0].size)
        return Projection(point=poly.coeffs[0].copy(), frame=frame, poly=poly, support_count=count)
    raise last


def poly_jacobian_origin(poly: VectorPoly, frame: Optional[LocalFrame] = None) -> np.ndarray:
    """D x d differential of ``g`` at the frame origin (ambient coordinates)."""
    if poly.degree < 1:
        raise ValueError("degree-0 polynomial has no differential")
    return poly.coeffs[1 : poly.dim + 1].T / poly.scale
