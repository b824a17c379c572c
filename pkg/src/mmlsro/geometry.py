"""Approximate Riemannian toolbox built on MMLS projections.

The tangent estimate at a projected point is the range of the MMLS
polynomial differential ``B = Dg(0)``.  ``B`` is not orthonormalized; the
Gram factor ``B^T B`` carries the skew.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import RankDeficient
from .mmls import FrameConfig, Projection, mmls_project, poly_jacobian_origin
from .point_cloud import SampleSet
from .weights import WeightSpec


@dataclass(frozen=True)
class TangentBasis:
    B: np.ndarray
    gram_factor: tuple = field(repr=False)

    @classmethod
    def from_matrix(cls, B: np.ndarray) -> "TangentBasis":
        B = np.asarray(B, dtype=float)
        s = np.linalg.svd(B, compute_uv=False)
        if s[-1] <= 1e-10 * s[0]:
            raise RankDeficient("tangent basis is not of full column rank")
        G = B.T @ B
        try:
            factor = sla.cho_factor(G, check_finite=False)
        except np.linalg.LinAlgError:
            d = G.shape[0]
            factor = sla.cho_factor(G + 1e-14 * np.trace(G) / d * np.eye(d), check_finite=False)
        return cls(B=B, gram_factor=factor)

    @classmethod
    def from_projection(cls, proj: Projection) -> "TangentBasis":
        return cls.from_matrix(poly_jacobian_origin(proj.poly, proj.frame))

    @property
    def dim(self) -> int:
        return self.B.shape[1]

    def gram_solve(self, y: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self.gram_factor, y, check_finite=False)

    def projector(self) -> np.ndarray:
        """Dense ``B G^{-1} B^T``; for diagnostics and tests."""
        return self.B @ self.gram_solve(self.B.T)

    def orthonormal(self) -> np.ndarray:
        """Orthonormal basis of the same range (diagnostics only)."""
        return np.linalg.qr(self.B)[0]


@dataclass(frozen=True)
class GeometryConfig:
    """Degree, weight and frame settings shared by every projection.

    ``step_guard`` is the maximal tangent-step length ``Q``; it defaults to
    the weight support radius ``k h``.
    """

    degree: int
    weight: WeightSpec
    frame: FrameConfig = FrameConfig()
    step_guard: Optional[float] = None

    def __post_init__(self):
        if self.step_guard is None:
            object.__setattr__(self, "step_guard", self.weight.support)
        if not self.step_guard > 0:
            raise ValueError("step guard Q must be positive")

    def project(self, cloud: SampleSet, r) -> Projection:
        return mmls_project(cloud, r, self.degree, self.weight, self.frame)


def orth_project(basis: TangentBasis, v) -> np.ndarray:
    """Orthogonal projection of ``v`` onto ``range(B)``."""
    v = np.asarray(v, dtype=float)
    return basis.B @ basis.gram_solve(basis.B.T @ v)


def approx_riemannian_grad(basis: TangentBasis, euclid_grad) -> np.ndarray:
    """Tangent projection of a known Euclidean gradient."""
    return orth_project(basis, euclid_grad)


def approx_riemannian_grad_sampled(basis: TangentBasis, intrinsic_grad) -> np.ndarray:
    """Lift a frame-coordinate gradient of the cost fit: ``B G^{-1} grad``."""
    return basis.B @ basis.gram_solve(np.asarray(intrinsic_grad, dtype=float))


def retract(cloud: SampleSet, r, xi, cfg: GeometryConfig) -> np.ndarray:
    """``P(r + xi)``.  Callers keep ``||xi|| <= cfg.step_guard``."""
    return cfg.project(cloud, np.asarray(r, dtype=float) + xi).point


def vector_transport(cloud: SampleSet, r, eta, xi, cfg: GeometryConfig) -> tuple[np.ndarray, np.ndarray]:
    """Retract along ``eta`` and project ``xi`` onto the tangent estimate there."""
    proj = cfg.project(cloud, np.asarray(r, dtype=float) + eta)
    basis = TangentBasis.from_projection(proj)
    return proj.point, orth_project(basis, xi)
