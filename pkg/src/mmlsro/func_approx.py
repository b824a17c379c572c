"""Local polynomial approximation of cost samples over an MMLS frame."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MissingValues
from .mmls import LocalFrame, _local_design, weighted_lstsq
from .point_cloud import SampleSet
from .weights import WeightSpec


@dataclass(frozen=True)
class ScalarPoly:
    degree: int
    dim: int
    coeffs: np.ndarray  # (M,)
    scale: float = 1.0


def fit_scalar_poly(
    cloud: SampleSet, frame: LocalFrame, m: int, spec: Optional[WeightSpec] = None
) -> ScalarPoly:
    """Weighted fit of the cost samples against monomials of the frame coordinates."""
    if cloud.values is None:
        raise MissingValues("cloud carries no cost samples")
    spec = spec or frame.weight
    idx, w, A, scale = _local_design(cloud, frame, m, spec)
    coef = weighted_lstsq(A, w, cloud.values[idx])
    return ScalarPoly(degree=m, dim=cloud.d, coeffs=coef, scale=scale)


def approx_value_and_grad(poly: ScalarPoly) -> tuple[float, np.ndarray]:
    """Value and gradient of the fitted polynomial at the frame origin.

    The gradient is in frame coordinates (length d).
    """
    if poly.degree < 1:
        raise ValueError("degree-0 fit carries no gradient")
    value = float(poly.coeffs[0])
    grad = poly.coeffs[1 : poly.dim + 1] / poly.scale
    return value, grad
