"""Compactly supported C^inf weight used by every weighted least-squares stage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class WeightSpec:
    """Weight ``theta(k; t) = exp(-t^2 / (t - k h)^2)`` on ``[0, k h)``.

    Attributes
    ----------
    h : float
        Fill distance (ambient length units).
    k : float
        Support multiplier; the support radius is ``k * h``.
    """

    h: float
    k: float = 1.5

    def __post_init__(self):
        if not (self.k > 0 and self.h > 0):
            raise ValueError(f"weight needs k > 0 and h > 0, got k={self.k}, h={self.h}")

    @property
    def support(self) -> float:
        return self.k * self.h

    def scaled(self, factor: float) -> "WeightSpec":
        return WeightSpec(h=self.h * factor, k=self.k)


def theta(spec: WeightSpec, t):
    """Evaluate the weight at distance(s) ``t >= 0``.

    Scalars in, float out; arrays in, array out.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise ValueError("weight argument must be nonnegative")
    kh = spec.support
    gap2 = (t_arr - kh) ** 2
    inside = (t_arr < kh) & (gap2 >= _EPS * t_arr**2)
    out = np.zeros_like(t_arr)
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        out[inside] = np.exp(-t_arr[inside] ** 2 / gap2[inside])
    if np.ndim(t) == 0:
        return float(out)
    return out
