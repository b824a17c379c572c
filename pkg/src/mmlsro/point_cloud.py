"""Sample clouds: storage, exact radius queries, density estimates, generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

MANIFOLD_KINDS = ("prelim_surface", "sphere", "stiefel", "fixed_rank")


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Point cloud in R^D sampled from a d-dimensional manifold.

    ``points`` and ``values`` are stored read-only; every operation that
    changes data returns a new instance.
    """

    points: np.ndarray
    d: int
    values: Optional[np.ndarray] = None
    kind: Optional[str] = None
    tree: cKDTree = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "tree", cKDTree(self.points))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def D(self) -> int:
        return self.points.shape[1]

    def ball(self, x: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of samples with ``||r_i - x|| < radius``.

        Sorted by distance, ties broken by index.
        """
        idx = np.asarray(self.tree.query_ball_point(x, radius), dtype=np.intp)
        if idx.size == 0:
            return idx, np.empty(0)
        dist = np.linalg.norm(self.points[idx] - x, axis=1)
        keep = dist < radius
        idx, dist = idx[keep], dist[keep]
        order = np.lexsort((idx, dist))
        return idx[order], dist[order]

    def nearest(self, x: np.ndarray) -> int:
        """Index of the closest sample; the lowest index wins ties."""
        k = min(8, self.n)
        dist, idx = self.tree.query(x, k=k)
        dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
        ties = idx[dist == dist[0]]
        return int(ties.min())

    def with_values(self, values: Optional[np.ndarray]) -> "SampleSet":
        return build_cloud(self.points, values, self.d, kind=self.kind)


@dataclass(frozen=True)
class DensityEstimate:
    h_est: float
    delta_est: float


def build_cloud(points, values=None, d: int = 1, kind: Optional[str] = None) -> SampleSet:
    """Validate raw samples and wrap them in an indexed :class:`SampleSet`."""
    if isinstance(points, np.ndarray):
        if points.ndim != 2:
            raise ValueError("ragged input: points must be a 2-D array")
        arr = np.array(points, dtype=float)
    else:
        rows = [np.asarray(p, dtype=float).ravel() for p in points]
        if not rows:
            raise ValueError("points must be nonempty")
        if len({r.size for r in rows}) != 1:
            raise ValueError("ragged input: rows have differing lengths")
        arr = np.vstack(rows)
    if arr.shape[0] == 0:
        raise ValueError("points must be nonempty")
    D = arr.shape[1]
    if not (1 <= d < D):
        raise ValueError(f"intrinsic dimension d={d} must satisfy 1 <= d < D={D}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain non-finite entries")
    arr.setflags(write=False)
    vals = None
    if values is not None:
        vals = np.array(values, dtype=float).ravel()
        if vals.size != arr.shape[0]:
            raise ValueError(
                f"values length mismatch: {vals.size} values for {arr.shape[0]} points"
            )
        vals.setflags(write=False)
    return SampleSet(points=arr, d=int(d), values=vals, kind=kind)


def neighbors_within(cloud: SampleSet, x, radius: float) -> list[tuple[int, float]]:
    """All ``(index, distance)`` pairs with distance strictly below ``radius``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("query point is not finite")
    if radius <= 0:
        raise ValueError("radius must be positive")
    idx, dist = cloud.ball(x, radius)
    return [(int(i), float(t)) for i, t in zip(idx, dist)]


def estimate_fill_distance(cloud: SampleSet) -> DensityEstimate:
    """Fill distance and separation radius estimates.

    ``h_est`` is twice the median distance to the ceil(2d)-th nearest
    neighbour; ``delta_est`` is half the smallest pairwise distance, exact
    through the kd-tree nearest-neighbour query.
    """
    if cloud.n < 2:
        raise ValueError("need at least two samples to estimate density")
    k = min(math.ceil(2 * cloud.d), cloud.n - 1)
    dist, _ = cloud.tree.query(cloud.points, k=k + 1)
    dist = dist.reshape(cloud.n, k + 1)
    h_est = 2.0 * float(np.median(dist[:, k]))
    delta_est = 0.5 * float(dist[:, 1].min())
    return DensityEstimate(h_est=h_est, delta_est=delta_est)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _orthonormal(rng: np.random.Generator, n: int, rows: int, cols: int) -> np.ndarray:
    """``n`` Gaussian-QR orthonormal (rows, cols) frames with R diagonal made positive."""
    G = rng.standard_normal((n, rows, cols))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diagonal(R, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    return Q * signs[:, None, :]


def _column_stack(mats: np.ndarray) -> np.ndarray:
    n = mats.shape[0]
    return mats.transpose(0, 2, 1).reshape(n, -1)


def sample_manifold(kind: str, params: Sequence[int] = (), n: int = 1, seed: int = 0) -> SampleSet:
    """Draw ``n`` samples of a benchmark manifold, deterministic under ``seed``.

    Matrix manifolds are flattened column by column.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    params = tuple(int(p) for p in params)
    rng = _rng(seed)
    if kind == "prelim_surface":
        D = params[0] if params else 100
        if D < 3:
            raise ValueError("prelim_surface needs D >= 3")
        x12 = rng.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.ones((n, D))
        pts[:, :2] = x12
        pts[:, 2] = np.sin(2 * np.pi * (x12[:, 0] ** 2 + x12[:, 1] ** 2))
        d = 2
    elif kind == "sphere":
        D = params[0] if params else 3
        if D < 2:
            raise ValueError("sphere needs D >= 2")
        g = rng.standard_normal((n, D))
        pts = g / np.linalg.norm(g, axis=1, keepdims=True)
        d = D - 1
    elif kind == "stiefel":
        rows, cols = params if params else (3, 2)
        if not (1 <= cols <= rows) or rows * cols - cols * (cols + 1) // 2 < 1:
            raise ValueError(f"invalid Stiefel shape {(rows, cols)}")
        pts = _column_stack(_orthonormal(rng, n, rows, cols))
        d = rows * cols - cols * (cols + 1) // 2
    elif kind == "fixed_rank":
        rows, cols, rank = params if params else (2, 2, 1)
        # full rank would make the manifold open in R^{rows*cols}, so d == D
        if not (1 <= rank < min(rows, cols)):
            raise ValueError(f"invalid fixed-rank shape {(rows, cols, rank)}")
        U = _orthonormal(rng, n, rows, rank)
        V = _orthonormal(rng, n, cols, rank)
        s = np.abs(rng.standard_normal((n, rank)))
        pts = _column_stack(np.einsum("nik,nk,njk->nij", U, s, V))
        d = (rows + cols - rank) * rank
    else:
        raise ValueError(f"unknown manifold kind {kind!r}; expected one of {MANIFOLD_KINDS}")
    return build_cloud(pts, None, d, kind=kind)


def add_noise(cloud: SampleSet, variance: float, seed: int, target: str = "points") -> SampleSet:
    """Return a copy with i.i.d. N(0, variance) noise on points and/or values.

    On the prelim surface only the first three coordinates are perturbed.
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if target not in ("points", "values", "both"):
        raise ValueError(f"unknown noise target {target!r}")
    if target in ("values", "both") and cloud.values is None:
        raise ValueError("cannot add noise to values: the cloud has no values")
    points = np.array(cloud.points)
    values = None if cloud.values is None else np.array(cloud.values)
    if variance > 0:
        rng = _rng(seed)
        std = math.sqrt(variance)
        if target in ("points", "both"):
            cols = 3 if cloud.kind == "prelim_surface" else cloud.D
            points[:, :cols] += rng.normal(0.0, std, size=(cloud.n, cols))
        if target in ("values", "both"):
            values += rng.normal(0.0, std, size=cloud.n)
    return build_cloud(points, values, cloud.d, kind=cloud.kind)


def write_cloud_csv(cloud: SampleSet, path) -> None:
    """Write ``# D=.. d=.. values=..`` header plus one full-precision row per sample."""
    has_values = cloud.values is not None
    with open(path, "w") as fh:
        fh.write(f"# D={cloud.D} d={cloud.d} values={int(has_values)}\n")
        for i in range(cloud.n):
            row = [repr(float(v)) for v in cloud.points[i]]
            if has_values:
                row.append(repr(float(cloud.values[i])))
            fh.write(",".join(row) + "\n")


def _parse_header(line: str) -> dict[str, int]:
    fields = {}
    for token in line.lstrip("#").split():
        key, _, val = token.partition("=")
        fields[key] = int(val)
    return fields


def read_cloud_csv(path, d: Optional[int] = None) -> SampleSet:
    """Read a cloud CSV written by :func:`write_cloud_csv`.

    Headerless files are accepted when ``d`` is given; all columns are
    then taken as coordinates.
    """
    text = Path(path).read_text().splitlines()
    header = {}
    if text and text[0].startswith("#"):
        header = _parse_header(text[0])
        text = text[1:]
    rows = [[float(tok) for tok in line.split(",")] for line in text if line.strip()]
    data = np.array(rows, dtype=float)
    if data.ndim != 2:
        raise ValueError("ragged input in cloud CSV")
    has_values = bool(header.get("values", 0))
    if "D" in header and data.shape[1] != header["D"] + int(has_values):
        raise ValueError("column count does not match header")
    points = data[:, :-1] if has_values else data
    values = data[:, -1] if has_values else None
    dim = header.get("d", d)
    if dim is None:
        raise ValueError("intrinsic dimension missing: no header and no d given")
    return build_cloud(points, values, dim)


def read_points_csv(path) -> np.ndarray:
    """Plain query points, one per row; ``#`` lines are skipped."""
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            rows.append([float(tok) for tok in line.split(",")])
    if len({len(r) for r in rows}) > 1:
        raise ValueError("ragged input in points CSV")
    return np.array(rows, dtype=float)
