"""Point-set model, nearest-neighbor lookup, and the normalized direction set.

Everything here is exact-arithmetic bookkeeping: no randomness, no tolerance
knobs beyond the documented ones. Distances use plain double precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DuplicatePoint, EmptyInput, NonFinitePoint

UNIT_NORM_TOL = 1e-12
CLOSE_PAIR_DIST = 1e-9


@dataclass(frozen=True)
class PointSet:
    """An ordered set of n distinct points in R^d."""

    points: np.ndarray  # (n, d), read-only

    def __post_init__(self):
        self.points.setflags(write=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class DirectionSet:
    """All n(n-1) normalized ordered differences of a point set.

    directions[r] = (x_i - x_j) / ||x_i - x_j|| where (i, j) = pairs[r].
    Closed under negation by construction, since (i, j) and (j, i) both
    appear. close_pairs lists unordered index pairs closer than 1e-9,
    surfaced as a conditioning diagnostic only.
    """

    directions: np.ndarray  # (n(n-1), d)
    pairs: np.ndarray  # (n(n-1), 2) ints
    close_pairs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.directions.setflags(write=False)
        self.pairs.setflags(write=False)

    def __len__(self) -> int:
        return self.directions.shape[0]


def build_point_set(raw) -> PointSet:
    """Validate a list of d-vectors (or an (n, d) array) into a PointSet.

    Raises EmptyInput, DimensionMismatch (ragged rows), NonFinitePoint,
    or DuplicatePoint (exact coordinate equality; -0.0 counts as 0.0).
    Input order is preserved.
    """
    if isinstance(raw, np.ndarray):
        if raw.size == 0 or raw.ndim == 0:
            raise EmptyInput("point set must contain at least one point")
        if raw.ndim == 1:
            raw = raw.reshape(1, -1)
        if raw.ndim != 2:
            raise DimensionMismatch(f"expected 2-D point array, got ndim={raw.ndim}")
        pts = np.array(raw, dtype=np.float64)
    else:
        rows = [np.asarray(r, dtype=np.float64).reshape(-1) for r in raw]
        if not rows:
            raise EmptyInput("point set must contain at least one point")
        d = rows[0].shape[0]
        for i, r in enumerate(rows):
            if r.shape[0] != d:
                raise DimensionMismatch(
                    f"point {i} has dimension {r.shape[0]}, expected {d}"
                )
        pts = np.vstack(rows)
    if pts.shape[1] == 0:
        raise DimensionMismatch("points must have dimension >= 1")
    if not np.all(np.isfinite(pts)):
        raise NonFinitePoint("points must have finite coordinates")

    # Exact duplicate detection. Adding 0.0 maps -0.0 to +0.0 so that rows
    # equal under IEEE comparison hash identically.
    seen: dict[bytes, int] = {}
    for i in range(pts.shape[0]):
        key = (pts[i] + 0.0).tobytes()
        if key in seen:
            raise DuplicatePoint(f"points {seen[key]} and {i} are identical")
        seen[key] = i
    return PointSet(points=pts)


def distances_to(u, X: PointSet) -> np.ndarray:
    """Euclidean distances from u to every point of X, in index order."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.shape[0] != X.d:
        raise DimensionMismatch(f"query has dimension {u.shape[0]}, expected {X.d}")
    diff = X.points - u
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def nearest_point(u, X: PointSet) -> int:
    """Index of the closest point of X to u; ties go to the lowest index."""
    return int(np.argmin(distances_to(u, X)))


def direction_set(X: PointSet) -> DirectionSet:
    """Build the set of all n(n-1) unit directions (x_i - x_j)/||x_i - x_j||.

    Pairs are enumerated lexicographically over (i, j), i != j, so the
    layout is deterministic. Empty for n = 1.
    """
    n, d = X.n, X.d
    if n < 2:
        return DirectionSet(
            directions=np.zeros((0, d)), pairs=np.zeros((0, 2), dtype=np.int64)
        )
    idx_i, idx_j = np.where(~np.eye(n, dtype=bool))
    diffs = X.points[idx_i] - X.points[idx_j]
    norms = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
    # Distinctness guarantees norms > 0; near-zero pairs are legal but flagged.
    close = [
        (int(i), int(j))
        for i, j, nv in zip(idx_i, idx_j, norms)
        if i < j and nv < CLOSE_PAIR_DIST
    ]
    dirs = diffs / norms[:, None]
    pairs = np.column_stack([idx_i, idx_j]).astype(np.int64)
    return DirectionSet(directions=dirs, pairs=pairs, close_pairs=tuple(close))
