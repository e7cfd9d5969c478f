"""Scaled subgaussian sketch matrices, dimension planning, and the exact
small-n embedding.

The sketch is a dense m x d matrix with i.i.d. mean-0 variance-1 entries
(Rademacher by default, Gaussian optional) scaled by 1/sqrt(m), so that
E||Pi x||^2 = ||x||^2. The target dimension follows
m = ceil(C * eps^-2 * ln(max(|Y|, 2))) with |Y| = n(n-1), the size of the
direction set the guarantee must cover. When that formula meets or exceeds
n, a rank-based exact embedding into at most n dimensions is cheaper and
has zero distortion, so planning switches to the exact path.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    FormatError,
    InvalidConstant,
    InvalidEpsilon,
)
from .geometry import PointSet

RADEMACHER = "rademacher"
GAUSSIAN = "gaussian"
DEFAULT_C = 4.0

GS_DROP_TOL = 1e-10  # residual norm below which a candidate adds no rank

SKETCH_MAGIC = "TESK"


@dataclass(frozen=True)
class SketchMatrix:
    """Dense scaled sketch Pi in R^{m x d}; entries already include 1/sqrt(m)."""

    entries: np.ndarray  # (m, d)
    distribution: str
    seed: int

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    @property
    def scale(self) -> float:
        """The 1/sqrt(m) factor already baked into the entries."""
        return 1.0 / math.sqrt(self.m)


@dataclass(frozen=True)
class DimensionPlan:
    """Planned target dimension and which construction to use.

    m always carries the formula value ceil(C * eps^-2 * ln(max(n(n-1), 2)));
    in exact_small mode the real output width is rank-determined later.
    """

    m: int
    mode: str  # "sketch" | "exact_small"
    C: float
    epsilon: float


def plan_dimension(n: int, epsilon: float, C: float = DEFAULT_C) -> DimensionPlan:
    """Choose the target dimension for an n-point terminal set."""
    if not (0.0 < epsilon < 1.0):
        raise InvalidEpsilon(f"epsilon must lie in (0, 1), got {epsilon}")
    if C <= 0.0:
        raise InvalidConstant(f"C must be positive, got {C}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    size_y = n * (n - 1)
    m = math.ceil(C * epsilon**-2 * math.log(max(size_y, 2)))
    mode = "exact_small" if m >= n else "sketch"
    return DimensionPlan(m=m, mode=mode, C=float(C), epsilon=float(epsilon))


def generate_sketch(
    m: int, d: int, distribution: str = RADEMACHER, seed: int = 0
) -> SketchMatrix:
    """Draw an m x d sketch with i.i.d. entries scaled by 1/sqrt(m).

    Entries are drawn row-major from numpy's PCG64 stream, so identical
    (m, d, distribution, seed) reproduce the matrix bit-exactly.
    """
    if m < 1 or d < 1:
        raise ValueError(f"m and d must be >= 1, got m={m}, d={d}")
    rng = np.random.default_rng(seed)
    if distribution == RADEMACHER:
        raw = rng.integers(0, 2, size=(m, d)).astype(np.float64) * 2.0 - 1.0
    elif distribution == GAUSSIAN:
        raw = rng.standard_normal((m, d))
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    return SketchMatrix(
        entries=raw / math.sqrt(m), distribution=distribution, seed=int(seed)
    )


def apply_sketch(pi: SketchMatrix, x) -> np.ndarray:
    """Exact matrix-vector product Pi @ x."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != pi.d:
        raise DimensionMismatch(f"vector has dimension {x.shape[0]}, expected {pi.d}")
    return pi.entries @ x


def sketch_points(pi: SketchMatrix, xs: np.ndarray) -> np.ndarray:
    """Apply the sketch to the rows of an (n, d) array, giving (n, m)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != pi.d:
        raise DimensionMismatch(
            f"points have shape {xs.shape}, expected (*, {pi.d})"
        )
    return xs @ pi.entries.T


@dataclass(frozen=True)
class ExactEmbedding:
    """Zero-distortion terminal embedding for the small-n regime.

    Holds an orthonormal basis (rows) of E = span{x_i - x_1}. The induced
    map is u -> (coords of proj_E(u - x_1) in the basis, ||proj to E-perp||),
    which preserves every distance to the terminal set exactly: terminals
    live in E, so the perpendicular part of u - x_i never depends on i.
    """

    point_set: PointSet
    basis: np.ndarray  # (r, d), orthonormal rows

    def __post_init__(self):
        self.basis.setflags(write=False)

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def out_dim(self) -> int:
        return self.rank + 1

    @property
    def X(self) -> PointSet:
        return self.point_set

    def embed(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        if u.shape[0] != self.point_set.d:
            raise DimensionMismatch(
                f"query has dimension {u.shape[0]}, expected {self.point_set.d}"
            )
        w = u - self.point_set.points[0]
        coords = self.basis @ w
        perp = w - self.basis.T @ coords
        return np.concatenate([coords, [float(np.linalg.norm(perp))]])

    @cached_property
    def terminal_coords(self) -> np.ndarray:
        """Basis coordinates of the terminals, shape (n, rank)."""
        shifted = self.point_set.points - self.point_set.points[0]
        return shifted @ self.basis.T

    @cached_property
    def terminal_images(self) -> np.ndarray:
        # Terminals lie in E by construction; their trailing coordinate is
        # exactly 0 (outer-extension convention), not a recomputed residual.
        n = self.point_set.n
        return np.hstack([self.terminal_coords, np.zeros((n, 1))])


def exact_small_embedding(X: PointSet) -> ExactEmbedding:
    """Orthonormal basis of span{x_i - x_1} by Gram-Schmidt.

    Re-orthogonalizes each candidate twice and drops it when its residual
    norm falls below 1e-10, so the returned rows have Gram matrix within
    ~1e-15 of the identity. Rank 0 (n = 1) is legal: the map degenerates
    to u -> (||u - x_1||,).
    """
    pts = X.points
    basis: list[np.ndarray] = []
    for i in range(1, X.n):
        v = pts[i] - pts[0]
        for _ in range(2):
            for b in basis:
                v = v - np.dot(b, v) * b
        norm = float(np.linalg.norm(v))
        if norm > GS_DROP_TOL:
            basis.append(v / norm)
    mat = np.array(basis).reshape(len(basis), X.d)
    return ExactEmbedding(point_set=X, basis=mat)


def save_sketch(pi: SketchMatrix, header_path, data_path=None, C: float | None = None) -> None:
    """Serialize a sketch as a JSON header plus a binary double sidecar."""
    header_path = Path(header_path)
    if data_path is None:
        data_path = header_path.with_suffix(".bin")
    data_path = Path(data_path)
    header = {
        "magic": SKETCH_MAGIC,
        "m": pi.m,
        "d": pi.d,
        "distribution": pi.distribution,
        "seed": pi.seed,
        "C": C,
        "data": data_path.name,
    }
    header_path.write_text(
        json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )
    data_path.write_bytes(
        np.ascontiguousarray(pi.entries, dtype="<f8").tobytes(order="C")
    )


def load_sketch(header_path) -> tuple[SketchMatrix, dict]:
    """Load a serialized sketch; apply_sketch on the result is bit-exact."""
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{header_path}: invalid JSON header: {exc}") from exc
    if header.get("magic") != SKETCH_MAGIC:
        raise FormatError(f"{header_path}: bad magic {header.get('magic')!r}")
    m, d = int(header["m"]), int(header["d"])
    data_path = header_path.parent / header["data"]
    blob = data_path.read_bytes()
    if len(blob) != 8 * m * d:
        raise FormatError(
            f"{data_path}: payload length {len(blob)} != expected {8 * m * d}"
        )
    entries = np.frombuffer(blob, dtype="<f8").reshape(m, d).astype(np.float64)
    pi = SketchMatrix(
        entries=entries,
        distribution=str(header["distribution"]),
        seed=int(header["seed"]),
    )
    return pi, header
