"""Query-time outer extension: feasibility solve plus the lift coordinate.

Embedding a query u against a sketched terminal set works in two steps.
First find u' in the radius-R ball of R^m (R = distance from u to its
nearest terminal, the anchor x_k) that approximately matches the inner
products <u', Pi v_i> = <u - x_k, v_i> along every unit direction
v_i = (x_i - x_k)/||x_i - x_k||. Then lift to R^{m+1}:

    f(u) = (Pi x_k + u', sqrt(R^2 - ||u'||^2))

which preserves the anchor distance exactly and every other terminal
distance up to the constraint residual plus the sketch's hull distortion.
Terminals themselves map to (Pi x_i, 0).

The feasibility step is a projected subgradient method rather than the
semidefinite program the existence argument suggests; it is dependency-free
and ample at desk scale, and a non-converged solve is still embeddable (the
achieved residual is an honest distortion certificate).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch
from .geometry import PointSet, distances_to
from .sketch import SketchMatrix, sketch_points

_TINY = 1e-300


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    tol: float = 1e-3  # relative slack on the epsilon * R residual target
    step_rule: str = "polyak"  # "polyak" | "diminishing"


@dataclass(frozen=True)
class ExtensionSolution:
    """One query's feasibility solve.

    residual is the max constraint violation normalized by radius; it is
    recomputed from scratch on the returned point, so it can be trusted even
    when converged is False (the lift is still valid, the distortion bound
    just degrades to the residual level).
    """

    u_prime: np.ndarray  # (m,)
    radius: float  # ||u - x_k||
    residual: float
    iterations: int
    anchor_index: int
    converged: bool

    def __post_init__(self):
        self.u_prime.setflags(write=False)


@dataclass(frozen=True)
class TerminalEmbedder:
    """Frozen bundle answering embedding queries against a fixed sketch.

    Immutable and shareable: every solve is independent and side-effect
    free, so concurrent readers are safe.
    """

    X: PointSet
    Pi: SketchMatrix
    embedded_X: np.ndarray  # (n, m) = Pi applied to each terminal
    epsilon: float
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.embedded_X.setflags(write=False)

    @property
    def m(self) -> int:
        return self.Pi.m

    @property
    def out_dim(self) -> int:
        return self.Pi.m + 1

    @cached_property
    def terminal_images(self) -> np.ndarray:
        """(n, m+1) images of the terminals, trailing coordinate exactly 0."""
        return np.hstack([self.embedded_X, np.zeros((self.X.n, 1))])

    def solve(self, u) -> ExtensionSolution:
        return solve_extension(u, self)

    def embed(self, u) -> np.ndarray:
        return lift(u, solve_extension(u, self), self)

    def embed_with_info(self, u):
        sol = solve_extension(u, self)
        return lift(u, sol, self), sol


def build_embedder(
    X: PointSet,
    pi: SketchMatrix,
    epsilon: float,
    solver: SolverConfig | None = None,
) -> TerminalEmbedder:
    if pi.d != X.d:
        raise DimensionMismatch(f"sketch expects dimension {pi.d}, points have {X.d}")
    return TerminalEmbedder(
        X=X,
        Pi=pi,
        embedded_X=sketch_points(pi, X.points),
        epsilon=float(epsilon),
        solver=solver or SolverConfig(),
    )


def solve_extension(u, E: TerminalEmbedder) -> ExtensionSolution:
    """Projected-subgradient feasibility solve for one query.

    With anchor k = nearest terminal and R = ||u - x_k||, minimizes
    g(z) = max_i |<z, Pi v_i> - <u - x_k, v_i>| over the ball ||z|| <= R:

      * start at z0 = R * Pi(u - x_k) / max(||Pi(u - x_k)||, 1e-300), the
        minimax witness direction, which is typically near-feasible
      * Polyak step toward target 0 on the active constraint, then radial
        projection back onto the ball
      * track the best iterate; stop once its residual is within
        epsilon * R * (1 + tol) or max_iters is exhausted

    Degenerate cases short-circuit: R = 0 (u is a terminal) and n = 1 (no
    constraints) both return z = 0 with residual 0.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    X = E.X
    if u.shape[0] != X.d:
        raise DimensionMismatch(f"query has dimension {u.shape[0]}, expected {X.d}")
    dists = distances_to(u, X)
    k = int(np.argmin(dists))
    R = float(dists[k])
    m = E.m
    if R == 0.0 or X.n == 1:
        return ExtensionSolution(
            u_prime=np.zeros(m),
            radius=R,
            residual=0.0,
            iterations=0,
            anchor_index=k,
            converged=True,
        )

    # Constraint system in unit directions, built from the precomputed
    # terminal sketches: Pi v_i = (Pi x_i - Pi x_k) / ||x_i - x_k||.
    mask = np.arange(X.n) != k
    diff = X.points[mask] - X.points[k]
    norms = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    V = diff / norms[:, None]
    W = (E.embedded_X[mask] - E.embedded_X[k]) / norms[:, None]
    P = u - X.points[k]
    t = V @ P
    row_sq = np.einsum("ij,ij->i", W, W)

    pip = E.Pi.entries @ P
    z = R * pip / max(float(np.linalg.norm(pip)), _TINY)
    nz = float(np.linalg.norm(z))
    if nz > R:
        z *= R / nz

    cfg = E.solver
    target = E.epsilon * R * (1.0 + cfg.tol)

    r = W @ z - t
    g = float(np.max(np.abs(r)))
    best_z = z.copy()
    best_g = g
    it = 0
    while best_g > target and it < cfg.max_iters:
        a = int(np.argmax(np.abs(r)))
        denom = row_sq[a]
        if denom <= _TINY:
            break  # active constraint has a null direction; cannot improve it
        sign = 1.0 if r[a] >= 0.0 else -1.0
        if cfg.step_rule == "diminishing":
            step = sign * R / ((it + 1) * max(np.sqrt(denom), _TINY))
        else:
            step = sign * g / denom
        z = z - step * W[a]
        nz = float(np.linalg.norm(z))
        if nz > R:
            z *= R / nz
        r = W @ z - t
        g = float(np.max(np.abs(r)))
        if g < best_g:
            best_g = g
            best_z = z.copy()
        it += 1

    # Recompute the residual from scratch on the returned point.
    final = float(np.max(np.abs(W @ best_z - t)))
    return ExtensionSolution(
        u_prime=best_z,
        radius=R,
        residual=final / R,
        iterations=it,
        anchor_index=k,
        converged=final <= target,
    )


def lift(u, solution: ExtensionSolution, E: TerminalEmbedder) -> np.ndarray:
    """Assemble the (m+1)-dim image (Pi x_k + u', sqrt(R^2 - ||u'||^2)).

    The radicand is clamped at 0: ||u'|| can exceed R by a few ulps after
    projection, and the clamp keeps the lift NaN-free.
    """
    R = solution.radius
    head = E.embedded_X[solution.anchor_index] + solution.u_prime
    sq = R * R - float(solution.u_prime @ solution.u_prime)
    return np.concatenate([head, [np.sqrt(max(sq, 0.0))]])


def embed_terminal(E: TerminalEmbedder, u) -> np.ndarray:
    """Full query map: terminals go to (Pi u, 0), everything else through
    the feasibility solve and lift."""
    return E.embed(u)


def efn_extend(X: PointSet, f_of_X: np.ndarray, u, metric_dim: int | None = None) -> np.ndarray:
    """Snap-to-nearest baseline extension: (f(x_k), ||u - x_k||).

    Simple and fast, but its terminal distortion is bounded away from 1
    (sqrt(10) in the worst case), which is exactly what the solver-based
    extension improves on. metric_dim, when given, validates the width of
    the base embedding.
    """
    f_of_X = np.asarray(f_of_X, dtype=np.float64)
    if f_of_X.ndim != 2 or f_of_X.shape[0] != X.n:
        raise DimensionMismatch(
            f"base images have shape {f_of_X.shape}, expected ({X.n}, m)"
        )
    if metric_dim is not None and f_of_X.shape[1] != metric_dim:
        raise DimensionMismatch(
            f"base images are {f_of_X.shape[1]}-dim, expected {metric_dim}"
        )
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    dists = distances_to(u, X)
    k = int(np.argmin(dists))
    return np.concatenate([f_of_X[k], [float(dists[k])]])


@dataclass(frozen=True)
class EfnEmbedder:
    """Harness adapter running the snap-to-nearest baseline over a base map."""

    X: PointSet
    base_images: np.ndarray  # (n, m)

    def __post_init__(self):
        self.base_images.setflags(write=False)

    @property
    def out_dim(self) -> int:
        return self.base_images.shape[1] + 1

    @cached_property
    def terminal_images(self) -> np.ndarray:
        return np.hstack([self.base_images, np.zeros((self.X.n, 1))])

    def embed(self, u) -> np.ndarray:
        return efn_extend(self.X, self.base_images, u)
