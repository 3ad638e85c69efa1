"""Poincare ball operations at fixed curvature 1, numerically guarded.

Points live strictly inside the open unit ball. Every constructing
operation re-projects its result to norm <= 1 - eps_boundary so downstream
artanh calls cannot diverge. All operations are pure functions on
immutable values and safe for unrestricted concurrent use.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import EPS_BOUNDARY, EPS_DIV


@dataclass(frozen=True)
class BallConfig:
    """Numerical guards: boundary clamp margin and division floor."""

    eps_boundary: float = EPS_BOUNDARY
    eps_div: float = EPS_DIV

    def __post_init__(self):
        if not 0.0 < self.eps_boundary < 1e-3:
            raise ValueError(f"eps_boundary out of range: {self.eps_boundary}")
        if self.eps_div <= 0.0:
            raise ValueError("eps_div must be positive")


DEFAULT_BALL = BallConfig()


@dataclass(frozen=True)
class PoincarePoint:
    """A point strictly inside the unit ball; coords are read-only float64."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coords must be a non-empty 1-D vector")
        if not np.all(np.isfinite(c)):
            raise ValueError("coords must be finite")
        if float(c @ c) >= 1.0:
            raise ValueError("point outside the open unit ball")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))

    @classmethod
    def origin(cls, dim: int) -> "PoincarePoint":
        return cls(np.zeros(dim))

    @classmethod
    def project(cls, coords, cfg: BallConfig = DEFAULT_BALL) -> "PoincarePoint":
        """Construct from arbitrary coordinates, rescaling into the ball."""
        return cls(project_to_ball(np.asarray(coords, dtype=np.float64), cfg))


def project_to_ball(c: np.ndarray, cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Rescale a vector to norm <= 1 - eps_boundary if it is outside."""
    r = float(np.linalg.norm(c))
    limit = 1.0 - cfg.eps_boundary
    if r > limit:
        return c * (limit / r)
    return c


def _check_same_dim(x: PoincarePoint, y: PoincarePoint):
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")


def mobius_add(x: PoincarePoint, y: PoincarePoint,
               cfg: BallConfig = DEFAULT_BALL) -> PoincarePoint:
    """Gyrovector addition x (+) y."""
    _check_same_dim(x, y)
    u, v = x.coords, y.coords
    dot = float(u @ v)
    su = float(u @ u)
    sv = float(v @ v)
    den = 1.0 + 2.0 * dot + su * sv
    if abs(den) < cfg.eps_div:
        den = cfg.eps_div
    out = ((1.0 + 2.0 * dot + sv) * u + (1.0 - su) * v) / den
    return PoincarePoint(project_to_ball(out, cfg))


def distance(x: PoincarePoint, y: PoincarePoint,
             cfg: BallConfig = DEFAULT_BALL) -> float:
    """Hyperbolic distance 2 artanh ||(-x) (+) y||."""
    _check_same_dim(x, y)
    neg_x = PoincarePoint(-x.coords)
    t = mobius_add(neg_x, y, cfg).norm()
    t = min(t, 1.0 - cfg.eps_boundary)
    return 2.0 * float(np.arctanh(t))


def mobius_matvec(A: np.ndarray, x: PoincarePoint,
                  cfg: BallConfig = DEFAULT_BALL) -> PoincarePoint:
    """Apply a Euclidean linear map (p x m) to a ball point of dim m.

    Defined as 0 when Ax = 0 or x = 0 (continuous limit).
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != x.dim:
        raise ValueError(f"matrix shape {A.shape} incompatible with dim {x.dim}")
    rho = x.norm()
    w = A @ x.coords
    r = float(np.linalg.norm(w))
    if rho < cfg.eps_div or r < cfg.eps_div:
        return PoincarePoint.origin(A.shape[0])
    rho_c = min(rho, 1.0 - cfg.eps_boundary)
    scale = float(np.tanh(r / rho * np.arctanh(rho_c))) / r
    return PoincarePoint(project_to_ball(scale * w, cfg))


def conformal_factor(x: PoincarePoint) -> float:
    """Local metric scale 2 / (1 - ||x||^2), always >= 2."""
    return 2.0 / (1.0 - float(x.coords @ x.coords))


def gyromidpoint(points: Sequence[PoincarePoint],
                 weights: Sequence[float] | None = None,
                 cfg: BallConfig = DEFAULT_BALL) -> PoincarePoint:
    """Weighted centroid via the Einstein midpoint in Klein coordinates."""
    if len(points) == 0:
        raise ValueError("gyromidpoint of empty point list")
    dim = points[0].dim
    for p in points:
        if p.dim != dim:
            raise ValueError("dimension mismatch in gyromidpoint")
    P = np.stack([p.coords for p in points])
    if weights is None:
        w = np.ones(len(points))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(points),) or np.any(w < 0.0):
            raise ValueError("weights must be non-negative, one per point")
        if float(w.sum()) <= 0.0:
            raise ValueError("weights must have positive sum")
    return PoincarePoint(gyromidpoint_coords(P, w, cfg))


def gyromidpoint_coords(P: np.ndarray, w: np.ndarray,
                        cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Array-level Einstein midpoint: rows of P are ball points."""
    sq = np.einsum("ij,ij->i", P, P)
    K = P * (2.0 / (1.0 + sq))[:, None]          # Poincare -> Klein
    ksq = np.clip(np.einsum("ij,ij->i", K, K), 0.0, 1.0 - cfg.eps_div)
    gamma = 1.0 / np.sqrt(1.0 - ksq)             # Lorentz factors
    coef = w * gamma
    mid = (coef @ K) / float(coef.sum())
    msq = float(mid @ mid)
    if msq >= 1.0:
        mid = mid * ((1.0 - cfg.eps_boundary) / np.sqrt(msq))
        msq = float(mid @ mid)
    back = mid / (1.0 + np.sqrt(max(1.0 - msq, 0.0)))  # Klein -> Poincare
    return project_to_ball(back, cfg)


__all__ = [
    "BallConfig", "DEFAULT_BALL", "PoincarePoint", "project_to_ball",
    "mobius_add", "distance", "mobius_matvec", "conformal_factor",
    "gyromidpoint", "gyromidpoint_coords",
]
