"""Gradient machinery for probe training.

Euclidean parameters take standard Adam steps. Ball-constrained parameters
take Riemannian Adam steps: the ambient gradient is rescaled by the inverse
metric ((1 - ||x||^2) / 2)^2, first/second moments are kept in tangent
coordinates without parallel transport, and the update is retracted with
the exponential map. A central finite-difference checker validates the
hand-derived analytic gradients.

Optimizer state is single-owner: one training loop per AdamState.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import DEFAULT_BALL, BallConfig, PoincarePoint, project_to_ball


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 < b < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")


@dataclass
class ParamSet:
    """Named parameters: plain matrices plus ball-point rows.

    ``hyperbolic`` values are (k, d) arrays whose rows lie strictly inside
    the unit ball; the same structure doubles as the gradient container
    (ambient Euclidean gradients for the hyperbolic entries).
    """

    euclidean: dict[str, np.ndarray] = field(default_factory=dict)
    hyperbolic: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ParamSet":
        return ParamSet(
            {k: v.copy() for k, v in self.euclidean.items()},
            {k: v.copy() for k, v in self.hyperbolic.items()},
        )

    def check_ball(self, cfg: BallConfig = DEFAULT_BALL):
        for name, rows in self.hyperbolic.items():
            sq = np.einsum("ij,ij->i", rows, rows)
            if np.any(sq >= 1.0):
                raise ValueError(f"hyperbolic param {name!r} left the ball")


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam_state(params: ParamSet) -> AdamState:
    state = AdamState()
    for name, w in params.euclidean.items():
        state.m[("e", name)] = np.zeros_like(w)
        state.v[("e", name)] = np.zeros_like(w)
    for name, rows in params.hyperbolic.items():
        state.m[("h", name)] = np.zeros_like(rows)
        state.v[("h", name)] = np.zeros_like(rows)
    return state


def riemannian_grad(x: np.ndarray, euclid_grad: np.ndarray) -> np.ndarray:
    """Rescale an ambient gradient by the inverse metric at x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(euclid_grad, dtype=np.float64)
    if x.shape != g.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {g.shape}")
    scale = ((1.0 - float(x @ x)) / 2.0) ** 2
    return g * scale


def riemannian_grad_rows(X: np.ndarray, G: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", X, X)
    return G * (((1.0 - sq) / 2.0) ** 2)[:, None]


def exp_map_coords(x: np.ndarray, v: np.ndarray,
                   cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """exp_x(v): Mobius-translate the origin map exp_0 to base point x."""
    nv = float(np.linalg.norm(v))
    if nv < cfg.eps_div:
        return x.copy()
    sq = float(x @ x)
    lam = 2.0 / max(1.0 - sq, cfg.eps_div)
    step = np.tanh(lam * nv / 2.0) * (v / nv)
    # x (+) step, inlined from geometry.mobius_add for array operands
    dot = float(x @ step)
    ss = float(step @ step)
    den = 1.0 + 2.0 * dot + sq * ss
    if abs(den) < cfg.eps_div:
        den = cfg.eps_div
    out = ((1.0 + 2.0 * dot + ss) * x + (1.0 - sq) * step) / den
    return project_to_ball(out, cfg)


def exp_map(x: PoincarePoint, v: np.ndarray,
            cfg: BallConfig = DEFAULT_BALL) -> PoincarePoint:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (x.dim,):
        raise ValueError(f"tangent vector shape {v.shape} != ({x.dim},)")
    return PoincarePoint(exp_map_coords(x.coords, v, cfg))


def adam_step(params: ParamSet, grads: ParamSet, state: AdamState,
              cfg: OptimConfig, ball: BallConfig = DEFAULT_BALL) -> ParamSet:
    """One Adam update. Returns new params; mutates state in place."""
    for name, g in list(grads.euclidean.items()) + list(grads.hyperbolic.items()):
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for {name!r}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    out = ParamSet()

    for name, w in params.euclidean.items():
        g = grads.euclidean[name]
        m = state.m[("e", name)]
        v = state.v[("e", name)]
        m[:] = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v[:] = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        out.euclidean[name] = w - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)

    for name, rows in params.hyperbolic.items():
        g = riemannian_grad_rows(rows, grads.hyperbolic[name])
        m = state.m[("h", name)]
        v = state.v[("h", name)]
        m[:] = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v[:] = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        update = -cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        new_rows = np.empty_like(rows)
        for i in range(rows.shape[0]):
            new_rows[i] = exp_map_coords(rows[i], update[i], ball)
        out.hyperbolic[name] = new_rows

    out.check_ball(ball)
    return out


@dataclass
class GradCheckReport:
    max_rel_err: float
    checked: int
    skipped: int
    tol: float
    worst: tuple | None = None

    @property
    def passed(self) -> bool:
        return self.checked == 0 or self.max_rel_err < self.tol


LossFn = Callable[[ParamSet], tuple[float, ParamSet]]


def check_gradient(loss_fn: LossFn, params: ParamSet, tol: float,
                   h: float = 1e-5) -> GradCheckReport:
    """Central finite differences against the analytic gradient.

    Coordinates where both gradients are below 1e-6 in magnitude are
    skipped (the relative error is meaningless there).
    """
    _, grads = loss_fn(params)
    max_rel = 0.0
    checked = 0
    skipped = 0
    worst = None

    def fd(group: str, name: str, idx):
        probe = params.copy()
        target = getattr(probe, group)[name]
        target[idx] += h
        up, _ = loss_fn(probe)
        target[idx] -= 2.0 * h
        down, _ = loss_fn(probe)
        return (up - down) / (2.0 * h)

    for group in ("euclidean", "hyperbolic"):
        for name, g in getattr(grads, group).items():
            for idx in np.ndindex(g.shape):
                a = float(g[idx])
                n = fd(group, name, idx)
                if max(abs(a), abs(n)) <= 1e-6:
                    skipped += 1
                    continue
                rel = abs(a - n) / max(abs(a), abs(n))
                checked += 1
                if rel > max_rel:
                    max_rel = rel
                    worst = (group, name, idx, a, n, rel)
    return GradCheckReport(max_rel, checked, skipped, tol, worst)


__all__ = [
    "OptimConfig", "ParamSet", "AdamState", "init_adam_state",
    "riemannian_grad", "riemannian_grad_rows", "exp_map", "exp_map_coords",
    "adam_step", "GradCheckReport", "check_gradient",
]
