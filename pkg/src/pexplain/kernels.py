"""Hot numeric kernels: hyperbolic distances, structural-loss gradients and
cluster-pair weight evaluation.

Each kernel exists twice: a vectorized pure-numpy implementation
(``*_np``) and a loop implementation compiled with numba when the active
backend is ``numba`` (see :mod:`pexplain._backend`). The loop sources are
kept importable uncompiled so ``pe bench-backend`` can time both variants
in one process.

All points are float64 row vectors strictly inside the unit ball; callers
are responsible for ball clamping. Guards here only prevent division by
zero and artanh blow-up.
"""
from __future__ import annotations

import math

import numpy as np

from ._backend import HAVE_NUMBA, USE_NUMBA, backend_name

EPS_BOUNDARY = 1e-5
EPS_DIV = 1e-15

# --------------------------------------------------------------------------
# pairwise Poincare distance (curvature 1)
#
# d(x, y) = 2 artanh(||(-x) (+) y||) with the closed-form gyro-norm
#   ||(-x) (+) y||^2 = ||x - y||^2 / (1 - 2<x,y> + ||x||^2 ||y||^2)
# --------------------------------------------------------------------------


def _dist_pair_loops(u, v):
    d = u.shape[0]
    dot = 0.0
    su = 0.0
    sv = 0.0
    diff2 = 0.0
    for k in range(d):
        dot += u[k] * v[k]
        su += u[k] * u[k]
        sv += v[k] * v[k]
        dk = u[k] - v[k]
        diff2 += dk * dk
    den = 1.0 - 2.0 * dot + su * sv
    if den < EPS_DIV:
        den = EPS_DIV
    t = math.sqrt(diff2 / den)
    if t > 1.0 - EPS_BOUNDARY:
        t = 1.0 - EPS_BOUNDARY
    return 2.0 * math.atanh(t)


def dist_pair_np(u, v):
    dot = float(np.dot(u, v))
    su = float(np.dot(u, u))
    sv = float(np.dot(v, v))
    diff2 = float(np.dot(u - v, u - v))
    den = max(1.0 - 2.0 * dot + su * sv, EPS_DIV)
    t = min(math.sqrt(diff2 / den), 1.0 - EPS_BOUNDARY)
    return 2.0 * math.atanh(t)


def _dist_matrix_loops(P):
    m, d = P.shape
    out = np.zeros((m, m))
    sq = np.zeros(m)
    for i in range(m):
        s = 0.0
        for k in range(d):
            s += P[i, k] * P[i, k]
        sq[i] = s
    for i in range(m):
        for j in range(i + 1, m):
            dot = 0.0
            diff2 = 0.0
            for k in range(d):
                dot += P[i, k] * P[j, k]
                dk = P[i, k] - P[j, k]
                diff2 += dk * dk
            den = 1.0 - 2.0 * dot + sq[i] * sq[j]
            if den < EPS_DIV:
                den = EPS_DIV
            t = math.sqrt(diff2 / den)
            if t > 1.0 - EPS_BOUNDARY:
                t = 1.0 - EPS_BOUNDARY
            val = 2.0 * math.atanh(t)
            out[i, j] = val
            out[j, i] = val
    return out


def dist_matrix_np(P):
    sq = np.einsum("ij,ij->i", P, P)
    G = P @ P.T
    diff2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * G, 0.0)
    den = np.maximum(1.0 - 2.0 * G + np.outer(sq, sq), EPS_DIV)
    t = np.clip(np.sqrt(diff2 / den), 0.0, 1.0 - EPS_BOUNDARY)
    out = 2.0 * np.arctanh(t)
    np.fill_diagonal(out, 0.0)
    return out


def _dist_rows_loops(P, q):
    m, d = P.shape
    out = np.empty(m)
    for i in range(m):
        out[i] = _dist_pair_loops(P[i], q)
    return out


def dist_rows_np(P, q):
    sq = np.einsum("ij,ij->i", P, P)
    sq_q = float(np.dot(q, q))
    dots = P @ q
    diff2 = np.maximum(sq + sq_q - 2.0 * dots, 0.0)
    den = np.maximum(1.0 - 2.0 * dots + sq * sq_q, EPS_DIV)
    t = np.clip(np.sqrt(diff2 / den), 0.0, 1.0 - EPS_BOUNDARY)
    return 2.0 * np.arctanh(t)


def dist_to_origin_np(P):
    r = np.sqrt(np.einsum("ij,ij->i", P, P))
    return 2.0 * np.arctanh(np.clip(r, 0.0, 1.0 - EPS_BOUNDARY))


# --------------------------------------------------------------------------
# structural-probe loss terms
#
# dis term, ordered pairs:  |tree_dist(j,j') - d(z_j, z_j')^2|
# dep term, per token:      |tree_depth(j)  - d(z_j, 0)^2|
#
# The kernel returns raw sums plus the gradient of
# scale_dis * dis_sum + scale_dep * dep_sum with respect to Z.
# --------------------------------------------------------------------------


def _syntax_terms_loops(Z, T, DEP, scale_dis, scale_dep):
    n, d = Z.shape
    dZ = np.zeros((n, d))
    sq = np.zeros(n)
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += Z[i, k] * Z[i, k]
        sq[i] = s
    dis_sum = 0.0
    for i in range(n):
        vi = 1.0 - sq[i]
        if vi < EPS_DIV:
            vi = EPS_DIV
        for j in range(i + 1, n):
            vj = 1.0 - sq[j]
            if vj < EPS_DIV:
                vj = EPS_DIV
            diff2 = 0.0
            for k in range(d):
                dk = Z[i, k] - Z[j, k]
                diff2 += dk * dk
            q = diff2 / (vi * vj)
            arg = q / (1.0 + q)
            t = math.sqrt(arg)
            if t > 1.0 - EPS_BOUNDARY:
                t = 1.0 - EPS_BOUNDARY
            dist = 2.0 * math.atanh(t)
            d2 = dist * dist
            resid = T[i, j] - d2
            dis_sum += 2.0 * abs(resid)
            if resid > 0.0:
                sgn = 1.0
            elif resid < 0.0:
                sgn = -1.0
            else:
                sgn = 0.0
            if sgn != 0.0:
                if q < 1e-18:
                    a = 4.0
                else:
                    a = 2.0 * dist / math.sqrt(q * (1.0 + q))
                c = -sgn * 4.0 * a * scale_dis
                for k in range(d):
                    base = (Z[i, k] - Z[j, k]) / (vi * vj)
                    dZ[i, k] += c * (base + Z[i, k] * q / vi)
                    dZ[j, k] += c * (-base + Z[j, k] * q / vj)
    dep_sum = 0.0
    for i in range(n):
        r = math.sqrt(sq[i])
        t = r
        if t > 1.0 - EPS_BOUNDARY:
            t = 1.0 - EPS_BOUNDARY
        d0 = 2.0 * math.atanh(t)
        resid = DEP[i] - d0 * d0
        dep_sum += abs(resid)
        if resid > 0.0:
            sgn = 1.0
        elif resid < 0.0:
            sgn = -1.0
        else:
            sgn = 0.0
        if sgn != 0.0:
            if r < 1e-9:
                coef = 8.0
            else:
                vr = 1.0 - r * r
                if vr < EPS_DIV:
                    vr = EPS_DIV
                coef = 4.0 * d0 / (r * vr)
            c = -sgn * coef * scale_dep
            for k in range(d):
                dZ[i, k] += c * Z[i, k]
    return dis_sum, dep_sum, dZ


def syntax_terms_np(Z, T, DEP, scale_dis, scale_dep):
    n, d = Z.shape
    sq = np.einsum("ij,ij->i", Z, Z)
    V = np.maximum(1.0 - sq, EPS_DIV)
    G = Z @ Z.T
    diff2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * G, 0.0)
    q = diff2 / np.outer(V, V)
    t = np.clip(np.sqrt(q / (1.0 + q)), 0.0, 1.0 - EPS_BOUNDARY)
    dist = 2.0 * np.arctanh(t)
    np.fill_diagonal(dist, 0.0)
    d2 = dist * dist
    resid = T - d2
    np.fill_diagonal(resid, 0.0)
    dis_sum = float(np.sum(np.abs(resid)))  # ordered pairs: full matrix
    sgn = np.sign(resid)
    a = np.full_like(q, 4.0)
    big = q >= 1e-18
    a[big] = 2.0 * dist[big] / np.sqrt(q[big] * (1.0 + q[big]))
    # row-wise accumulation over the full (ordered) matrix matches the
    # factor-4 bookkeeping of the loop variant
    c = -sgn * 4.0 * a * scale_dis
    np.fill_diagonal(c, 0.0)
    base = (Z[:, None, :] - Z[None, :, :]) / np.outer(V, V)[:, :, None]
    term = base + (Z / V[:, None])[:, None, :] * q[:, :, None]
    dZ = np.einsum("ij,ijk->ik", c, term)

    r = np.sqrt(sq)
    t0 = np.clip(r, 0.0, 1.0 - EPS_BOUNDARY)
    d0 = 2.0 * np.arctanh(t0)
    resid0 = DEP - d0 * d0
    dep_sum = float(np.sum(np.abs(resid0)))
    sgn0 = np.sign(resid0)
    coef = np.full(n, 8.0)
    nz = r >= 1e-9
    coef[nz] = 4.0 * d0[nz] / (r[nz] * np.maximum(1.0 - r[nz] ** 2, EPS_DIV))
    dZ += (-sgn0 * coef * scale_dep)[:, None] * Z
    return dis_sum, dep_sum, dZ


# --------------------------------------------------------------------------
# cluster-pair weights for the logistic toy classifier
#
# The builder maintains per-cluster sums so a coalition occlusion is O(1):
#   z(full \ (A u B)) = z_full - w_A - w_B - (t_A + t_B - x_AB)
# where w_* sums token weights, t_* sums interaction bonuses touching the
# cluster and x_AB sums bonuses crossing the two clusters.
# --------------------------------------------------------------------------


def _toy_weight_matrix_loops(wsum, tsum, xmat, pos, dep, z_full, a1, a2):
    m = wsum.shape[0]
    out = np.zeros((m, m))
    v_full = 1.0 / (1.0 + math.exp(-z_full))
    for i in range(m):
        for j in range(i + 1, m):
            z = z_full - wsum[i] - wsum[j] - (tsum[i] + tsum[j] - xmat[i, j])
            occ = v_full - 1.0 / (1.0 + math.exp(-z))
            w = -occ + a1 * _dist_pair_loops(pos[i], pos[j]) \
                + 0.5 * a2 * (dep[i] + dep[j])
            out[i, j] = w
            out[j, i] = w
    return out


def toy_weight_matrix_np(wsum, tsum, xmat, pos, dep, z_full, a1, a2):
    v_full = 1.0 / (1.0 + math.exp(-z_full))
    z = z_full - wsum[:, None] - wsum[None, :] \
        - (tsum[:, None] + tsum[None, :] - xmat)
    occ = v_full - 1.0 / (1.0 + np.exp(-z))
    out = -occ + a1 * dist_matrix_np(pos) \
        + 0.5 * a2 * (dep[:, None] + dep[None, :])
    np.fill_diagonal(out, 0.0)
    return out


def _toy_weight_row_loops(wsum, tsum, xrow, pos, dep,
                          w_new, t_new, pos_new, dep_new, z_full, a1, a2):
    m = wsum.shape[0]
    out = np.empty(m)
    v_full = 1.0 / (1.0 + math.exp(-z_full))
    for i in range(m):
        z = z_full - wsum[i] - w_new - (tsum[i] + t_new - xrow[i])
        occ = v_full - 1.0 / (1.0 + math.exp(-z))
        out[i] = -occ + a1 * _dist_pair_loops(pos[i], pos_new) \
            + 0.5 * a2 * (dep[i] + dep_new)
    return out


def toy_weight_row_np(wsum, tsum, xrow, pos, dep,
                      w_new, t_new, pos_new, dep_new, z_full, a1, a2):
    v_full = 1.0 / (1.0 + math.exp(-z_full))
    z = z_full - wsum - w_new - (tsum + t_new - xrow)
    occ = v_full - 1.0 / (1.0 + np.exp(-z))
    return -occ + a1 * dist_rows_np(pos, pos_new) \
        + 0.5 * a2 * (dep + dep_new)


# --------------------------------------------------------------------------
# backend dispatch
# --------------------------------------------------------------------------

_NUMBA_CACHE: dict | None = None


def build_numba_kernels() -> dict:
    """Compile the loop kernels with numba; result is memoized."""
    global _NUMBA_CACHE
    if _NUMBA_CACHE is not None:
        return _NUMBA_CACHE
    from numba import njit

    dp = njit(cache=True)(_dist_pair_loops)

    @njit(cache=False)
    def dist_rows(P, q):
        m = P.shape[0]
        out = np.empty(m)
        for i in range(m):
            out[i] = dp(P[i], q)
        return out

    @njit(cache=False)
    def toy_weight_matrix(wsum, tsum, xmat, pos, dep, z_full, a1, a2):
        m = wsum.shape[0]
        out = np.zeros((m, m))
        v_full = 1.0 / (1.0 + math.exp(-z_full))
        for i in range(m):
            for j in range(i + 1, m):
                z = z_full - wsum[i] - wsum[j] \
                    - (tsum[i] + tsum[j] - xmat[i, j])
                occ = v_full - 1.0 / (1.0 + math.exp(-z))
                w = -occ + a1 * dp(pos[i], pos[j]) \
                    + 0.5 * a2 * (dep[i] + dep[j])
                out[i, j] = w
                out[j, i] = w
        return out

    @njit(cache=False)
    def toy_weight_row(wsum, tsum, xrow, pos, dep,
                       w_new, t_new, pos_new, dep_new, z_full, a1, a2):
        m = wsum.shape[0]
        out = np.empty(m)
        v_full = 1.0 / (1.0 + math.exp(-z_full))
        for i in range(m):
            z = z_full - wsum[i] - w_new - (tsum[i] + t_new - xrow[i])
            occ = v_full - 1.0 / (1.0 + math.exp(-z))
            out[i] = -occ + a1 * dp(pos[i], pos_new) \
                + 0.5 * a2 * (dep[i] + dep_new)
        return out

    _NUMBA_CACHE = {
        "dist_pair": dp,
        "dist_matrix": njit(cache=True)(_dist_matrix_loops),
        "dist_rows": dist_rows,
        "syntax_terms": njit(cache=True)(_syntax_terms_loops),
        "toy_weight_matrix": toy_weight_matrix,
        "toy_weight_row": toy_weight_row,
    }
    return _NUMBA_CACHE


NUMPY_KERNELS = {
    "dist_pair": dist_pair_np,
    "dist_matrix": dist_matrix_np,
    "dist_rows": dist_rows_np,
    "syntax_terms": syntax_terms_np,
    "toy_weight_matrix": toy_weight_matrix_np,
    "toy_weight_row": toy_weight_row_np,
}

if USE_NUMBA:
    _active = build_numba_kernels()
else:
    _active = NUMPY_KERNELS

dist_pair = _active["dist_pair"]
dist_matrix = _active["dist_matrix"]
dist_rows = _active["dist_rows"]
syntax_terms = _active["syntax_terms"]
toy_weight_matrix = _active["toy_weight_matrix"]
toy_weight_row = _active["toy_weight_row"]

dist_to_origin = dist_to_origin_np


def warmup():
    """Trigger JIT compilation of the active kernels on tiny inputs."""
    P = np.zeros((2, 3))
    P[0, 0] = 0.1
    P[1, 1] = -0.2
    dist_pair(P[0], P[1])
    dist_matrix(P)
    dist_rows(P, P[0])
    syntax_terms(P, np.ones((2, 2)), np.ones(2), 1.0, 1.0)
    toy_weight_matrix(np.zeros(2), np.zeros(2), np.zeros((2, 2)),
                      P, np.zeros(2), 0.0, 0.1, 0.1)
    toy_weight_row(np.zeros(2), np.zeros(2), np.zeros(2), P, np.zeros(2),
                   0.0, 0.0, P[0], 0.0, 0.0, 0.1, 0.1)
    return backend_name()


__all__ = [
    "EPS_BOUNDARY", "EPS_DIV", "HAVE_NUMBA", "USE_NUMBA", "backend_name",
    "dist_pair", "dist_matrix", "dist_rows", "dist_to_origin",
    "syntax_terms", "toy_weight_matrix", "toy_weight_row",
    "dist_pair_np", "dist_matrix_np", "dist_rows_np", "dist_to_origin_np",
    "syntax_terms_np", "toy_weight_matrix_np", "toy_weight_row_np",
    "NUMPY_KERNELS", "build_numba_kernels", "warmup",
]
