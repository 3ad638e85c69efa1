"""Characteristic-function machinery over token coalitions.

A mask oracle answers `v(mask)`: the classifier's probability for the
predicted class when only the masked-in tokens are present. Masks are
Python ints, bit j set = token j present. On top of it:

* exact Shapley values by subset enumeration (n <= 12),
* Monte Carlo Shapley over random permutations,
* the occlusion shortcut v(N) - v(N \\ S) for tokens and coalitions.

Oracle implementations here are safe for concurrent query calls (queries
are pure except for the toy oracle's counter).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, runtime_checkable

import numpy as np


def full_mask(n: int) -> int:
    return (1 << n) - 1


def mask_of(indices: Iterable[int], n: int) -> int:
    m = 0
    for i in indices:
        if not 0 <= i < n:
            raise ValueError(f"token index {i} out of range for n={n}")
        m |= 1 << i
    return m


def indices_of(mask: int, n: int) -> list[int]:
    return [i for i in range(n) if mask >> i & 1]


@runtime_checkable
class MaskOracle(Protocol):
    """v: token-presence mask -> predicted-class probability."""

    n: int
    strategy: str

    def query(self, mask: int) -> float: ...


class MissingMaskError(KeyError):
    """A replay cache was asked for a mask it does not contain."""


@dataclass
class ContributionVector:
    values: np.ndarray
    mode: str  # exact | monte_carlo | occlusion

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("contributions must be finite")


class FunctionOracle:
    """Wrap an arbitrary set function as a mask oracle (test games etc.)."""

    def __init__(self, fn: Callable[[int], float], n: int,
                 strategy: str = "del"):
        self.n = n
        self.strategy = strategy
        self._fn = fn

    def query(self, mask: int) -> float:
        return float(self._fn(mask))


class ToyOracle:
    """Deterministic logistic stand-in for a text classifier.

    v(S) = sigmoid(sum of present-token weights + bonuses of interaction
    pairs whose both ends are present). The pad strategy behaves exactly
    like del because the pad token carries weight zero.
    """

    def __init__(self, weights, interactions=(), strategy: str = "del"):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ValueError("weights must be 1-D")
        self.n = self.weights.shape[0]
        if strategy not in ("del", "pad"):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.strategy = strategy
        self.interactions = []
        for i, j, b in interactions:
            if not (0 <= i < self.n and 0 <= j < self.n) or i == j:
                raise ValueError(f"bad interaction pair ({i}, {j})")
            self.interactions.append((int(i), int(j), float(b)))
        self.queries = 0

    def query(self, mask: int) -> float:
        self.queries += 1
        z = 0.0
        for i in range(self.n):
            if mask >> i & 1:
                z += self.weights[i]
        for i, j, b in self.interactions:
            if mask >> i & 1 and mask >> j & 1:
                z += b
        return 1.0 / (1.0 + math.exp(-z))

    @property
    def predicted_prob(self) -> float:
        return self.query(full_mask(self.n))

    # ---- builder fast path: O(1) coalition statistics ----------------

    def coalition_stats(self):
        """Per-token sums for incremental coalition occlusion.

        Returns (z_full, w, t, x): token weights, interaction mass touching
        each token, and the symmetric cross matrix of interaction bonuses.
        """
        n = self.n
        w = self.weights.copy()
        t = np.zeros(n)
        x = np.zeros((n, n))
        for i, j, b in self.interactions:
            t[i] += b
            t[j] += b
            x[i, j] += b
            x[j, i] += b
        z_full = float(self.weights.sum()
                       + sum(b for _, _, b in self.interactions))
        return z_full, w, t, x


class CachedOracle:
    """Replay oracle over an exported probability table."""

    def __init__(self, entries: dict[int, float], n: int,
                 strategy: str = "del", predicted_label: int = 0):
        self.n = n
        self.strategy = strategy
        self.predicted_label = predicted_label
        self.entries = dict(entries)
        for mask, p in self.entries.items():
            if not 0 <= mask <= full_mask(n):
                raise ValueError(f"mask {mask:#x} out of range for n={n}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        if full_mask(n) not in self.entries:
            raise ValueError("cache is missing the full-mask entry")
        if 0 not in self.entries:
            raise ValueError("cache is missing the empty-mask entry")

    def query(self, mask: int) -> float:
        try:
            return self.entries[mask]
        except KeyError:
            raise MissingMaskError(
                f"mask {mask:#x} not present in cache (n={self.n})") from None

    @property
    def predicted_prob(self) -> float:
        return self.entries[full_mask(self.n)]


def toy_oracle(weights, interactions=(), strategy: str = "del") -> ToyOracle:
    return ToyOracle(weights, interactions, strategy)


# --------------------------------------------------------------------------
# Shapley values
# --------------------------------------------------------------------------

MAX_EXACT_N = 12


def exact_shapley(oracle: MaskOracle) -> ContributionVector:
    """Average marginal contributions via the 2^n subset reformulation.

    phi_j = sum over S not containing j of |S|!(n-1-|S|)!/n! *
            [v(S u {j}) - v(S)].
    """
    n = oracle.n
    if n > MAX_EXACT_N:
        raise ValueError(f"exact shapley limited to n <= {MAX_EXACT_N}, got {n}")
    values = np.array([oracle.query(m) for m in range(1 << n)])
    fact = [math.factorial(i) for i in range(n + 1)]
    weight = [fact[s] * fact[n - 1 - s] / fact[n] for s in range(n)]
    phi = np.zeros(n)
    for mask in range(1 << n):
        s = bin(mask).count("1")
        for j in range(n):
            if not mask >> j & 1:
                phi[j] += weight[s] * (values[mask | (1 << j)] - values[mask])
    return ContributionVector(phi, "exact")


def mc_shapley(oracle: MaskOracle, samples: int, seed: int = 0) -> ContributionVector:
    """Monte Carlo estimate over uniformly random permutations.

    Permutations are drawn from numpy's seeded PCG64 generator, so traces
    are reproducible given (samples, seed).
    """
    if samples < 1:
        raise ValueError("need at least one permutation")
    n = oracle.n
    rng = np.random.default_rng(seed)
    phi = np.zeros(n)
    for _ in range(samples):
        perm = rng.permutation(n)
        mask = 0
        prev = oracle.query(mask)
        for j in perm:
            mask |= 1 << int(j)
            cur = oracle.query(mask)
            phi[j] += cur - prev
            prev = cur
    phi /= samples
    return ContributionVector(phi, "monte_carlo")


def occlusion(oracle: MaskOracle, coalition: Iterable[int]) -> float:
    """Contribution shortcut v(N) - v(N \\ coalition)."""
    coalition = list(coalition)
    if not coalition:
        raise ValueError("coalition must be non-empty")
    n = oracle.n
    full = full_mask(n)
    without = full & ~mask_of(coalition, n)
    return oracle.query(full) - oracle.query(without)


def singleton_occlusions(oracle: MaskOracle) -> np.ndarray:
    """Occlusion of every single token, n + 1 oracle queries."""
    n = oracle.n
    full = full_mask(n)
    base = oracle.query(full)
    return np.array([base - oracle.query(full & ~(1 << j)) for j in range(n)])


__all__ = [
    "MaskOracle", "MissingMaskError", "ContributionVector",
    "FunctionOracle", "ToyOracle", "CachedOracle", "toy_oracle",
    "full_mask", "mask_of", "indices_of", "MAX_EXACT_N",
    "exact_shapley", "mc_shapley", "occlusion", "singleton_occlusions",
]
