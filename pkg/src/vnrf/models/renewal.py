"""Stationary alternating renewal process seen as a one-dimensional random field.

Run lengths T of a binary sequence are i.i.d. with

    P[T = j] = c1 rho1^j + c2 rho2^j,   j >= 1,   0 < rho2 < rho1 < 1.

The conditional law of a site given everything else depends only on the
two runs that touch it, so the context is the integer interval between the
nearest sign changes on either side.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..lattice import Configuration, LatticeError
from .base import RegionResult, SpecificationModel


@dataclass(frozen=True)
class RenewalParams:
    rho1: float = 0.5
    rho2: float = 0.25
    c1: float = 0.5
    c2: float = 1.5

    def __post_init__(self):
        if not 0 < self.rho2 < self.rho1 < 1:
            raise ValueError("need 0 < rho2 < rho1 < 1")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")
        total = self.c1 * self.rho1 / (1 - self.rho1) + self.c2 * self.rho2 / (1 - self.rho2)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"run-length law does not normalise (sum = {total!r})")

    def pmf(self, j):
        """P[T = j] (vectorised)."""
        j = np.asarray(j, dtype=float)
        return self.c1 * self.rho1 ** j + self.c2 * self.rho2 ** j

    def survival(self, j):
        """P[T >= j] for j >= 1."""
        j = np.asarray(j, dtype=float)
        return (self.c1 * self.rho1 ** j / (1 - self.rho1)
                + self.c2 * self.rho2 ** j / (1 - self.rho2))

    def survival_tail(self, m):
        """sum_{r >= m} P[T >= r]."""
        m = np.asarray(m, dtype=float)
        return (self.c1 * self.rho1 ** m / (1 - self.rho1) ** 2
                + self.c2 * self.rho2 ** m / (1 - self.rho2) ** 2)

    @property
    def mean(self) -> float:
        return float(self.c1 * self.rho1 / (1 - self.rho1) ** 2
                     + self.c2 * self.rho2 / (1 - self.rho2) ** 2)

    @property
    def mixture_weights(self) -> tuple[float, float]:
        """T is a mixture of Geometric(1 - rho_k) on {1, 2, ...} with these weights."""
        return (self.c1 * self.rho1 / (1 - self.rho1), self.c2 * self.rho2 / (1 - self.rho2))


def _mass(p: RenewalParams, j: int) -> float:
    return p.c1 * p.rho1 ** j + p.c2 * p.rho2 ** j


def prob_one_both_ones(p: RenewalParams, k: int, l: int) -> float:
    """gamma_0(1 | L_0 = -k, R_0 = l, omega(-1) = omega(1) = 1)."""
    merged = _mass(p, l + k - 1)
    norm = (p.c1 / (1 - p.rho1) * p.rho1 + p.c2 / (1 - p.rho2) * p.rho2) ** 2
    split = _mass(p, k - 1) * _mass(p, l - 1) * (p.c1 * p.rho1 + p.c2 * p.rho2) / norm
    return merged / (merged + split)


def prob_one_left_one(p: RenewalParams, k: int, l: int) -> float:
    """gamma_0(1 | L_0 = -k, R_0 = l, omega(-1) = 1, omega(1) = 0)."""
    num = _mass(p, k) * _mass(p, l - 1)
    return num / (num + _mass(p, k - 1) * _mass(p, l))


def renewal_gamma0(params: RenewalParams, k: int, l: int, left: int, right: int) -> float:
    """Probability that the centre is 1 given the run distances and neighbour symbols.

    The two cases with a 0 on the left follow from exchanging the symbols 0 and 1.
    """
    if k < 2 or l < 2:
        raise ValueError("invalid run distance")
    if left not in (0, 1) or right not in (0, 1):
        raise ValueError("neighbour symbols must be 0 or 1")
    if left == 1:
        return prob_one_both_ones(params, k, l) if right == 1 else prob_one_left_one(params, k, l)
    if right == 0:
        return 1.0 - prob_one_both_ones(params, k, l)
    return 1.0 - prob_one_left_one(params, k, l)


def renewal_boundary_scan(config: Configuration, i: int) -> tuple[int, int, int, int]:
    """(k, l, omega(i-1), omega(i+1)) with k = i - L_i and l = R_i - i."""
    if config.dim != 1:
        raise ValueError("renewal model is one-dimensional")
    n = config.window.size
    limit = n if config.boundary == "periodic" else None
    try:
        left, right = config.value_at((i - 1,)), config.value_at((i + 1,))
        k = 2
        while config.value_at((i - k,)) == left:
            k += 1
            if limit is not None and k > limit:
                raise LatticeError("context exceeds window")
        l = 2
        while config.value_at((i + l,)) == right:
            l += 1
            if limit is not None and l > limit:
                raise LatticeError("context exceeds window")
    except LatticeError:
        raise LatticeError("context exceeds window") from None
    return k, l, left, right


def _runs_exit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each position p: length of the run of x[p] ending at p, and starting at p.

    Runs touching the window edge are reported as -1 (their true length is unknown).
    """
    n = len(x)
    change = np.flatnonzero(np.diff(x) != 0) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [n]))
    run_id = np.repeat(np.arange(len(starts)), ends - starts)
    pos = np.arange(n)
    ending = pos - starts[run_id] + 1
    beginning = ends[run_id] - pos
    ending[run_id == 0] = -1
    beginning[run_id == len(starts) - 1] = -1
    return ending, beginning


def run_distances(symbols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (k, l) for every site of a free-boundary line; -1 where undefined."""
    x = np.asarray(symbols).reshape(-1)
    n = len(x)
    ending, beginning = _runs_exit(x)
    k = np.full(n, -1, dtype=np.int64)
    l = np.full(n, -1, dtype=np.int64)
    inner = np.arange(1, n - 1)
    k_in = ending[inner - 1]
    l_in = beginning[inner + 1]
    k[inner] = np.where(k_in > 0, k_in + 1, -1)
    l[inner] = np.where(l_in > 0, l_in + 1, -1)
    return k, l


class RenewalModel(SpecificationModel):
    name = "renewal"
    alphabet_size = 2
    dim = 1
    range = None

    def __init__(self, params: RenewalParams | None = None, k_max: int = 200):
        self.params = params or RenewalParams()
        self.k_max = k_max
        self.q_min_is_estimate = True

    @cached_property
    def q_min(self) -> float:
        """Smallest conditional probability over run distances 2..k_max.

        Both formulas converge geometrically in k and l, so the grid minimum
        is an estimate of the infimum rather than a bound.
        """
        ks = range(2, self.k_max + 1)
        lo = 1.0
        for k in ks:
            for l in ks:
                for f in (prob_one_both_ones, prob_one_left_one):
                    v = f(self.params, k, l)
                    lo = min(lo, v, 1.0 - v)
        return lo

    def conditional(self, config: Configuration, i: int) -> np.ndarray:
        k, l, left, right = renewal_boundary_scan(config, i)
        p1 = renewal_gamma0(self.params, k, l, left, right)
        return np.array([1.0 - p1, p1])

    def context(self, config: Configuration, i: int) -> RegionResult:
        k, l, _, _ = renewal_boundary_scan(config, i)
        return RegionResult(frozenset((o,) for o in range(-k, l + 1) if o != 0))

    def true_radii(self, config: Configuration, sites: np.ndarray) -> np.ndarray:
        if config.boundary == "periodic":
            return super().true_radii(config, sites)
        k, l = run_distances(config.flat)
        sites = np.asarray(sites)
        kk, ll = k[sites], l[sites]
        return np.where((kk > 0) & (ll > 0), np.maximum(kk, ll), -1)

    def window_probability(self, word) -> float:
        """Exact probability of a finite word under the stationary process."""
        word = np.asarray(word).reshape(-1)
        change = np.flatnonzero(np.diff(word) != 0) + 1
        runs = np.diff(np.concatenate(([0], change, [len(word)])))
        p = self.params
        if len(runs) == 1:
            return float(0.5 * p.survival_tail(runs[0]) / p.mean)
        prob = 0.5 * p.survival(runs[0]) / p.mean * p.survival(runs[-1])
        return float(prob * np.prod(p.pmf(runs[1:-1])))

    def params_dict(self) -> dict:
        p = self.params
        return {"rho1": p.rho1, "rho2": p.rho2, "c1": p.c1, "c2": p.c2}
