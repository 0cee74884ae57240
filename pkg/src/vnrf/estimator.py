"""Penalised pseudo-likelihood estimation of the per-site context radius.

Pipeline: count radius-ell patterns over the security region, form empirical
conditionals p_hat(a | eta) = N(eta, a) / N(eta), measure the count-weighted
KL gain logL(i, ell) of radius ell over radius ell - 1 and keep the smallest
radius beyond which no gain exceeds the penalty.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from .lattice import (Configuration, LatticeError, Pattern, SecurityRegion, decode_key,
                      extract_pattern, pattern_key, pattern_matrix, matrix_keys,
                      security_radius, security_region, shell_size)


class EstimatorError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# counting


@dataclass(frozen=True, eq=False)
class CountTable:
    """N(eta) and N(eta, a) for every radius-ell pattern seen in the region.

    ``keys`` is sorted; ``counts[r, a]`` = N(keys[r], a). ``site_rows[s]`` is the
    row of the pattern around ``sites[s]``.
    """

    radius: int
    alphabet_size: int
    dim: int
    keys: np.ndarray
    counts: np.ndarray
    sites: np.ndarray = field(repr=False)
    site_rows: np.ndarray = field(repr=False)

    @property
    def region_size(self) -> int:
        return int(len(self.sites))

    @cached_property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @cached_property
    def _index(self) -> dict:
        return {int(k): r for r, k in enumerate(self.keys.tolist())}

    def row(self, key: int) -> int | None:
        return self._index.get(int(key))

    def count(self, eta: Pattern | int, a: int | None = None) -> int:
        """N(eta) or N(eta, a); zero for unseen patterns."""
        key = eta if isinstance(eta, (int, np.integer)) else pattern_key(eta)
        r = self.row(key)
        if r is None:
            return 0
        return int(self.totals[r] if a is None else self.counts[r, a])

    def __len__(self) -> int:
        return len(self.keys)


def count_patterns(config: Configuration, region: SecurityRegion, ell: int) -> CountTable:
    """Exact overlapping counts of radius-ell patterns centred in the region."""
    if ell < 1:
        raise ValueError("radius must be >= 1")
    if ell > region.margin and not region.periodic:
        raise LatticeError(f"radius {ell} exceeds region margin {region.margin}")
    A = config.alphabet_size
    sites = region.sites
    keys = matrix_keys(pattern_matrix(config, sites, ell, region.periodic), A)
    uniq, rows = np.unique(keys, return_inverse=True)
    rows = rows.reshape(-1).astype(np.int64)
    centre = config.flat[sites].astype(np.int64)
    counts = np.bincount(rows * A + centre, minlength=len(uniq) * A).reshape(len(uniq), A)
    return CountTable(ell, A, config.dim, uniq, counts.astype(np.int64), sites, rows)


def empirical_conditional(table: CountTable, eta: Pattern | int, a: int) -> float:
    n = table.count(eta)
    return table.count(eta, a) / n if n > 0 else 0.0


def conditional_vector(table: CountTable, eta: Pattern | int) -> np.ndarray:
    return np.array([empirical_conditional(table, eta, a) for a in range(table.alphabet_size)])


# ---------------------------------------------------------------------------
# divergences and the three forms of the statistic


def kl_divergence(p, q) -> tuple[float, bool]:
    """(D(p || q), infinite) with 0 log(0 / q) = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("vectors differ in length")
    pos = p > 0
    if np.any(q[pos] == 0):
        return math.inf, True
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos]))), False


def log_mpl(table: CountTable, eta: Pattern | int) -> float:
    """sum_a N(eta, a) log p_hat(a | eta)."""
    total = 0.0
    for a in range(table.alphabet_size):
        n = table.count(eta, a)
        if n > 0:
            total += n * math.log(empirical_conditional(table, eta, a))
    return total


_ENUMERATE_MAX = 4096


def _children(parent: Pattern, ell: int) -> list[Pattern]:
    """All radius-ell extensions of a radius-(ell - 1) pattern, in shell-value order."""
    from .lattice import extend_pattern
    return [extend_pattern(parent, v)
            for v in product(range(parent.alphabet_size), repeat=shell_size(ell, parent.dim))]


def _parent(config: Configuration, i: int, ell: int) -> Pattern:
    return extract_pattern(config, i, ell - 1)


def _check_pair(fine: CountTable, coarse: CountTable) -> None:
    if fine.radius != coarse.radius + 1 or not np.array_equal(fine.sites, coarse.sites):
        raise ValueError("tables must be built on the same region at radii ell and ell - 1")


def log_likelihood_kl(config: Configuration, i: int, fine: CountTable, coarse: CountTable) -> float:
    """sum_v N(eta v) D(p_hat(. | eta v), p_hat(. | eta)), eta the radius-(ell - 1) pattern at i."""
    _check_pair(fine, coarse)
    eta = _parent(config, i, fine.radius)
    base = conditional_vector(coarse, eta)
    if fine.alphabet_size ** shell_size(fine.radius, fine.dim) <= _ENUMERATE_MAX:
        children = [pattern_key(c) for c in _children(eta, fine.radius)]
    else:
        # unseen extensions contribute nothing; visit only the observed ones
        r = coarse.row(pattern_key(eta))
        rows = np.unique(fine.site_rows[coarse.site_rows == r]) if r is not None else []
        children = [int(fine.keys[k]) for k in rows]
    total = 0.0
    for child in children:
        n = fine.count(child)
        if n == 0:
            continue
        d, infinite = kl_divergence(conditional_vector(fine, child), base)
        if infinite:
            raise EstimatorError("infinite KL term: fine and coarse tables disagree")
        total += n * d
    return total


def _sites_with_parent(config: Configuration, i: int, coarse: CountTable) -> np.ndarray:
    """Positions (into coarse.sites) of every region site sharing i's radius-(ell - 1) pattern."""
    r = coarse.row(pattern_key(extract_pattern(config, i, coarse.radius)))
    if r is None:
        raise LatticeError("site is not in the counting region")
    return np.flatnonzero(coarse.site_rows == r)


def log_likelihood_sites(config: Configuration, i: int, fine: CountTable, coarse: CountTable) -> float:
    """Site-sum form: sum over j with the same parent of (1/N(X_j^ell)) sum_a N log ratio."""
    _check_pair(fine, coarse)
    parent = coarse.counts[coarse.site_rows[_sites_with_parent(config, i, coarse)[0]]]
    p_parent = parent / parent.sum()
    total = 0.0
    for pos in _sites_with_parent(config, i, coarse):
        row = fine.counts[fine.site_rows[pos]]
        n = row.sum()
        inner = 0.0
        for a in range(fine.alphabet_size):
            if row[a] > 0:
                inner += row[a] * math.log((row[a] / n) / p_parent[a])
        total += inner / n
    return total


def log_likelihood_mpl(config: Configuration, i: int, fine: CountTable, coarse: CountTable) -> float:
    """Maximum pseudo-likelihood form: sum_j logMPL(j, ell) / N(X_j^ell) - logMPL(i, ell - 1)."""
    _check_pair(fine, coarse)
    total = 0.0
    for pos in _sites_with_parent(config, i, coarse):
        r = fine.site_rows[pos]
        total += log_mpl(fine, int(fine.keys[r])) / fine.totals[r]
    eta = extract_pattern(config, i, coarse.radius)
    return total - log_mpl(coarse, eta)


def log_likelihood_batch(fine: CountTable, coarse: CountTable) -> np.ndarray:
    """logL for every parent row of ``coarse`` (vectorised KL form)."""
    _check_pair(fine, coarse)
    parent_of = np.empty(len(fine), dtype=np.int64)
    parent_of[fine.site_rows] = coarse.site_rows
    Nc = fine.counts.astype(float)
    Np = coarse.counts.astype(float)[parent_of]
    if np.any((Nc > 0) & (Np == 0)):
        raise EstimatorError("infinite KL term: fine and coarse tables disagree")
    tc = Nc.sum(axis=1, keepdims=True)
    tp = coarse.totals.astype(float)[parent_of][:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Nc > 0, Nc * (np.log(Nc) - np.log(tc) - np.log(Np) + np.log(tp)), 0.0)
    out = np.bincount(parent_of, weights=terms.sum(axis=1), minlength=len(coarse))
    return np.maximum(out, 0.0)


def relative_gap(a: float, b: float, scale: float = 0.0) -> float:
    """|a - b| relative to the size of the operands and of ``scale``."""
    denom = max(abs(a), abs(b), abs(scale))
    return 0.0 if denom == 0 else abs(a - b) / denom


# ---------------------------------------------------------------------------
# penalty


def delta_threshold(dim: int, alphabet_size: int, q_min: float) -> float:
    """Lower limit for delta: 2^d log|A| * 3e / (4 q_min)."""
    return 2 ** dim * math.log(alphabet_size) * 3 * math.e / (4 * q_min)


def kappa_of_delta(delta: float, dim: int) -> float:
    return 5 ** dim * math.sqrt(1.5) * delta


def c_delta(delta: float, q_min: float, dim: int, alphabet_size: int) -> float:
    """Exponent constant (2/3)(2 q_min delta / e) - 2^d log|A|."""
    return (2.0 / 3.0) * (2 * q_min * delta / math.e) - 2 ** dim * math.log(alphabet_size)


@dataclass(frozen=True)
class PenaltyConfig:
    alphabet_size: int
    dim: int
    delta: float | None = None
    kappa: float | None = None
    q_min_hint: float | None = None
    auto_factor: float = 1.01

    def __post_init__(self):
        if self.delta is None and self.kappa is None:
            if self.q_min_hint is None:
                raise ValueError("need delta, kappa or a q_min hint for the automatic choice")
            delta = self.auto_factor * delta_threshold(self.dim, self.alphabet_size, self.q_min_hint)
            object.__setattr__(self, "delta", delta)
        if self.delta is None:
            object.__setattr__(self, "delta", self.kappa / (5 ** self.dim * math.sqrt(1.5)))
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        k = kappa_of_delta(self.delta, self.dim)
        if self.kappa is None:
            object.__setattr__(self, "kappa", k)
        elif abs(self.kappa - k) > 1e-12 * max(1.0, abs(k)):
            raise ValueError("kappa and delta are inconsistent")
        if self.q_min_hint is not None and self.delta <= self.threshold:
            warnings.warn(f"delta={self.delta:.6g} does not exceed the consistency threshold "
                          f"{self.threshold:.6g}", stacklevel=2)

    @property
    def threshold(self) -> float | None:
        if self.q_min_hint is None:
            return None
        return delta_threshold(self.dim, self.alphabet_size, self.q_min_hint)

    @property
    def in_regime(self) -> bool | None:
        return None if self.q_min_hint is None else self.delta > self.threshold

    def as_dict(self) -> dict:
        return {"delta": self.delta, "kappa": self.kappa, "q_min_hint": self.q_min_hint,
                "threshold": self.threshold, "in_regime": self.in_regime}


_LOG_MAX = math.log(np.finfo(float).max)


def log_penalty(ell: int, window_size: int, cfg: PenaltyConfig) -> float:
    A = cfg.alphabet_size
    return (math.log(cfg.kappa) + (1 + shell_size(ell, cfg.dim)) * math.log(A)
            + math.log(math.log(window_size)))


def penalty(ell: int, window_size: int, cfg: PenaltyConfig) -> tuple[float, bool]:
    """(kappa |A|^{1 + |shell(ell)|} log|Lambda_n|, saturated)."""
    if ell < 1:
        raise ValueError("radius must be >= 1")
    lp = log_penalty(ell, window_size, cfg)
    if lp >= _LOG_MAX:
        return math.inf, True
    return math.exp(lp), False


def max_radius(region_size: int, dim: int) -> int:
    """R_n = floor((log |region|)^(1/(2d))), clamped to at least 1."""
    if region_size < 2:
        raise ValueError("region must contain at least two sites")
    r = int(math.floor(security_radius(region_size, dim) + 1e-12))
    if r < 1:
        warnings.warn("radius range clamped to 1", stacklevel=2)
        r = 1
    return r


def select_radius(log_l: Mapping[int, float], pens: Mapping[int, float], r_max: int) -> int:
    """min { ell in 1..R-1 : logL(k) <= pen(k) for all k > ell }, else R."""
    for ell in range(1, r_max):
        if all(log_l[k] <= pens[k] for k in range(ell + 1, r_max + 1)):
            return ell
    return r_max


# ---------------------------------------------------------------------------
# batch estimation


@dataclass(frozen=True)
class RadiusEstimate:
    site: int
    l_hat: int
    r_max: int
    log_l: dict[int, float]
    pen: dict[int, float]
    c_hat: Pattern
    gamma_hat: np.ndarray
    trivial: bool = False


@dataclass(frozen=True)
class EstimatorConfig:
    penalty: PenaltyConfig
    max_radius: int | None = None
    margin: int | None = None


class EstimateBatch(Mapping):
    """All per-site estimates of one sample; a read-only site -> RadiusEstimate mapping."""

    def __init__(self, config, region, r_max, tables, log_l, pens, l_hat, trivial, outside_theory):
        self.config = config
        self.region = region
        self.r_max = r_max
        self.tables = tables
        self.log_l = log_l            # shape (sites, r_max - 1): k = 2..r_max
        self.pens = pens              # {k: pen(k)}
        self.l_hat = l_hat
        self.trivial = trivial
        self.outside_theory = outside_theory
        self._pos = {int(s): p for p, s in enumerate(region.sites)}

    @property
    def sites(self) -> np.ndarray:
        return self.region.sites

    def __len__(self) -> int:
        return len(self.region.sites)

    def __iter__(self):
        return (int(s) for s in self.region.sites)

    def __getitem__(self, site: int) -> RadiusEstimate:
        p = self._pos[int(site)]
        lh = int(self.l_hat[p])
        table = self.tables[lh]
        row = table.site_rows[p]
        return RadiusEstimate(
            int(site), lh, self.r_max,
            {k: float(self.log_l[p, k - 2]) for k in range(2, self.r_max + 1)},
            dict(self.pens),
            decode_key(int(table.keys[row]), lh, self.config.dim, self.config.alphabet_size),
            table.counts[row] / table.totals[row],
            self.trivial,
        )


def estimate_all(config: Configuration, cfg: EstimatorConfig) -> EstimateBatch:
    """l_hat for every site of the security region."""
    n = config.window.size
    region = security_region(config.window, n, config.boundary, cfg.margin)
    outside = False
    if cfg.max_radius is not None:
        r_max = int(cfg.max_radius)
        if r_max < 1:
            raise ValueError("max radius must be >= 1")
        outside = r_max != max_radius(region.size, config.dim)
    else:
        r_max = max_radius(region.size, config.dim)
    if r_max > region.margin and not region.periodic:
        region = security_region(config.window, n, config.boundary, r_max)
    tables = {ell: count_patterns(config, region, ell) for ell in range(1, r_max + 1)}
    log_l = np.zeros((region.size, max(r_max - 1, 0)))
    pens = {}
    for k in range(2, r_max + 1):
        per_parent = log_likelihood_batch(tables[k], tables[k - 1])
        log_l[:, k - 2] = per_parent[tables[k - 1].site_rows]
        pens[k] = penalty(k, n, cfg.penalty)[0]
    l_hat = np.ones(region.size, dtype=np.int64)
    for k in range(2, r_max + 1):
        l_hat = np.where(log_l[:, k - 2] > pens[k], k, l_hat)
    return EstimateBatch(config, region, r_max, tables, log_l, pens, l_hat, r_max < 2, outside)


def estimate_radius(config: Configuration, i: int, cfg: EstimatorConfig,
                    batch: EstimateBatch | None = None) -> RadiusEstimate:
    batch = estimate_all(config, cfg) if batch is None else batch
    if int(i) not in batch._pos:
        raise LatticeError("site outside the security region")
    return batch[int(i)]


def _fmt(x: float) -> str:
    return repr(float(x))


def format_estimates_csv(batch: EstimateBatch, l_true: np.ndarray | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    ks = range(2, batch.r_max + 1)
    head = ["site"] + (["l_true"] if l_true is not None else []) + ["l_hat", "R_n"]
    for k in ks:
        head += [f"logL_{k}", f"pen_{k}"]
    w.writerow(head)
    for p, s in enumerate(batch.region.sites):
        row = [int(s)] + ([int(l_true[p])] if l_true is not None else []) + [int(batch.l_hat[p]), batch.r_max]
        for k in ks:
            row += [_fmt(batch.log_l[p, k - 2]), _fmt(batch.pens[k])]
        w.writerow(row)
    return buf.getvalue()
