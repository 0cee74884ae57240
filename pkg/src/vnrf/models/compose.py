"""Build finite-region conditional laws from one-point specifications.

For disjoint Lambda = Lambda1 + Lambda2 (Lambda1 a single site here):

    rho_Lambda(w) = rho_1(w) / sum_{b} [ rho_1(b w_{Lambda1^c}) / rho_2(b w_{Lambda1^c}) ]

with w_{Lambda2} held fixed in the sum. Lambda is exhausted site by site in
lexicographic (linear index) order unless another order is given.
"""
from __future__ import annotations

from itertools import product

import numpy as np

from ..lattice import Configuration
from .base import PositivityError, SpecificationModel


def _set(config: Configuration, sites, values) -> Configuration:
    out = config.copy()
    flat = out.symbols.reshape(-1)
    for s, v in zip(sites, values):
        flat[s] = v
    return out


def _gamma(model: SpecificationModel, config: Configuration, site: int, a: int) -> float:
    p = float(model.conditional(config, site)[a])
    if p <= 0:
        raise PositivityError("positivity violated")
    return p


def composed_probability(model: SpecificationModel, config: Configuration, sites, values) -> float:
    """rho_Lambda(values on sites | config outside sites)."""
    sites, values = tuple(sites), tuple(values)
    cfg = _set(config, sites, values)
    first = sites[0]
    if len(sites) == 1:
        return _gamma(model, cfg, first, values[0])
    rest, rest_vals = sites[1:], values[1:]
    denom = 0.0
    for b in range(model.alphabet_size):
        alt = _set(cfg, (first,), (b,))
        denom += _gamma(model, alt, first, b) / composed_probability(model, alt, rest, rest_vals)
    return _gamma(model, cfg, first, values[0]) / denom


def compose_specification(model: SpecificationModel, config: Configuration, sites,
                          order=None) -> tuple[dict[tuple[int, ...], float], frozenset[int]]:
    """Law of the symbols on ``sites`` given the rest of ``config``, and the region's support.

    Returns ({values: probability} over A^sites in the given site order, sp_Lambda
    as linear indices).
    """
    sites = tuple(int(s) for s in sites)
    order = tuple(sorted(sites)) if order is None else tuple(int(s) for s in order)
    if sorted(order) != sorted(sites):
        raise ValueError("order must be a permutation of sites")
    pos = [sites.index(s) for s in order]
    law = {}
    support = set()
    for values in product(range(model.alphabet_size), repeat=len(sites)):
        ordered = tuple(values[p] for p in pos)
        law[values] = composed_probability(model, config, order, ordered)
        cfg = _set(config, sites, values)
        for s in sites:
            support |= model.context(cfg, s).sites(cfg, s)
    return law, frozenset(support - set(sites))


def direct_pair_law(model, config: Configuration, sites) -> dict[tuple[int, ...], float]:
    """Conditional law on ``sites`` from the pair-field weights (oracle for composition)."""
    sites = tuple(int(s) for s in sites)
    logs = {}
    for values in product(range(model.alphabet_size), repeat=len(sites)):
        cfg = _set(config, sites, values)
        logs[values] = float(model.log_weight(cfg.flat[None, :], cfg.window.extents)[0])
    top = max(logs.values())
    w = {k: np.exp(v - top) for k, v in logs.items()}
    z = sum(w.values())
    return {k: v / z for k, v in w.items()}


def consistency_gap(model: SpecificationModel, config: Configuration, inner, outer) -> float:
    """Largest |ratio difference| between rho_Delta and rho_Lambda for Lambda inside Delta.

    For every zeta on Delta minus Lambda and every pair (w, e) on Lambda,
    rho_Delta(w zeta) / rho_Delta(e zeta) must equal rho_Lambda(w) / rho_Lambda(e)
    evaluated with zeta outside Lambda.
    """
    inner = tuple(int(s) for s in inner)
    outer = tuple(int(s) for s in outer)
    if not set(inner) < set(outer):
        raise ValueError("inner region must be a proper subset of the outer one")
    rest = tuple(s for s in outer if s not in inner)
    A = model.alphabet_size
    gap = 0.0
    for zeta in product(range(A), repeat=len(rest)):
        base = _set(config, rest, zeta)
        small, _ = compose_specification(model, base, inner)
        big = {}
        for w in product(range(A), repeat=len(inner)):
            vals = dict(zip(inner, w)) | dict(zip(rest, zeta))
            big[w] = composed_probability(model, config, tuple(sorted(outer)),
                                          tuple(vals[s] for s in sorted(outer)))
        ref = next(iter(small))
        for w in small:
            gap = max(gap, abs(big[w] / big[ref] - small[w] / small[ref]))
    return gap
