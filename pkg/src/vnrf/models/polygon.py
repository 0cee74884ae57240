"""Two-dimensional polygon-interaction field with configuration-dependent supports.

Spins are s = 2 * symbol - 1. For a centre j the region Gamma_j is the
smallest site set that contains the 3x3 block around j and whose border
(sites with an 8-neighbour outside the set) carries only +1 spins, searched
among sets inside the box V_j(L). It is found by a flood fill in which every
-1 site pulls its eight neighbours into the set; if the fill has to leave
the box, no such set exists and Gamma_j is the whole box.

    K^j = J[|Gamma_j|] * prod_{k in Gamma_j} s_k
    H_Lambda = - sum_{j : Gamma_j meets Lambda} K^j
    gamma_i(a | .) ~ exp(-beta H_{i}(a, .))

Because the fill only reads sites it has already absorbed, Gamma_j is
determined by the spins on Gamma_j itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numba
import numpy as np

from ..lattice import Configuration, LatticeError, max_norm
from .base import RegionResult, SpecificationModel

_N8 = tuple(o for o in product((-1, 0, 1), repeat=2) if o != (0, 0))


@dataclass(frozen=True)
class PolygonParams:
    beta: float = 0.05
    L: int = 2
    J: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        need = (2 * self.L + 1) ** 2 + 1
        J = tuple(float(v) for v in self.J) if self.J else default_couplings(self.L)
        if len(J) < need:
            raise ValueError(f"J must cover cardinalities 0..{need - 1}")
        object.__setattr__(self, "J", J)

    @property
    def max_coupling(self) -> float:
        """Largest |J_n| over the cardinalities a region can have (3x3 block up to the box)."""
        return max(abs(v) for v in self.J[9:(2 * self.L + 1) ** 2 + 1])


def default_couplings(L: int) -> tuple[float, ...]:
    n = (2 * L + 1) ** 2
    return (0.0,) + tuple(1.0 + 1.0 / k for k in range(1, n + 1))


def _spin(config: Configuration, coord) -> int:
    return 2 * config.value_at(coord) - 1


def closure(config: Configuration, centre: tuple[int, int], box: int) -> tuple[frozenset, bool]:
    """Flood fill from the 3x3 block; returns (set, escaped). Escaped sets are the full box."""
    cx, cy = centre
    seen = {(cx + dx, cy + dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)}
    stack = list(seen)
    while stack:
        x = stack.pop()
        if config.value_at(x) == 1:
            continue
        for dx, dy in _N8:
            y = (x[0] + dx, x[1] + dy)
            if y in seen:
                continue
            if max(abs(y[0] - cx), abs(y[1] - cy)) > box:
                full = frozenset((cx + a, cy + b) for a in range(-box, box + 1)
                                 for b in range(-box, box + 1))
                return full, True
            seen.add(y)
            stack.append(y)
    return frozenset(seen), False


def polygon_region(config: Configuration, i: int, params: PolygonParams,
                   box: int | None = None) -> RegionResult:
    """Gamma_i as offsets from i, searched inside V_i(box) (default: V_i(L))."""
    if config.dim != 2:
        raise ValueError("polygon model is two-dimensional")
    box = params.L if box is None else box
    centre = config.window.coords(i)
    region, escaped = closure(config, centre, box)
    return RegionResult(frozenset((x - centre[0], y - centre[1]) for x, y in region), escaped)


def _regions_near(config: Configuration, centre, params: PolygonParams):
    """(j, Gamma_j) for every j within distance L of centre."""
    L = params.L
    out = []
    for dx in range(-L, L + 1):
        for dy in range(-L, L + 1):
            j = (centre[0] + dx, centre[1] + dy)
            out.append((j, closure(config, j, L)[0]))
    return out


def coupling_term(config: Configuration, region, params: PolygonParams) -> float:
    prod_s = 1
    for k in region:
        prod_s *= _spin(config, k)
    return params.J[len(region)] * prod_s


def polygon_energy(config: Configuration, sites, params: PolygonParams):
    """H_Lambda and the contributing terms {j: K^j} for the site set Lambda."""
    lam = {config.window.coords(int(s)) for s in sites}
    L = params.L
    candidates = {(x + dx, y + dy) for x, y in lam
                  for dx in range(-L, L + 1) for dy in range(-L, L + 1)}
    terms = {}
    for j in sorted(candidates):
        region, _ = closure(config, j, L)
        if region & lam:
            terms[j] = coupling_term(config, region, params)
    return -sum(terms.values()), terms


def local_energy(config: Configuration, centre, params: PolygonParams) -> float:
    """H_{i} at the configuration as given."""
    total = 0.0
    for _, region in _regions_near(config, centre, params):
        if centre in region:
            total += coupling_term(config, region, params)
    return -total


def polygon_gamma0(config: Configuration, i: int, params: PolygonParams) -> np.ndarray:
    centre = config.window.coords(i)
    energies = []
    for a in (0, 1):
        energies.append(local_energy(config.with_value(centre, a), centre, params))
    e = -params.beta * np.array(energies)
    e -= e.max()
    w = np.exp(e)
    return w / w.sum()


def support_union(config: Configuration, i: int, params: PolygonParams) -> frozenset:
    """Union of every Gamma_j that contains i, for both values of the centre, minus i.

    This is the set of sites the interaction terms of H_{i} are built on.
    """
    centre = config.window.coords(i)
    out = set()
    for a in (0, 1):
        cfg = config.with_value(centre, a)
        for _, region in _regions_near(cfg, centre, params):
            if centre in region:
                out |= region
    out.discard(centre)
    return frozenset((x - centre[0], y - centre[1]) for x, y in out)


def closed_form_context(config: Configuration, i: int, params: PolygonParams) -> frozenset:
    """(Gamma^1_i inside V_i(2L)) minus i: the closed-form candidate for the context."""
    centre = config.window.coords(i)
    region, _ = closure(config, centre, 2 * params.L)
    region = {x for x in region if max_norm(x, centre) <= 2 * params.L}
    region.discard(centre)
    return frozenset((x - centre[0], y - centre[1]) for x, y in region)


def dependence_set(config: Configuration, i: int, params: PolygonParams) -> frozenset:
    """Every site read while computing gamma_i: all Gamma_j, j in V_i(L), for both centre values."""
    centre = config.window.coords(i)
    out = set()
    for a in (0, 1):
        cfg = config.with_value(centre, a)
        for _, region in _regions_near(cfg, centre, params):
            out |= region
    out.discard(centre)
    return frozenset((x - centre[0], y - centre[1]) for x, y in out)


class PolygonModel(SpecificationModel):
    name = "polygon"
    alphabet_size = 2
    dim = 2

    def __init__(self, params: PolygonParams | None = None):
        self.params = params or PolygonParams()
        self.range = 2 * self.params.L
        self.q_min = self.q_min_bound()

    def q_min_bound(self) -> float:
        """|H_{i}| <= |V_0(L)| max|J|, hence gamma >= 1 / (1 + exp(2 beta M))."""
        M = (2 * self.params.L + 1) ** 2 * self.params.max_coupling
        return 1.0 / (1.0 + math.exp(2.0 * self.params.beta * M))

    def _check_margin(self, config: Configuration, i: int) -> None:
        if config.boundary != "free":
            return
        c = config.window.coords(i)
        m = self.range
        if any(x - m < 0 or x + m >= e for x, e in zip(c, config.window.extents)):
            raise LatticeError("context exceeds window")

    def conditional(self, config: Configuration, i: int) -> np.ndarray:
        self._check_margin(config, i)
        return polygon_gamma0(config, i, self.params)

    def context(self, config: Configuration, i: int) -> RegionResult:
        """Sites read by the local energy computation (a sufficient support)."""
        self._check_margin(config, i)
        return RegionResult(dependence_set(config, i, self.params))

    def region(self, config: Configuration, i: int) -> RegionResult:
        return polygon_region(config, i, self.params)

    def dobrushin_bound(self) -> dict[tuple[int, int], float]:
        """Upper bounds on r(0, k) for every k != 0 within the dependence range.

        Changing the spin at k can only alter the terms K^j with j in V_0(L)
        and k in V_j(L); each such term moves H_{0}(a) by at most 2 max|J|,
        and the logistic map has slope at most beta / 4.
        """
        L = self.params.L
        J = self.params.max_coupling
        M = (2 * L + 1) ** 2 * J
        cap = math.tanh(self.params.beta * M)
        out = {}
        for k in product(range(-2 * L, 2 * L + 1), repeat=2):
            if k == (0, 0):
                continue
            overlap = sum(1 for j in product(range(-L, L + 1), repeat=2) if max_norm(j, k) <= L)
            out[k] = min(cap, self.params.beta * J * overlap)
        return out

    def params_dict(self) -> dict:
        p = self.params
        return {"beta": p.beta, "L": p.L, "J": list(p.J)}


# ---------------------------------------------------------------------------
# compiled kernel used by the heat-bath sampler


@numba.njit(cache=True)
def _read(x, px, py, periodic, fill):
    nx, ny = x.shape
    if 0 <= px < nx and 0 <= py < ny:
        return x[px, py]
    if periodic:
        return x[px % nx, py % ny]
    return fill


@numba.njit(cache=True)
def _region_term(x, jx, jy, cx, cy, L, J, periodic, fill):
    """(contains centre, K^j) for the region of centre (jx, jy)."""
    w = 2 * L + 1
    mask = np.zeros((w, w), dtype=np.bool_)
    stack = np.empty((w * w, 2), dtype=np.int64)
    top = 0
    for dx in range(-1, 2):
        for dy in range(-1, 2):
            mask[L + dx, L + dy] = True
            stack[top, 0] = dx
            stack[top, 1] = dy
            top += 1
    escaped = False
    while top > 0 and not escaped:
        top -= 1
        ox = stack[top, 0]
        oy = stack[top, 1]
        if _read(x, jx + ox, jy + oy, periodic, fill) == 1:
            continue
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                if dx == 0 and dy == 0:
                    continue
                nx_ = ox + dx
                ny_ = oy + dy
                if abs(nx_) > L or abs(ny_) > L:
                    escaped = True
                    break
                if not mask[L + nx_, L + ny_]:
                    mask[L + nx_, L + ny_] = True
                    stack[top, 0] = nx_
                    stack[top, 1] = ny_
                    top += 1
            if escaped:
                break
    if escaped:
        for a in range(w):
            for b in range(w):
                mask[a, b] = True
    rx = cx - jx + L
    ry = cy - jy + L
    if rx < 0 or rx >= w or ry < 0 or ry >= w or not mask[rx, ry]:
        return False, 0.0
    count = 0
    sign = 1
    for a in range(w):
        for b in range(w):
            if mask[a, b]:
                count += 1
                if _read(x, jx + a - L, jy + b - L, periodic, fill) == 0:
                    sign = -sign
    return True, J[count] * sign


@numba.njit(cache=True)
def local_energy_nb(x, cx, cy, L, J, periodic, fill):
    total = 0.0
    for dx in range(-L, L + 1):
        for dy in range(-L, L + 1):
            hit, term = _region_term(x, cx + dx, cy + dy, cx, cy, L, J, periodic, fill)
            if hit:
                total += term
    return -total


@numba.njit(cache=True)
def prob_plus_nb(x, cx, cy, L, J, beta, periodic, fill):
    """gamma(+1 | .) at (cx, cy); the array is restored before returning."""
    old = x[cx, cy]
    x[cx, cy] = 0
    e0 = local_energy_nb(x, cx, cy, L, J, periodic, fill)
    x[cx, cy] = 1
    e1 = local_energy_nb(x, cx, cy, L, J, periodic, fill)
    x[cx, cy] = old
    d = -beta * (e1 - e0)
    if d > 0:
        return 1.0 / (1.0 + math.exp(-d))
    ed = math.exp(d)
    return ed / (1.0 + ed)
