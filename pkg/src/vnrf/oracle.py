"""Brute-force references: exact measures on tiny windows, exact pattern laws,
Dobrushin sensitivities and randomised identity checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .estimator import (count_patterns, log_likelihood_batch, log_likelihood_kl,
                        log_likelihood_mpl, log_likelihood_sites, log_mpl, relative_gap)
from .lattice import (Configuration, Window, extract_pattern, matrix_keys, offsets,
                      security_region)
from .models.base import SpecificationModel
from .models.baseline import IIDModel, PairwiseModel
from .models.compose import compose_specification, consistency_gap
from .models.polygon import (PolygonModel, PolygonParams, _region_term, closed_form_context,
                             prob_plus_nb, support_union)
from .models.renewal import RenewalModel

MAX_STATES = 2 ** 20


class OracleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ExactMeasure:
    """Probabilities of every configuration of a tiny window.

    Configuration number k lists symbols in row-major site order, first site
    most significant (base |A|).
    """

    window: Window
    alphabet_size: int
    probabilities: np.ndarray = field(repr=False)
    model_name: str
    geometry: str   # "torus" or "line"

    def configurations(self) -> np.ndarray:
        return all_configurations(self.window.size, self.alphabet_size)

    def marginal(self, sites) -> np.ndarray:
        """Joint law of the symbols at ``sites`` (base-|A| index, first site most significant)."""
        X = self.configurations()
        keys = matrix_keys(X[:, list(sites)], self.alphabet_size)
        return np.bincount(keys, weights=self.probabilities,
                           minlength=self.alphabet_size ** len(sites))


def all_configurations(n: int, A: int) -> np.ndarray:
    idx = np.arange(A ** n, dtype=np.int64)
    return np.stack([(idx // A ** (n - 1 - s)) % A for s in range(n)], axis=1).astype(np.int8)


@numba.njit(cache=True)
def _polygon_torus_logw(X, nx, ny, L, J, beta):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        x = X[r].reshape((nx, ny)).astype(np.int64)
        h = 0.0
        for jx in range(nx):
            for jy in range(ny):
                _, term = _region_term(x, jx, jy, jx, jy, L, J, True, 0)
                h -= term
        out[r] = -beta * h
    return out


def _normalise(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw - logw.max())
    return w / w.sum()


def exact_measure(model: SpecificationModel, window: Window) -> ExactMeasure:
    """Exact law on a periodic torus (energy and product models) or a line segment (renewal)."""
    A = model.alphabet_size
    n = window.size
    if A ** n > MAX_STATES:
        raise OracleError(f"state space too large ({A}^{n} > 2^20)")
    if window.dim != model.dim:
        raise OracleError("window dimension does not match the model")
    X = all_configurations(n, A)
    if isinstance(model, RenewalModel):
        probs = np.array([model.window_probability(x) for x in X])
        return ExactMeasure(window, A, probs / probs.sum(), model.name, "line")
    if isinstance(model, IIDModel):
        logw = model.log_weight(X)
    elif isinstance(model, PairwiseModel):
        logw = model.log_weight(X, window.extents)
    elif isinstance(model, PolygonModel):
        L = model.params.L
        if min(window.extents) < 2 * L + 1:
            raise OracleError("torus must be at least 2L+1 wide for the polygon model")
        logw = _polygon_torus_logw(X, window.extents[0], window.extents[1], L,
                                   np.array(model.params.J), model.params.beta)
    else:
        raise OracleError(f"no exact construction for model {model.name!r}")
    return ExactMeasure(window, A, _normalise(np.asarray(logw, dtype=float)), model.name, "torus")


@dataclass(frozen=True, eq=False)
class PatternProbs:
    radius: int
    keys: np.ndarray          # every pattern of A^{V_0^0(ell)}, in key order
    p_eta: np.ndarray
    p_joint: np.ndarray       # p((eta, a)), shape (keys, A)

    @property
    def p_cond(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.p_eta[:, None] > 0, self.p_joint / self.p_eta[:, None], 0.0)

    def lookup(self, key: int) -> tuple[float, np.ndarray]:
        return float(self.p_eta[key]), self.p_cond[key]


def exact_pattern_probs(measure: ExactMeasure, ell: int) -> PatternProbs:
    """p(eta) and p((eta, a)) for radius-ell patterns around one reference site."""
    w = measure.window
    if any(2 * ell + 1 > e for e in w.extents):
        raise OracleError("pattern wider than the window")
    A = measure.alphabet_size
    X = measure.configurations()
    if measure.geometry == "torus":
        centre = 0
        periodic = True
    else:
        centre = w.index(tuple(e // 2 for e in w.extents))
        periodic = False
    coords = np.array(w.coords(centre))
    cols = []
    for o in offsets(ell, w.dim):
        c = coords + o
        if periodic:
            c = c % np.array(w.extents)
        cols.append(w.index(tuple(int(v) for v in c)))
    keys = matrix_keys(X[:, cols], A)
    m = A ** len(cols)
    joint = np.bincount(keys * A + X[:, centre], weights=measure.probabilities,
                        minlength=m * A).reshape(m, A)
    return PatternProbs(ell, np.arange(m), joint.sum(axis=1), joint)


def alpha0(measure: ExactMeasure, L: int) -> float:
    """min over ell <= L, eta, a of {p(a | eta), p(eta)}."""
    lo = 1.0
    for ell in range(1, L + 1):
        pp = exact_pattern_probs(measure, ell)
        lo = min(lo, float(pp.p_eta.min()), float(pp.p_cond.min()))
    return lo


def delta_n(table, exact: PatternProbs, eta_key: int) -> float:
    """sum_a (N(eta, a)/|region| log p_hat(a|eta) - p((eta, a)) log p(a|eta))."""
    n_region = table.region_size
    r = table.row(eta_key)
    total = 0.0
    cond = exact.p_cond[eta_key]
    for a in range(table.alphabet_size):
        if r is not None and table.counts[r, a] > 0:
            total += table.counts[r, a] / n_region * math.log(table.counts[r, a] / table.totals[r])
        pj = exact.p_joint[eta_key, a]
        if pj > 0:
            total -= pj * math.log(cond[a])
    return total


# ---------------------------------------------------------------------------
# bound shapes (unspecified constants set to 1)


def bound_expodedecker(n_region: int, dev: float, ell: int, d: int, c: float = 1.0) -> float:
    return math.exp(1 / math.e) * math.exp(-c * n_region * dev ** 2 / ((2 * ell) ** (2 * d - 1) * math.e))


def bound_ineq2(n_region: int, t: float, a0: float, C: float = 1.0) -> float:
    return 2 * math.exp(1 / math.e) * math.exp(-C * n_region * t ** 2 * a0 / (4 * math.e))


def bound_deltan(n_region: int, t: float, a0: float, A: int, C: float = 1.0) -> float:
    denom = 8 * A ** 2 * max(math.log(a0) ** 2, 1.0) * math.e
    return 3 * A * math.exp(1 / math.e) * math.exp(-C * n_region * min(t, t * t) * a0 ** 2 / denom)


# ---------------------------------------------------------------------------
# Dobrushin sensitivities


@dataclass
class DobrushinReport:
    model: str
    method: str                        # "exhaustive", "upper-bound" or "zero"
    r_pairs: dict                      # offset -> r(0, offset)
    lower_pairs: dict | None = None    # sampled lower bounds (upper-bound method only)

    @property
    def r(self) -> float:
        return float(sum(self.r_pairs.values()))

    def beta(self, ell: int) -> float:
        return float(sum(v for k, v in self.r_pairs.items() if max(abs(c) for c in k) > ell))

    @property
    def contraction(self) -> bool:
        return self.r < 1

    def as_dict(self) -> dict:
        out = {"model": self.model, "method": self.method, "r": self.r, "r_lt_1": self.contraction,
               "r_pairs": {",".join(map(str, k)): v for k, v in sorted(self.r_pairs.items())}}
        ranges = sorted({max(abs(c) for c in k) for k in self.r_pairs}) or [0]
        out["beta_ell"] = {str(e): self.beta(e) for e in range(0, max(ranges) + 1)}
        if self.lower_pairs is not None:
            out["r_lower_sampled"] = float(sum(self.lower_pairs.values()))
        return out


def _table_dobrushin(model: SpecificationModel) -> dict:
    ell, table = model.local_table()
    A = model.alphabet_size
    off = [tuple(int(c) for c in o) for o in offsets(ell, model.dim)]
    m = len(off)
    keys = np.arange(A ** m)
    out = {}
    for c, o in enumerate(off):
        place = A ** (m - 1 - c)
        digit = (keys // place) % A
        best = 0.0
        for b in range(A):
            alt = keys + (b - digit) * place
            best = max(best, float(0.5 * np.abs(table[keys] - table[alt]).sum(axis=1).max()))
        out[o] = best
    return out


def _polygon_lower(model: PolygonModel, samples: int, seed: int) -> dict:
    L = model.params.L
    side = 4 * L + 1
    c = 2 * L
    rng = np.random.default_rng(seed)
    J = np.array(model.params.J)
    out = {}
    for _ in range(samples):
        x = rng.integers(0, 2, (side, side)).astype(np.int64)
        p = prob_plus_nb(x, c, c, L, J, model.params.beta, False, 0)
        for dx in range(-2 * L, 2 * L + 1):
            for dy in range(-2 * L, 2 * L + 1):
                if dx == 0 and dy == 0:
                    continue
                x[c + dx, c + dy] ^= 1
                q = prob_plus_nb(x, c, c, L, J, model.params.beta, False, 0)
                x[c + dx, c + dy] ^= 1
                k = (dx, dy)
                out[k] = max(out.get(k, 0.0), abs(p - q))
    return out


def dobrushin(model: SpecificationModel, samples: int = 500, seed: int = 0) -> DobrushinReport:
    """r(0, k) for every k in range.

    Table models are handled by exhaustive search over neighbourhood pairs. For
    the polygon model the 80-site neighbourhood is out of reach, so r(0, k) is
    an analytic upper bound, reported with a sampled lower bound.
    """
    if isinstance(model, IIDModel):
        return DobrushinReport(model.name, "zero", {o: 0.0 for o in
                                                     map(lambda o: tuple(int(c) for c in o),
                                                         offsets(1, model.dim))})
    if model.local_table() is not None:
        return DobrushinReport(model.name, "exhaustive", _table_dobrushin(model))
    if isinstance(model, PolygonModel):
        return DobrushinReport(model.name, "upper-bound", model.dobrushin_bound(),
                               _polygon_lower(model, samples, seed))
    raise OracleError(f"model {model.name!r} has unbounded range; no Dobrushin computation")


# ---------------------------------------------------------------------------
# identity checks


def check_context_identity(trials: int = 100, seed: int = 0, params: PolygonParams | None = None,
                           side: int = 9) -> dict:
    """Closed-form polygon context against the union of interaction supports, on random windows."""
    params = params or PolygonParams(beta=0.3, L=2)
    rng = np.random.default_rng(seed)
    w = Window((side, side))
    centre = w.index((side // 2, side // 2))
    failures = []
    for t in range(trials):
        cfg = Configuration(w, rng.integers(0, 2, (side, side)), 2, "free")
        a = closed_form_context(cfg, centre, params)
        b = support_union(cfg, centre, params)
        if a != b:
            failures.append({"trial": t, "grid": cfg.symbols.tolist(),
                             "closed_form_only": sorted(a - b), "support_union_only": sorted(b - a)})
    return {"name": "polygon-context", "trials": trials, "failures": len(failures),
            "holds": not failures, "witness": failures[0] if failures else None}


def check_loglik_forms(trials: int = 50, n: int = 500, ell: int = 2, seed: int = 0,
                       tol: float = 1e-10) -> dict:
    """Four evaluations of logL(i, ell) at every region site of random binary lines."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    witness = None
    for t in range(trials):
        cfg = Configuration(Window((n,)), rng.integers(0, 2, n), 2, "free")
        region = security_region(cfg.window, margin=ell)
        fine, coarse = count_patterns(cfg, region, ell), count_patterns(cfg, region, ell - 1)
        batch = log_likelihood_batch(fine, coarse)
        seen = set()
        for pos, i in enumerate(region.sites):
            r = int(coarse.site_rows[pos])
            if r in seen:
                continue
            seen.add(r)
            i = int(i)
            v1 = log_likelihood_kl(cfg, i, fine, coarse)
            v3 = log_likelihood_sites(cfg, i, fine, coarse)
            v4 = log_likelihood_mpl(cfg, i, fine, coarse)
            scale = abs(log_mpl(coarse, extract_pattern(cfg, i, ell - 1)))
            gap = max(relative_gap(v1, v3), relative_gap(v1, v4, scale), relative_gap(v1, batch[r]))
            if gap > worst:
                worst = gap
                witness = {"trial": t, "site": i, "kl": v1, "site_sum": v3, "mpl": v4, "batch": float(batch[r])}
    return {"name": "loglik-forms", "trials": trials, "max_relative_gap": float(worst),
            "holds": bool(worst <= tol), "witness": witness}


def check_composition(seed: int = 0, beta: float = 0.3, n: int = 8, tol: float = 1e-10) -> dict:
    """Composed regional laws against the direct pair-field law, plus consistency ratios."""
    from .models.compose import direct_pair_law
    model = PairwiseModel.ising(beta)
    rng = np.random.default_rng(seed)
    cfg = Configuration(Window((n,)), rng.integers(0, 2, n), 2, "periodic")
    worst_direct = 0.0
    for sites in ((2, 3), (2, 3, 4), (1, 3, 4)):
        law, _ = compose_specification(model, cfg, sites)
        direct = direct_pair_law(model, cfg, sites)
        worst_direct = max(worst_direct, max(abs(law[k] - direct[k]) for k in law))
    gap = max(consistency_gap(model, cfg, inner, (2, 3, 4)) for inner in ((2,), (3,), (2, 3), (3, 4)))
    return {"name": "composition", "max_direct_gap": float(worst_direct), "max_consistency_gap": float(gap),
            "holds": bool(worst_direct <= tol and gap <= tol)}


def check_region_support(seed: int = 0, trials: int = 20) -> dict:
    """The composed law on a region is unchanged by resampling outside its support."""
    model = RenewalModel()
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        n = 40
        x = rng.integers(0, 2, n)
        x[:3] = [0, 1, 0]
        x[-3:] = [1, 0, 1]
        cfg = Configuration(Window((n,)), x, 2, "free")
        sites = (19, 20)
        try:
            law, sp = compose_specification(model, cfg, sites)
        except Exception:
            continue
        y = cfg.flat.copy()
        outside = [s for s in range(3, n - 3) if s not in sp and s not in sites]
        y[outside] = rng.integers(0, 2, len(outside))
        other = Configuration(cfg.window, y, 2, "free")
        try:
            law2, _ = compose_specification(model, other, sites)
        except Exception:
            bad += 1
            continue
        if max(abs(law[k] - law2[k]) for k in law) > 1e-12:
            bad += 1
    return {"name": "region-support", "trials": trials, "failures": bad, "holds": bad == 0}


def identity_checks(seed: int = 0, polygon_trials: int = 100, loglik_trials: int = 50) -> dict:
    checks = [check_context_identity(polygon_trials, seed), check_loglik_forms(loglik_trials, seed=seed),
              check_composition(seed), check_region_support(seed)]
    return {"checks": checks, "all_hold": all(c["holds"] for c in checks)}
