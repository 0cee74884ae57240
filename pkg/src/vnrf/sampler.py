"""Heat-bath dynamics for lattice specifications and exact samplers for the 1-D models.

Every random draw comes from a numpy ``Generator`` seeded through
``SeedSequence(seed, spawn_key=(replicate,))``, so a (seed, replicate) pair
fixes the output bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .lattice import Configuration, LatticeError, Window, offsets
from .models.base import SpecificationModel
from .models.baseline import PairwiseModel
from .models.polygon import PolygonModel, prob_plus_nb
from .models.renewal import RenewalModel, RenewalParams

SCHEDULES = ("raster", "random-site")


@dataclass(frozen=True)
class SamplerConfig:
    sweeps: int = 1000
    thinning: int = 1
    seed: int = 0
    schedule: str = "raster"

    def __post_init__(self):
        if self.sweeps < 0:
            raise ValueError("sweeps must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")


def replicate_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Independent stream for one replicate of one seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replicate,))))


# ---------------------------------------------------------------------------
# site bookkeeping


def updatable_sites(config: Configuration, reach: int) -> np.ndarray:
    """Sites whose update reads only resolvable symbols (all sites unless free boundary)."""
    if config.boundary != "free":
        return np.arange(config.window.size, dtype=np.int64)
    ext = config.window.extents
    if any(e <= 2 * reach for e in ext):
        raise LatticeError("window too small for the model range")
    grids = np.meshgrid(*[np.arange(reach, e - reach) for e in ext], indexing="ij")
    return np.ravel_multi_index(tuple(g.reshape(-1) for g in grids), ext).astype(np.int64)


def neighbour_index(config: Configuration, ell: int) -> np.ndarray:
    """nbr[s, c] = linear index of the c-th punctured-ball site of s.

    Sites outside the window map to the sentinel ``size`` under a fixed
    boundary (the padded array holds the fill symbol there) and wrap under a
    periodic one. Under a free boundary they also map to the sentinel; only
    updatable sites may then be used.
    """
    ext = np.array(config.window.extents)
    coords = np.stack(np.unravel_index(np.arange(config.window.size), tuple(ext)), axis=1)
    off = offsets(ell, config.dim)
    nbr = np.empty((config.window.size, len(off)), dtype=np.int64)
    for c, o in enumerate(off):
        pos = coords + o
        if config.boundary == "periodic":
            nbr[:, c] = np.ravel_multi_index(tuple((pos % ext).T), tuple(ext))
        else:
            inside = np.all((pos >= 0) & (pos < ext), axis=1)
            idx = np.full(len(pos), config.window.size, dtype=np.int64)
            idx[inside] = np.ravel_multi_index(tuple(pos[inside].T), tuple(ext))
            nbr[:, c] = idx
    return nbr


def _padded(config: Configuration) -> np.ndarray:
    fill = config.fill if config.boundary == "fixed" else 0
    return np.concatenate((config.flat.astype(np.int64), [fill]))


# ---------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True)
def _draw(probs, u):
    acc = 0.0
    for a in range(len(probs) - 1):
        acc += probs[a]
        if u < acc:
            return a
    return len(probs) - 1


@numba.njit(cache=True)
def _table_run(x, nbr, order, u, table, A, watch, counts):
    """Update order[t] with uniform u[t]; if watch is non-empty, histogram its pattern after each update."""
    m = nbr.shape[1]
    nw = len(watch)
    for t in range(len(order)):
        s = order[t]
        key = 0
        for c in range(m):
            key = key * A + x[nbr[s, c]]
        x[s] = _draw(table[key], u[t])
        if nw > 0:
            k = 0
            for w in range(nw):
                k = k * A + x[watch[w]]
            counts[k] += 1


@numba.njit(cache=True)
def _polygon_run(x, order, u, L, J, beta, periodic, fill):
    ny = x.shape[1]
    for t in range(len(order)):
        s = order[t]
        cx = s // ny
        cy = s % ny
        p = prob_plus_nb(x, cx, cy, L, J, beta, periodic, fill)
        x[cx, cy] = 1 if u[t] < p else 0


@numba.njit(cache=True)
def _chain_run(x0, T_cdf, u):
    n = len(u) + 1
    out = np.empty(n, dtype=np.int8)
    out[0] = x0
    for t in range(1, n):
        prev = out[t - 1]
        a = 0
        while a < T_cdf.shape[1] - 1 and u[t - 1] >= T_cdf[prev, a]:
            a += 1
        out[t] = a
    return out


# ---------------------------------------------------------------------------
# heat bath


class HeatBath:
    """Reusable single-site heat-bath driver for one (model, configuration) pair.

    The configuration's symbol array is updated in place.
    """

    def __init__(self, model: SpecificationModel, config: Configuration):
        if config.dim != model.dim:
            raise ValueError(f"model is {model.dim}-dimensional, window is {config.dim}-dimensional")
        self.model = model
        self.config = config
        table = model.local_table()
        if table is not None:
            self.kind = "table"
            ell, self.table = table
            self.sites = updatable_sites(config, ell)
            self.nbr = neighbour_index(config, ell)
            self.x = _padded(config)
        elif isinstance(model, PolygonModel):
            self.kind = "polygon"
            self.sites = updatable_sites(config, model.range)
            self.x = config.symbols.astype(np.int64)
            self.J = np.array(model.params.J)
        else:
            self.kind = "generic"
            reach = model.range if model.range is not None else 0
            self.sites = updatable_sites(config, reach)

    def _order(self, rng: np.random.Generator, schedule: str, n: int | None = None) -> np.ndarray:
        if schedule == "raster" and n is None:
            return self.sites
        count = len(self.sites) if n is None else n
        return self.sites[rng.integers(0, len(self.sites), count)]

    def run(self, rng: np.random.Generator, schedule: str = "raster", n_updates: int | None = None,
            watch: np.ndarray | None = None) -> np.ndarray | None:
        """One sweep (default) or ``n_updates`` single-site updates.

        With ``watch`` (table models only), returns the histogram of the watched
        sites' joint pattern recorded after every update.
        """
        if n_updates is not None and schedule == "raster":
            reps = -(-n_updates // len(self.sites))
            order = np.tile(self.sites, reps)[:n_updates]
        else:
            order = self._order(rng, schedule, n_updates)
        u = rng.random(len(order))
        counts = None
        if self.kind == "table":
            w = np.empty(0, dtype=np.int64) if watch is None else np.asarray(watch, dtype=np.int64)
            counts = np.zeros(self.model.alphabet_size ** len(w), dtype=np.int64)
            _table_run(self.x, self.nbr, order, u, self.table, self.model.alphabet_size, w, counts)
            self.config.symbols.reshape(-1)[:] = self.x[:-1]
        elif self.kind == "polygon":
            p = self.model.params
            fill = self.config.fill if self.config.boundary == "fixed" else 0
            _polygon_run(self.x, order, u, p.L, self.J, p.beta,
                         self.config.boundary == "periodic", fill)
            self.config.symbols[:] = self.x
        else:
            flat = self.config.symbols.reshape(-1)
            for s, v in zip(order, u):
                probs = self.model.conditional(self.config, int(s))
                flat[s] = int(np.searchsorted(np.cumsum(probs)[:-1], v, side="right"))
        if watch is not None:
            if counts is None:
                raise ValueError("watched histograms need a table model")
            return counts
        return None


def heat_bath_sweep(config: Configuration, model: SpecificationModel, rng: np.random.Generator,
                    schedule: str = "raster") -> Configuration:
    """One sweep in place; returns ``config``."""
    HeatBath(model, config).run(rng, schedule)
    return config


def random_configuration(window: Window, alphabet_size: int, rng: np.random.Generator,
                         boundary: str = "periodic", fill: int | None = None) -> Configuration:
    return Configuration(window, rng.integers(0, alphabet_size, window.extents, dtype=np.int8),
                         alphabet_size, boundary, fill)


def sample_field(model: SpecificationModel, window: Window, cfg: SamplerConfig = SamplerConfig(),
                 boundary: str = "periodic", replicate: int = 0, exact: bool = True) -> Configuration:
    """A configuration drawn from ``model`` on ``window``.

    With ``exact`` the renewal model and one-dimensional pair fields are drawn
    from their stationary laws directly (free boundary). Otherwise the result
    follows ``cfg.sweeps`` heat-bath sweeps from a uniform random start.
    """
    rng = replicate_rng(cfg.seed, replicate)
    if isinstance(model, RenewalModel):
        if window.dim != 1:
            raise ValueError("renewal model is one-dimensional")
        return renewal_exact_sample(model.params, window.size, rng)
    if exact and isinstance(model, PairwiseModel) and model.dim == 1 and window.dim == 1:
        return markov_chain_sample(model, window.size, rng)
    config = random_configuration(window, model.alphabet_size, rng, boundary)
    bath = HeatBath(model, config)
    for _ in range(cfg.sweeps):
        bath.run(rng, cfg.schedule)
    return config


def sample_sequence(samples: int, model: SpecificationModel, window: Window,
                    cfg: SamplerConfig = SamplerConfig(), boundary: str = "periodic"):
    """Yield ``samples`` configurations, ``cfg.thinning`` sweeps apart, after burn-in."""
    rng = replicate_rng(cfg.seed, 0)
    config = random_configuration(window, model.alphabet_size, rng, boundary)
    bath = HeatBath(model, config)
    for _ in range(cfg.sweeps):
        bath.run(rng, cfg.schedule)
    for _ in range(samples):
        for _ in range(cfg.thinning):
            bath.run(rng, cfg.schedule)
        yield config.copy()


# ---------------------------------------------------------------------------
# exact 1-D samplers


def markov_chain_sample(model: PairwiseModel, n: int, rng: np.random.Generator) -> Configuration:
    """Exact stationary draw of the infinite-volume 1-D pair field restricted to n sites."""
    T, pi = model.chain_transition()
    x0 = int(np.searchsorted(np.cumsum(pi)[:-1], rng.random(), side="right"))
    cdf = np.cumsum(T, axis=1)
    x = _chain_run(x0, cdf, rng.random(n - 1))
    return Configuration(Window((n,)), x, model.alphabet_size, "free")


def renewal_run_lengths(params: RenewalParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` i.i.d. draws of the run length T."""
    w1, _ = params.mixture_weights
    first = rng.random(size) < w1
    out = np.where(first, rng.geometric(1 - params.rho1, size), rng.geometric(1 - params.rho2, size))
    return out.astype(np.int64)


def renewal_exact_sample(params: RenewalParams, n: int, rng: np.random.Generator | int) -> Configuration:
    """Stationary alternating renewal sequence on n sites.

    The run covering the first site is length biased, P[J = j] = j P[T = j] / mu,
    and the first site sits uniformly inside it; later runs are i.i.d. copies of T.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if not isinstance(rng, np.random.Generator):
        rng = replicate_rng(int(rng))
    w1, w2 = params.mixture_weights
    b1 = w1 / (1 - params.rho1)
    b2 = w2 / (1 - params.rho2)
    rho = params.rho1 if rng.random() < b1 / (b1 + b2) else params.rho2
    covering = int(rng.negative_binomial(2, 1 - rho)) + 1
    phase = int(rng.integers(0, covering))
    runs = [np.array([covering - phase], dtype=np.int64)]
    total = int(runs[0][0])
    while total < n:
        batch = renewal_run_lengths(params, int((n - total) / params.mean * 1.1) + 64, rng)
        runs.append(batch)
        total += int(batch.sum())
    lengths = np.concatenate(runs)
    first = int(rng.integers(0, 2))
    symbols = (first + np.arange(len(lengths))) % 2
    x = np.repeat(symbols.astype(np.int8), lengths)[:n]
    return Configuration(Window((n,)), x, 2, "free")
