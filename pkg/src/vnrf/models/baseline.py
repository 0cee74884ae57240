"""Fixed-neighbourhood reference models: i.i.d. sites and nearest-neighbour pair fields."""
from __future__ import annotations

import numpy as np

from ..lattice import Configuration, offsets
from .base import PositivityError, RegionResult, SpecificationModel


class IIDModel(SpecificationModel):
    """Independent sites with law ``probs``; the context is empty."""

    name = "iid"
    range = 0

    def __init__(self, probs=(0.5, 0.5), dim: int = 1):
        probs = np.asarray(probs, dtype=float)
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("site law must sum to one")
        if np.any(probs <= 0) or np.any(probs >= 1):
            raise PositivityError("degenerate site law violates positivity")
        self.probs = probs
        self.alphabet_size = len(probs)
        self.dim = dim
        self.q_min = float(probs.min())

    def conditional(self, config: Configuration, i: int) -> np.ndarray:
        return self.probs.copy()

    def context(self, config: Configuration, i: int) -> RegionResult:
        return RegionResult(frozenset())

    def true_radii(self, config: Configuration, sites: np.ndarray) -> np.ndarray:
        return np.ones(len(sites), dtype=np.int64)

    def local_table(self):
        n = self.alphabet_size ** len(offsets(1, self.dim))
        return 1, np.tile(self.probs, (n, 1))

    def log_weight(self, symbols: np.ndarray) -> np.ndarray:
        """Log weight of each row of ``symbols`` (rows are flattened configurations)."""
        return np.log(self.probs)[symbols].sum(axis=1)

    def params_dict(self) -> dict:
        return {"probs": self.probs.tolist(), "dim": self.dim}


class PairwiseModel(SpecificationModel):
    """Nearest-neighbour field with bond weights W and site weights h.

    gamma_0(a | .) is proportional to h[a] times W[x_{-e}, a] W[a, x_{+e}] over the
    lattice axes e. The Ising model has W[s, t] = exp(beta s t) with spins
    s = 2 * symbol - 1; a d=1 Markov chain with transition matrix P has W = P.
    """

    name = "markov1"
    range = 1

    def __init__(self, bond, site=None, dim: int = 1, label: dict | None = None):
        bond = np.asarray(bond, dtype=float)
        if bond.ndim != 2 or bond.shape[0] != bond.shape[1]:
            raise ValueError("bond weights must be a square matrix")
        if np.any(bond <= 0):
            raise PositivityError("bond weights must be positive")
        self.bond = bond
        self.alphabet_size = bond.shape[0]
        self.site = np.ones(self.alphabet_size) if site is None else np.asarray(site, dtype=float)
        if np.any(self.site <= 0):
            raise PositivityError("site weights must be positive")
        if dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        self.dim = dim
        self._label = label or {"bond": bond.tolist(), "site": self.site.tolist(), "dim": dim}
        _, table = self.local_table()
        self.q_min = float(table.min())

    @classmethod
    def ising(cls, beta: float, field: float = 0.0, dim: int = 1) -> "PairwiseModel":
        s = np.array([-1.0, 1.0])
        return cls(np.exp(beta * np.outer(s, s)), np.exp(field * s), dim,
                   label={"beta": beta, "field": field, "dim": dim})

    @classmethod
    def markov_chain(cls, transition) -> "PairwiseModel":
        P = np.asarray(transition, dtype=float)
        if not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to one")
        return cls(P, None, 1, label={"transition": P.tolist()})

    @property
    def axis_neighbours(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """(minus offset, plus offset) per axis."""
        out = []
        for axis in range(self.dim):
            e = [0] * self.dim
            e[axis] = 1
            out.append((tuple(-x for x in e), tuple(e)))
        return out

    def _law(self, minus_vals, plus_vals) -> np.ndarray:
        w = self.site.copy()
        for b, c in zip(minus_vals, plus_vals):
            w = w * self.bond[b, :] * self.bond[:, c]
        return w / w.sum()

    def conditional(self, config: Configuration, i: int) -> np.ndarray:
        centre = config.window.coords(i)
        minus, plus = [], []
        for mo, po in self.axis_neighbours:
            minus.append(config.value_at(tuple(c + k for c, k in zip(centre, mo))))
            plus.append(config.value_at(tuple(c + k for c, k in zip(centre, po))))
        return self._law(minus, plus)

    def context(self, config: Configuration, i: int) -> RegionResult:
        return RegionResult(frozenset(o for pair in self.axis_neighbours for o in pair))

    def true_radii(self, config: Configuration, sites: np.ndarray) -> np.ndarray:
        return np.ones(len(sites), dtype=np.int64)

    def local_table(self):
        off = [tuple(int(c) for c in o) for o in offsets(1, self.dim)]
        cols = [(off.index(mo), off.index(po)) for mo, po in self.axis_neighbours]
        m = len(off)
        A = self.alphabet_size
        keys = np.arange(A ** m)
        digits = np.stack([(keys // A ** (m - 1 - c)) % A for c in range(m)], axis=1)
        w = np.tile(self.site, (len(keys), 1))
        for cm, cp in cols:
            w = w * self.bond[digits[:, cm], :] * self.bond[:, digits[:, cp]].T
        return 1, w / w.sum(axis=1, keepdims=True)

    def log_weight(self, symbols: np.ndarray, extents: tuple[int, ...]) -> np.ndarray:
        """Log of prod h * prod W over the bonds of a periodic window, per row."""
        x = symbols.reshape((len(symbols),) + tuple(extents))
        out = np.log(self.site)[x].reshape(len(symbols), -1).sum(axis=1)
        logW = np.log(self.bond)
        for axis in range(self.dim):
            nxt = np.roll(x, -1, axis=axis + 1)
            out = out + logW[x, nxt].reshape(len(symbols), -1).sum(axis=1)
        return out

    def chain_transition(self) -> tuple[np.ndarray, np.ndarray]:
        """Markov transition and stationary law of the infinite-volume d=1 field."""
        if self.dim != 1:
            raise ValueError("transfer matrix only for d=1")
        M = self.bond * self.site[None, :]
        vals, right = np.linalg.eig(M)
        top = np.argmax(vals.real)
        lam = vals[top].real
        v = np.abs(right[:, top].real)
        lvals, left = np.linalg.eig(M.T)
        u = np.abs(left[:, np.argmax(lvals.real)].real)
        T = M * v[None, :] / (lam * v[:, None])
        pi = u * v / (u @ v)
        return T / T.sum(axis=1, keepdims=True), pi

    def params_dict(self) -> dict:
        return dict(self._label)
