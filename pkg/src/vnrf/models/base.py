"""The specification-model contract shared by every concrete model."""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..lattice import Configuration, LatticeError


class PositivityError(ValueError):
    pass


@dataclass(frozen=True)
class RegionResult:
    """A site set around a centre, stored as offsets so it is translation free."""

    offsets: frozenset[tuple[int, ...]]
    truncated: bool = False

    @property
    def radius(self) -> int:
        """Smallest ell >= 1 whose ball contains the set (empty set -> 1)."""
        if not self.offsets:
            return 1
        return max(1, max(max(abs(c) for c in o) for o in self.offsets))

    def coords(self, centre: Sequence[int]) -> set[tuple[int, ...]]:
        return {tuple(c + k for c, k in zip(centre, o)) for o in self.offsets}

    def sites(self, config: Configuration, i: int) -> set[int]:
        """Linear indices in ``config``'s window (periodic wrap applied)."""
        centre = config.window.coords(i)
        out = set()
        for c in self.coords(centre):
            if not config.window.contains(c):
                if config.boundary != "periodic":
                    raise LatticeError("context exceeds window")
                c = tuple(x % e for x, e in zip(c, config.window.extents))
            out.add(config.window.index(c))
        return out


class SpecificationModel(ABC):
    """One-point specification gamma_0(. | neighbourhood) plus its context oracle.

    Symbols are 0..alphabet_size-1. ``range`` is the largest max-norm distance
    at which gamma_0 can depend on the configuration (None when unbounded).
    """

    name: str = "model"
    alphabet_size: int = 2
    dim: int = 1
    range: int | None = None
    q_min: float = 0.0
    q_min_is_estimate: bool = False

    @abstractmethod
    def conditional(self, config: Configuration, i: int) -> np.ndarray:
        """Probability vector gamma_i(. | config outside i)."""

    def gamma0(self, a: int, config: Configuration, i: int) -> float:
        return float(self.conditional(config, i)[a])

    @abstractmethod
    def context(self, config: Configuration, i: int) -> RegionResult:
        """Support sp_i(config) of the conditional law at i."""

    def radius(self, config: Configuration, i: int) -> int:
        return self.context(config, i).radius

    def true_radii(self, config: Configuration, sites: np.ndarray) -> np.ndarray:
        """Context radius for every site, -1 where the context leaves the window."""
        out = np.full(len(sites), -1, dtype=np.int64)
        for k, i in enumerate(np.asarray(sites)):
            try:
                out[k] = self.radius(config, int(i))
            except LatticeError:
                pass
        return out

    def local_table(self) -> tuple[int, np.ndarray] | None:
        """(ell, table) with table[pattern_key] = conditional law, for small finite-range models."""
        return None

    def params_dict(self) -> dict:
        return {}

    def to_json(self) -> dict:
        return {"model": self.name, "params": self.params_dict(), "seedless": True}

    def check_positive(self, probs: np.ndarray) -> np.ndarray:
        if np.any(probs <= 0):
            raise PositivityError("positivity violated")
        return probs
