"""Lattice geometry, configurations and neighbourhood patterns.

Sites of a finite window are addressed by their row-major linear index.
Patterns are the symbols seen on a punctured max-norm ball around a centre,
listed in lexicographic order of the coordinate offset (centre excluded).
That order is global: every function here and in the estimator uses it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Iterable, Sequence

import numpy as np

BOUNDARY_MODES = ("free", "periodic", "fixed")


class LatticeError(ValueError):
    """Raised for geometry violations (sites or balls leaving the window)."""


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"alphabet size must be >= 2, got {self.size}")

    def validate(self, symbols: np.ndarray) -> None:
        if symbols.size and (symbols.min() < 0 or symbols.max() >= self.size):
            raise ValueError(f"symbols must lie in 0..{self.size - 1}")


@dataclass(frozen=True)
class Window:
    """Rectangular window of Z^d, d in {1, 2} at desk scale."""

    extents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(int(e) for e in self.extents))
        if not self.extents or any(e < 1 for e in self.extents):
            raise ValueError(f"invalid window extents {self.extents}")

    @classmethod
    def parse(cls, text: str) -> "Window":
        """Parse ``"256x256"`` or ``"100000"``."""
        return cls(tuple(int(p) for p in text.lower().split("x")))

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def size(self) -> int:
        return math.prod(self.extents)

    def coords(self, i: int) -> tuple[int, ...]:
        if not 0 <= i < self.size:
            raise LatticeError("site outside window")
        return tuple(int(c) for c in np.unravel_index(i, self.extents))

    def index(self, coord: Sequence[int]) -> int:
        if not self.contains(coord):
            raise LatticeError("site outside window")
        return int(np.ravel_multi_index(tuple(coord), self.extents))

    def contains(self, coord: Sequence[int]) -> bool:
        return len(coord) == self.dim and all(0 <= c < e for c, e in zip(coord, self.extents))

    def label(self) -> str:
        return "x".join(str(e) for e in self.extents)


@dataclass
class Configuration:
    """Symbols on a window together with the rule for reading outside it.

    ``boundary`` is ``"free"`` (reading outside is an error), ``"periodic"``
    (coordinates wrap) or ``"fixed"`` (outside sites read as ``fill``).
    """

    window: Window
    symbols: np.ndarray
    alphabet_size: int = 2
    boundary: str = "free"
    fill: int | None = None

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int8).reshape(self.window.extents)
        Alphabet(self.alphabet_size).validate(self.symbols)
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        if self.boundary == "fixed":
            if self.fill is None or not 0 <= self.fill < self.alphabet_size:
                raise ValueError("fixed boundary needs a valid fill symbol")

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def flat(self) -> np.ndarray:
        return self.symbols.reshape(-1)

    def copy(self) -> "Configuration":
        return Configuration(self.window, self.symbols.copy(), self.alphabet_size,
                             self.boundary, self.fill)

    def value_at(self, coord: Sequence[int]) -> int:
        """Symbol at an arbitrary lattice coordinate, resolved by the boundary mode."""
        if self.window.contains(coord):
            return int(self.symbols[tuple(coord)])
        if self.boundary == "periodic":
            return int(self.symbols[tuple(c % e for c, e in zip(coord, self.window.extents))])
        if self.boundary == "fixed":
            return int(self.fill)
        raise LatticeError("pattern exceeds window")

    def with_value(self, coord: Sequence[int], symbol: int) -> "Configuration":
        out = self.copy()
        out.symbols[self._wrap(coord)] = symbol
        return out

    def _wrap(self, coord: Sequence[int]) -> tuple[int, ...]:
        if self.window.contains(coord):
            return tuple(coord)
        if self.boundary == "periodic":
            return tuple(c % e for c, e in zip(coord, self.window.extents))
        raise LatticeError("site outside window")


# ---------------------------------------------------------------------------
# balls and offsets


@lru_cache(maxsize=None)
def _offsets(ell: int, d: int) -> tuple[tuple[int, ...], ...]:
    return tuple(o for o in product(range(-ell, ell + 1), repeat=d) if any(o))


def offsets(ell: int, d: int) -> np.ndarray:
    """Offsets of the punctured ball V_0^0(ell) in canonical (lexicographic) order."""
    if ell < 0:
        raise ValueError("radius must be >= 0")
    out = np.array(_offsets(ell, d), dtype=np.int64)
    return out.reshape(-1, d)


def shell_offsets(ell: int, d: int) -> np.ndarray:
    """Offsets j with max-norm exactly ell, canonical order."""
    off = offsets(ell, d)
    return off[np.abs(off).max(axis=1) == ell] if len(off) else off


def punctured_size(ell: int, d: int) -> int:
    return (2 * ell + 1) ** d - 1


def shell_size(ell: int, d: int) -> int:
    if ell == 0:
        return 1
    return (2 * ell + 1) ** d - (2 * ell - 1) ** d


def _resolve(window: Window, coord: tuple[int, ...], boundary: str) -> int | None:
    if window.contains(coord):
        return window.index(coord)
    if boundary == "periodic":
        return window.index(tuple(c % e for c, e in zip(coord, window.extents)))
    return None


def ball(i: int, ell: int, window: Window, boundary: str = "free", *,
         punctured: bool = False) -> set[int]:
    """Site indices of the max-norm ball V_i(ell) (or V_i^0(ell) if punctured).

    Free and fixed boundaries truncate at the window edge; periodic wraps.
    """
    if ell < 0:
        raise ValueError("radius must be >= 0")
    centre = window.coords(i)
    out = set() if punctured else {i}
    for o in _offsets(ell, window.dim):
        j = _resolve(window, tuple(c + k for c, k in zip(centre, o)), boundary)
        if j is not None and not (punctured and j == i):
            out.add(j)
    return out


def shell(i: int, ell: int, window: Window, boundary: str = "free") -> set[int]:
    """Sites at max-norm distance exactly ell from i."""
    centre = window.coords(i)
    if ell == 0:
        return {i}
    out = set()
    for o in shell_offsets(ell, window.dim):
        j = _resolve(window, tuple(int(c + k) for c, k in zip(centre, o)), boundary)
        if j is not None:
            out.add(j)
    return out


def max_norm(a: Sequence[int], b: Sequence[int]) -> int:
    return max(abs(x - y) for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# patterns


@dataclass(frozen=True)
class Pattern:
    radius: int
    dim: int
    alphabet_size: int
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if len(self.values) != punctured_size(self.radius, self.dim):
            raise ValueError(
                f"pattern of radius {self.radius} in d={self.dim} needs "
                f"{punctured_size(self.radius, self.dim)} values, got {len(self.values)}")
        if any(not 0 <= v < self.alphabet_size for v in self.values):
            raise ValueError("pattern value outside alphabet")

    @property
    def key(self) -> int:
        return pattern_key(self)

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(c) for c in o): v
                for o, v in zip(offsets(self.radius, self.dim), self.values)}


def extract_pattern(config: Configuration, i: int, ell: int) -> Pattern:
    """The configuration on the punctured ball around i; the centre is excluded."""
    centre = config.window.coords(i)
    values = [config.value_at(tuple(c + k for c, k in zip(centre, o)))
              for o in _offsets(ell, config.dim)]
    return Pattern(ell, config.dim, config.alphabet_size, tuple(values))


def pattern_key(p: Pattern) -> int:
    """Base-|A| positional encoding, first canonical site most significant."""
    key = 0
    for v in p.values:
        key = key * p.alphabet_size + v
    return key


def decode_key(key: int, ell: int, d: int, alphabet_size: int) -> Pattern:
    m = punctured_size(ell, d)
    if not 0 <= key < alphabet_size ** m:
        raise ValueError("key out of range for this pattern shape")
    values = []
    for _ in range(m):
        key, r = divmod(key, alphabet_size)
        values.append(r)
    return Pattern(ell, d, alphabet_size, tuple(reversed(values)))


def restrict_pattern(p: Pattern, ell: int) -> Pattern:
    """Restriction of a pattern to the smaller punctured ball V_0^0(ell)."""
    if ell > p.radius:
        raise ValueError("cannot restrict to a larger radius")
    full = p.as_dict()
    return Pattern(ell, p.dim, p.alphabet_size,
                   tuple(full[tuple(int(c) for c in o)] for o in offsets(ell, p.dim)))


def shell_values(p: Pattern) -> tuple[int, ...]:
    full = p.as_dict()
    return tuple(full[tuple(int(c) for c in o)] for o in shell_offsets(p.radius, p.dim))


def extend_pattern(p: Pattern, v: Sequence[int]) -> Pattern:
    """Concatenate a radius ell-1 pattern with shell values on the sphere of radius ell."""
    ell = p.radius + 1
    shell_off = shell_offsets(ell, p.dim)
    if len(v) != len(shell_off):
        raise ValueError(f"shell of radius {ell} needs {len(shell_off)} values, got {len(v)}")
    full = p.as_dict()
    full.update({tuple(int(c) for c in o): int(x) for o, x in zip(shell_off, v)})
    return Pattern(ell, p.dim, p.alphabet_size,
                   tuple(full[tuple(int(c) for c in o)] for o in offsets(ell, p.dim)))


def all_shell_values(ell: int, d: int, alphabet_size: int) -> Iterable[tuple[int, ...]]:
    return product(range(alphabet_size), repeat=shell_size(ell, d))


# ---------------------------------------------------------------------------
# security region


@dataclass(frozen=True)
class SecurityRegion:
    window: Window
    margin: int
    sites: np.ndarray = field(repr=False)
    periodic: bool = False

    @property
    def size(self) -> int:
        return int(len(self.sites))

    def __contains__(self, i: int) -> bool:
        return bool(np.isin(i, self.sites))


def security_radius(n_size: int, d: int) -> float:
    """k(n) = (log |Lambda_n|)^(1/(2d))."""
    if n_size < 2:
        raise ValueError("window must contain at least two sites")
    return math.log(n_size) ** (1.0 / (2 * d))


def interior_sites(window: Window, margin: int) -> np.ndarray:
    if any(e <= 2 * margin for e in window.extents):
        return np.empty(0, dtype=np.int64)
    grids = np.meshgrid(*[np.arange(margin, e - margin) for e in window.extents], indexing="ij")
    return np.ravel_multi_index(tuple(g.reshape(-1) for g in grids), window.extents).astype(np.int64)


def security_region(window: Window, n_size: int | None = None, boundary: str = "free",
                    margin: int | None = None) -> SecurityRegion:
    """Sites whose radius-m ball lies inside the window, m = ceil(k(n)).

    ``margin`` overrides the computed m. Under periodic boundaries every site
    qualifies.
    """
    n_size = window.size if n_size is None else n_size
    m = math.ceil(security_radius(n_size, window.dim)) if margin is None else int(margin)
    if boundary == "periodic":
        return SecurityRegion(window, m, np.arange(window.size, dtype=np.int64), periodic=True)
    sites = interior_sites(window, m)
    if sites.size == 0:
        raise LatticeError("window too small for margin")
    return SecurityRegion(window, m, sites)


# ---------------------------------------------------------------------------
# vectorised pattern extraction


def pattern_matrix(config: Configuration, sites: np.ndarray, ell: int,
                   periodic: bool | None = None) -> np.ndarray:
    """Row r holds the radius-ell pattern around ``sites[r]`` (canonical column order).

    Non-periodic callers must only pass sites whose ball fits in the window.
    """
    periodic = config.boundary == "periodic" if periodic is None else periodic
    sites = np.asarray(sites, dtype=np.int64)
    coords = np.unravel_index(sites, config.window.extents)
    off = offsets(ell, config.dim)
    out = np.empty((len(sites), len(off)), dtype=np.int8)
    for col, o in enumerate(off):
        idx = []
        for axis, (c, k) in enumerate(zip(coords, o)):
            shifted = c + k
            if periodic:
                shifted = shifted % config.window.extents[axis]
            elif shifted.size and (shifted.min() < 0 or shifted.max() >= config.window.extents[axis]):
                raise LatticeError("pattern exceeds window")
            idx.append(shifted)
        out[:, col] = config.symbols[tuple(idx)]
    return out


def keys_fit_int64(alphabet_size: int, ncols: int) -> bool:
    return alphabet_size ** ncols < 2 ** 63


def matrix_keys(matrix: np.ndarray, alphabet_size: int) -> np.ndarray:
    """pattern_key for every row; int64 when it fits, Python ints otherwise."""
    n, m = matrix.shape
    if keys_fit_int64(alphabet_size, m):
        keys = np.zeros(n, dtype=np.int64)
        for col in range(m):
            keys = keys * alphabet_size + matrix[:, col]
        return keys
    keys = np.zeros(n, dtype=object)
    for col in range(m):
        keys = keys * alphabet_size + matrix[:, col].astype(object)
    return keys
