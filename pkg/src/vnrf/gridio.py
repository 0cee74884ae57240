"""Reader and writer for the VNRF1 text grid format.

    VNRF1
    d=2 dims=4x5 alphabet=2 boundary=periodic
    0 1 1 0 1
    ...

Symbols are written row-major, one lattice row per line (a single line when d=1).
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .lattice import Configuration, Window

MAGIC = "VNRF1"
_HEADER = re.compile(
    r"^d=(?P<d>\d+) dims=(?P<dims>\d+(?:x\d+)*) alphabet=(?P<a>\d+) boundary=(?P<b>free|periodic)$")


class GridFormatError(ValueError):
    pass


def format_grid(config: Configuration) -> str:
    if config.boundary not in ("free", "periodic"):
        raise GridFormatError("VNRF1 stores only free or periodic boundaries")
    lines = [MAGIC,
             f"d={config.dim} dims={config.window.label()} alphabet={config.alphabet_size} "
             f"boundary={config.boundary}"]
    rows = config.symbols.reshape(-1, config.window.extents[-1])
    lines.extend(" ".join(map(str, row.tolist())) for row in rows)
    return "\n".join(lines) + "\n"


def write_grid(path: str | Path, config: Configuration) -> None:
    Path(path).write_text(format_grid(config))


def parse_grid(text: str, source: str = "<grid>") -> Configuration:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise GridFormatError(f"{source}:1: expected '{MAGIC}'")
    if len(lines) < 2:
        raise GridFormatError(f"{source}:2: missing header line")
    m = _HEADER.match(lines[1].strip())
    if m is None:
        raise GridFormatError(f"{source}:2: malformed header {lines[1]!r}")
    d = int(m["d"])
    window = Window.parse(m["dims"])
    if window.dim != d:
        raise GridFormatError(f"{source}:2: d={d} but dims has {window.dim} axes")
    alphabet = int(m["a"])
    n_rows = window.size // window.extents[-1]
    body = lines[2:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != n_rows:
        raise GridFormatError(f"{source}: expected {n_rows} data rows, found {len(body)}")
    rows = []
    for k, ln in enumerate(body, start=3):
        try:
            row = [int(tok) for tok in ln.split()]
        except ValueError:
            raise GridFormatError(f"{source}:{k}: non-integer symbol") from None
        if len(row) != window.extents[-1]:
            raise GridFormatError(f"{source}:{k}: expected {window.extents[-1]} symbols, got {len(row)}")
        if any(not 0 <= s < alphabet for s in row):
            raise GridFormatError(f"{source}:{k}: symbol outside alphabet 0..{alphabet - 1}")
        rows.append(row)
    symbols = np.array(rows, dtype=np.int8).reshape(window.extents)
    return Configuration(window, symbols, alphabet, m["b"])


def read_grid(path: str | Path) -> Configuration:
    return parse_grid(Path(path).read_text(), str(path))
