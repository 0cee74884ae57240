"""Shared fixtures and the acceptance summary printed at the end of a run."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = (bool(passed), detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def model_file(tmp_path):
    """Write a model JSON and return its path."""
    import json

    def write(obj, name="model.json") -> Path:
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        return p

    return write
