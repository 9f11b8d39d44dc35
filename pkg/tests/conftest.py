from __future__ import annotations

import numpy as np
import pytest

from xapp_cms.detect import ConflictCase
from xapp_cms.harness import builtin_tables
from xapp_cms.mitigate import MitigationInput
from xapp_cms.model import builtin_example_model
from xapp_cms.normalize import UtilityCurve

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record_criterion(number: int, name: str, passed: bool | None, detail: str = "") -> None:
    """Record one acceptance line; ``passed=None`` marks a skipped check."""
    ACCEPTANCE.setdefault(number, []).append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        for name, passed, detail in ACCEPTANCE[number]:
            status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
            line = f"criterion {number:>2} {status}  {name}"
            if detail:
                line += f"  [{detail}]"
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def example():
    return builtin_example_model()


@pytest.fixture(scope="session")
def specs(example):
    return {s.id: s for s in example[0]}


@pytest.fixture(scope="session")
def models(example):
    return example[1]


@pytest.fixture(scope="session")
def tables():
    return builtin_tables()


def make_input(values, thresholds, deltas, weights=None, grid=None, param="p"):
    """MitigationInput from raw arrays, one row of ``values`` per xApp."""
    values = [np.asarray(v, dtype=float) for v in values]
    n = len(values[0])
    grid = np.arange(n, dtype=float) if grid is None else np.asarray(grid, dtype=float)
    xapps = tuple(f"x{i + 1}" for i in range(len(values)))
    curves = {x: UtilityCurve(x, param, grid, v, q, d)
              for x, v, q, d in zip(xapps, values, thresholds, deltas)}
    if weights is None:
        weights = [1.0 / len(xapps)] * len(xapps)
    case = ConflictCase("direct", param, xapps, 0)
    return MitigationInput(case, curves, dict(zip(xapps, weights)))


def random_input(rng: np.random.Generator, n_xapps: int, n_grid: int) -> MitigationInput:
    """Random curves with ties and boundary hits mixed in."""
    values, thresholds, deltas = [], [], []
    for _ in range(n_xapps):
        kind = rng.integers(3)
        if kind == 0:
            v = rng.uniform(-3, 3, n_grid)
        elif kind == 1:
            # coarse plateaus produce exact ties in the objective
            v = np.round(rng.uniform(-3, 3, n_grid) * 2) / 2
        else:
            center = rng.uniform(0, n_grid)
            width = rng.uniform(1, max(2.0, n_grid / 2))
            v = 3 * np.exp(-((np.arange(n_grid) - center) ** 2) / (2 * width ** 2)) - 1.5
        q = float(rng.choice(v)) if rng.random() < 0.3 else float(rng.uniform(-2, 2))
        values.append(v)
        thresholds.append(q)
        deltas.append(int(rng.integers(2)))
    raw = rng.uniform(0.05, 1.0, n_xapps)
    if rng.random() < 0.2:
        raw = np.ones(n_xapps)
    weights = list(raw / raw.sum())
    return make_input(values, thresholds, deltas, weights)
