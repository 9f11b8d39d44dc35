"""Conflict mitigation over one contested parameter.

All solvers scan the same ascending grid of the optimal configuration range
and break ties in favour of the earliest grid point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .detect import ConflictCase
from .errors import ConfigError, EmptyInput, GridMismatch, PolicyError, WeightError
from .model import XAppId
from .normalize import UtilityCurve

DEFAULT_ZETA = 1e3
DEFAULT_BIG_M = 10.0
WEIGHT_TOL = 1e-9


class Method(str, Enum):
    QACM = "qacm"
    QACM_HEURISTIC = "qacm-heuristic"
    NSWF = "nswf"
    EG = "eg"


@dataclass(frozen=True)
class PolicyConfig:
    """Operator policy for priority weights.

    ``ratios`` are unnormalized per-xApp priorities; xApps without an entry get
    ``default``. An empty policy means equal weights.
    """

    ratios: Mapping[XAppId, float] = field(default_factory=dict)
    default: float | None = None


def assign_weights(case: ConflictCase, policy: PolicyConfig) -> dict[XAppId, float]:
    if not policy.ratios and policy.default is None:
        n = len(case.involved)
        return {x: 1.0 / n for x in case.involved}
    raw = {}
    for x in case.involved:
        if x in policy.ratios:
            raw[x] = float(policy.ratios[x])
        elif policy.default is not None:
            raw[x] = float(policy.default)
        else:
            raise PolicyError(f"policy assigns no weight to {x} and declares no default")
        if raw[x] < 0 or not math.isfinite(raw[x]):
            raise PolicyError(f"weight ratio of {x} must be a finite non-negative number")
    total = sum(raw.values())
    if total <= 0:
        raise WeightError("weights sum to 0", origin="mitigate")
    return {x: v / total for x, v in raw.items()}


def optimal_range(per_xapp_ranges: Mapping[XAppId, tuple[float, float]]) -> tuple[float, float]:
    """Smallest interval covering every involved xApp's preferred range."""
    if len(per_xapp_ranges) < 2:
        raise EmptyInput(f"need ranges from at least 2 xApps, got {len(per_xapp_ranges)}")
    for x, (lo, hi) in per_xapp_ranges.items():
        if lo > hi:
            raise ConfigError(f"range of {x} has min {lo} > max {hi}")
    return (min(lo for lo, _ in per_xapp_ranges.values()),
            max(hi for _, hi in per_xapp_ranges.values()))


@dataclass(frozen=True)
class MitigationInput:
    case: ConflictCase
    curves: Mapping[XAppId, UtilityCurve]
    weights: Mapping[XAppId, float]
    zeta: float = DEFAULT_ZETA
    big_m: float = DEFAULT_BIG_M

    def __post_init__(self):
        if set(self.curves) != set(self.case.involved):
            raise ConfigError(f"curves for {sorted(self.curves)} do not match the involved "
                              f"xApps {list(self.case.involved)}")
        if len(self.curves) < 2:
            raise EmptyInput("mitigation needs at least two xApps")
        first = self.curves[self.case.involved[0]]
        for x in self.case.involved[1:]:
            c = self.curves[x]
            if c.param != self.case.param or first.param != self.case.param:
                raise GridMismatch(f"curve of {x} is over {c.param}, conflict is over {self.case.param}")
            if not np.array_equal(c.grid, first.grid):
                raise GridMismatch(f"grid of {x} differs from grid of {self.case.involved[0]}")
        if not self.zeta > 0 or not self.big_m > 0:
            raise ConfigError("zeta and big_m must be positive")

    @property
    def xapps(self) -> tuple[XAppId, ...]:
        return self.case.involved

    @property
    def grid(self) -> np.ndarray:
        return self.curves[self.xapps[0]].grid

    def weight_vector(self) -> list[float]:
        missing = [x for x in self.xapps if x not in self.weights]
        if missing:
            raise WeightError(f"no weight for {missing}", origin="mitigate")
        w = [float(self.weights[x]) for x in self.xapps]
        if any(v < 0 for v in w):
            raise WeightError("weights must be non-negative", origin="mitigate")
        total = sum(w)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise WeightError(f"weights sum to {total}, expected 1", origin="mitigate")
        return w


@dataclass(frozen=True)
class XAppOutcome:
    xapp: XAppId
    utility: float
    threshold: float
    delta: int
    distance: float
    satisfied: int


@dataclass(frozen=True)
class MitigationResult:
    p_opt: float
    index: int
    outcomes: tuple[XAppOutcome, ...]
    objective: float
    method: Method
    param: str = ""
    bounds: tuple[float, float] = (math.nan, math.nan)

    @property
    def satisfied_count(self) -> int:
        return sum(o.satisfied for o in self.outcomes)

    def outcome(self, xapp: XAppId) -> XAppOutcome:
        for o in self.outcomes:
            if o.xapp == xapp:
                return o
        raise KeyError(xapp)

    def to_record(self) -> dict:
        return {
            "method": self.method.value,
            "param": self.param,
            "p_opt": self.p_opt,
            "index": self.index,
            "objective": self.objective,
            "bounds": list(self.bounds),
            "satisfied_count": self.satisfied_count,
            "xapps": [{"xapp": o.xapp, "utility": o.utility, "threshold": o.threshold,
                       "delta": o.delta, "distance": o.distance, "satisfied": o.satisfied}
                      for o in self.outcomes],
        }


def _shortfall(u: float, q: float, delta: int) -> tuple[float, int]:
    """Distance from the threshold and satisfaction flag, by direction."""
    if delta == 0:
        if u < q:
            return q - u, 0
        return 0.0, 1
    if u > q:
        return u - q, 0
    return 0.0, 1


def _outcomes_at(inp: MitigationInput, index: int) -> tuple[XAppOutcome, ...]:
    out = []
    for x in inp.xapps:
        c = inp.curves[x]
        u = float(c.values[index])
        d, s = _shortfall(u, c.threshold, c.delta)
        out.append(XAppOutcome(x, u, c.threshold, c.delta, d, s))
    return tuple(out)


def _result(inp: MitigationInput, index: int, objective: float, method: Method,
            outcomes: tuple[XAppOutcome, ...] | None = None) -> MitigationResult:
    grid = inp.grid
    return MitigationResult(float(grid[index]), int(index),
                            outcomes if outcomes is not None else _outcomes_at(inp, index),
                            float(objective), method, inp.case.param,
                            (float(grid[0]), float(grid[-1])))


def nswf(inp: MitigationInput, shift: bool = True) -> MitigationResult:
    """Maximize the product of the involved xApps' utilities; weights are ignored.

    With ``shift`` each utility is offset by its minimum over the grid first,
    so that every factor is non-negative.
    """
    product = np.ones(len(inp.grid))
    for x in inp.xapps:
        u = inp.curves[x].values
        product = product * (u - u.min() if shift else u)
    index = int(np.argmax(product))
    return _result(inp, index, float(product[index]), Method.NSWF)


def eg(inp: MitigationInput) -> MitigationResult:
    """Maximize the priority-weighted sum of utilities."""
    w = inp.weight_vector()
    total = np.zeros(len(inp.grid))
    for wi, x in zip(w, inp.xapps):
        total = total + wi * inp.curves[x].values
    index = int(np.argmax(total))
    return _result(inp, index, float(total[index]), Method.EG)


def _check_big_m(inp: MitigationInput) -> None:
    bound = max(float(np.max(np.abs(c.values))) + abs(c.threshold) for c in inp.curves.values())
    if not inp.big_m > bound:
        raise ConfigError(f"big_m={inp.big_m} must exceed max |U| + |q'| = {bound:.6g}")


def qacm_exact(inp: MitigationInput) -> MitigationResult:
    """Exact solution of the big-M program by enumerating the grid.

    For a fixed value of the parameter the remaining variables decouple: each
    distance takes its smallest feasible value and each satisfaction indicator
    is 1 exactly when the threshold constraint admits it, since the objective
    strictly rewards satisfied xApps. The parameter value with the lowest
    objective wins; ``argmin`` keeps the first of equal minima.
    """
    w = inp.weight_vector()
    _check_big_m(inp)
    m = inp.big_m
    n_grid = len(inp.grid)
    weighted = np.zeros(n_grid)
    satisfied = np.zeros(n_grid, dtype=np.int64)
    dist_rows, sat_rows = [], []
    for wi, x in zip(w, inp.xapps):
        c = inp.curves[x]
        u, q, delta = c.values, c.threshold, c.delta
        slack = (q - u) * (1 - delta) + (u - q) * delta
        d = np.maximum(slack, 0.0)
        # threshold constraint oriented by delta: s = 1 needs the bound itself,
        # s = 0 relaxes it by M
        if delta == 0:
            feasible_on = u >= q
            feasible_off = u >= q - m
        else:
            feasible_on = u <= q
            feasible_off = u <= q + m
        if not feasible_off.all():
            raise ConfigError(f"big_m={m} leaves s=0 infeasible for {x}")
        s = feasible_on.astype(np.int64)
        weighted = weighted + wi * d * inp.zeta
        satisfied = satisfied + s
        dist_rows.append(d)
        sat_rows.append(s)
    if satisfied.max() > len(inp.xapps):
        raise AssertionError("satisfaction count exceeds the number of xApps")
    objective = weighted - satisfied.astype(float) ** 2
    index = int(np.argmin(objective))
    outcomes = tuple(
        XAppOutcome(x, float(inp.curves[x].values[index]), inp.curves[x].threshold,
                    inp.curves[x].delta, float(dist_rows[i][index]), int(sat_rows[i][index]))
        for i, x in enumerate(inp.xapps))
    return _result(inp, index, float(objective[index]), Method.QACM, outcomes)


def qacm_heuristic(inp: MitigationInput) -> MitigationResult:
    """Ascending scan with per-xApp distance/indicator updates (O(N * |X'|))."""
    w = inp.weight_vector()
    _check_big_m(inp)
    xapps = inp.xapps
    curves = [inp.curves[x] for x in xapps]
    values = [c.values.tolist() for c in curves]
    thresholds = [c.threshold for c in curves]
    deltas = [c.delta for c in curves]
    zeta = inp.zeta
    n = len(xapps)

    cost = [0.0] * n
    s = [0] * n
    d = [0.0] * n
    p_index = 0
    min_cost = math.inf
    best_d, best_s = list(d), list(s)
    for j in range(len(inp.grid)):
        for i in range(n):
            u = values[i][j]
            q = thresholds[i]
            if deltas[i] == 0:
                if u < q:
                    d[i] = q - u
                    s[i] = 0
                else:
                    d[i] = 0.0
                    s[i] = 1
            else:
                if u > q:
                    d[i] = u - q
                    s[i] = 0
                else:
                    d[i] = 0.0
                    s[i] = 1
            cost[i] = w[i] * d[i] * zeta
        f_cost = sum(cost) - sum(s) ** 2
        if min_cost > f_cost:
            min_cost = f_cost
            p_index = j
            best_d, best_s = list(d), list(s)

    outcomes = tuple(XAppOutcome(x, values[i][p_index], thresholds[i], deltas[i],
                                 best_d[i], best_s[i]) for i, x in enumerate(xapps))
    return _result(inp, p_index, float(min_cost), Method.QACM_HEURISTIC, outcomes)


SOLVERS = {
    Method.QACM: qacm_exact,
    Method.QACM_HEURISTIC: qacm_heuristic,
    Method.NSWF: nswf,
    Method.EG: eg,
}


def solve(inp: MitigationInput, method: Method | str, **kwargs) -> MitigationResult:
    return SOLVERS[Method(method)](inp, **kwargs)


def objective_from_outcomes(result: MitigationResult, weights: Sequence[float],
                            zeta: float = DEFAULT_ZETA) -> float:
    """Recompute the QACM objective from the per-xApp rows of a result."""
    total = 0.0
    for wi, o in zip(weights, result.outcomes):
        total = total + wi * o.distance * zeta
    return total - result.satisfied_count ** 2
