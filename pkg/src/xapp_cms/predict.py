"""KPI predictors.

Polynomial least-squares regression on z-scored KPIs, its fit metrics, and the
predictor back-ends the control loop can query for KPI values: the analytic
Gaussian model, linear interpolation in conflict tables, or fitted
regressors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Mapping, Protocol, Sequence

import numpy as np

from .dataset import ConflictTable
from .errors import ConfigError, MissingParam, OracleError, RankDeficient
from .model import GaussianKpiModel, KpiId, ParamId, eval_kpi
from .normalize import ZScoreTransform, fit_zscore

MAX_DEGREE = 6
DEFAULT_DEGREE = 4


def monomial_basis(n_inputs: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Exponent vectors of all monomials of total degree <= ``degree``."""
    basis = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(n_inputs), d):
            exps = [0] * n_inputs
            for i in combo:
                exps[i] += 1
            basis.append(tuple(exps))
    return tuple(basis)


@dataclass(frozen=True)
class FitMetrics:
    evs: float
    r2: float
    mse: float


@dataclass(frozen=True)
class PolyRegressor:
    """Polynomial in the (centered, scaled) inputs predicting a z-scored KPI.

    ``transform`` maps raw KPI values to the z-units the model predicts;
    ``context`` records the fixed ICP values of the training table.
    """

    degree: int
    coefficients: tuple[float, ...]
    input_ids: tuple[ParamId, ...]
    target: KpiId
    center: tuple[float, ...]
    scale: tuple[float, ...]
    transform: ZScoreTransform
    context: Mapping[ParamId, float] = field(default_factory=dict)

    def __post_init__(self):
        basis = monomial_basis(len(self.input_ids), self.degree)
        if len(self.coefficients) != len(basis):
            raise ConfigError(f"{len(self.coefficients)} coefficients for a basis of {len(basis)}")

    @property
    def exponents(self) -> tuple[tuple[int, ...], ...]:
        return monomial_basis(len(self.input_ids), self.degree)

    def design(self, inputs: np.ndarray) -> np.ndarray:
        x = (np.atleast_2d(inputs) - np.asarray(self.center)) / np.asarray(self.scale)
        return _design(x, self.exponents)

    def raw(self, assignment: Mapping[ParamId, float]) -> float:
        return float(self.transform.inverse(predict(self, assignment)))


def _design(x: np.ndarray, exponents) -> np.ndarray:
    cols = [np.prod(x ** np.asarray(e), axis=1) for e in exponents]
    return np.column_stack(cols)


def _inputs_matrix(table: ConflictTable, input_ids: Sequence[ParamId]) -> np.ndarray:
    try:
        return np.column_stack([table.params[p] for p in input_ids])
    except KeyError as exc:
        raise MissingParam(f"table has no column for input {exc.args[0]}") from None


def fit(table: ConflictTable, kpi: KpiId, degree: int = DEFAULT_DEGREE,
        inputs: Sequence[ParamId] | None = None) -> PolyRegressor:
    """Least-squares polynomial fit of one z-scored KPI column.

    Raises:
        DegenerateDistribution: the KPI column is constant.
        RankDeficient: too few rows or a singular design matrix.
    """
    if not 1 <= degree <= MAX_DEGREE:
        raise ConfigError(f"degree must lie in [1, {MAX_DEGREE}], got {degree}")
    if kpi not in table.kpis:
        raise ConfigError(f"KPI {kpi} is not a column of the {table.xapp} table")
    input_ids = tuple(inputs) if inputs is not None else (table.swept_param,)
    transform = fit_zscore(table.kpis[kpi])
    y = transform(table.kpis[kpi])
    x = _inputs_matrix(table, input_ids)
    lo, hi = x.min(axis=0), x.max(axis=0)
    center = (lo + hi) / 2.0
    scale = np.where(hi > lo, (hi - lo) / 2.0, 1.0)
    exponents = monomial_basis(len(input_ids), degree)
    if len(y) < len(exponents):
        raise RankDeficient(f"{len(y)} rows cannot determine {len(exponents)} coefficients")
    a = _design((x - center) / scale, exponents)
    coef, _, rank, sv = np.linalg.lstsq(a, y, rcond=None)
    if rank < a.shape[1] or sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficient(f"design matrix has rank {rank} < {a.shape[1]}")
    context = {p: v for p, v in table.fixed.items() if p not in input_ids}
    return PolyRegressor(degree, tuple(float(c) for c in coef), input_ids, kpi,
                         tuple(float(c) for c in center), tuple(float(s) for s in scale),
                         transform, context)


def predict(reg: PolyRegressor, assignment: Mapping[ParamId, float]) -> float:
    """Predicted KPI value in z-units."""
    try:
        row = np.array([[float(assignment[p]) for p in reg.input_ids]])
    except KeyError as exc:
        raise MissingParam(f"parameter {exc.args[0]} is not assigned") from None
    return float((reg.design(row) @ np.asarray(reg.coefficients))[0])


def predict_many(reg: PolyRegressor, inputs: np.ndarray) -> np.ndarray:
    rows = np.asarray(inputs, dtype=float).reshape(-1, len(reg.input_ids))
    return reg.design(rows) @ np.asarray(reg.coefficients)


def metrics(target: np.ndarray, predicted: np.ndarray) -> FitMetrics:
    target = np.asarray(target, dtype=float)
    resid = target - np.asarray(predicted, dtype=float)
    var_t = float(np.var(target))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    evs = 1.0 - float(np.var(resid)) / var_t
    r2 = 1.0 - ss_res / ss_tot
    return FitMetrics(evs=evs, r2=r2, mse=ss_res / target.size)


def evaluate(reg: PolyRegressor, table: ConflictTable) -> FitMetrics:
    """EVS, R-squared and MSE of ``reg`` on a table, all in z-units."""
    if reg.target not in table.kpis:
        raise ConfigError(f"table lacks target KPI {reg.target}")
    y = reg.transform(table.kpis[reg.target])
    yhat = predict_many(reg, _inputs_matrix(table, reg.input_ids))
    return metrics(y, yhat)


def split_table(table: ConflictTable, holdout_every: int = 5) -> tuple[ConflictTable, ConflictTable]:
    """Deterministic 80/20 split: every ``holdout_every``-th row is held out."""
    idx = np.arange(len(table))
    test = idx % holdout_every == holdout_every - 1

    def part(mask):
        return ConflictTable(table.xapp, table.swept_param,
                             {p: v[mask] for p, v in table.params.items()},
                             {k: v[mask] for k, v in table.kpis.items()})

    return part(~test), part(test)


class Predictor(Protocol):
    """Source of raw KPI values for the control loop and the mitigator."""

    def sweep(self, kpi: KpiId, param: ParamId, grid: np.ndarray,
              state: Mapping[ParamId, float]) -> np.ndarray: ...

    def value(self, kpi: KpiId, state: Mapping[ParamId, float]) -> float: ...


class AnalyticPredictor:
    def __init__(self, models: Mapping[KpiId, GaussianKpiModel]):
        self.models = dict(models)

    def _model(self, kpi: KpiId) -> GaussianKpiModel:
        try:
            return self.models[kpi]
        except KeyError:
            raise OracleError(f"no analytic model for {kpi}") from None

    def sweep(self, kpi, param, grid, state):
        model = self._model(kpi)
        assignment = dict(state)
        out = np.empty(len(grid))
        for i, g in enumerate(grid):
            assignment[param] = float(g)
            out[i] = eval_kpi(model, assignment)
        return out

    def value(self, kpi, state):
        return eval_kpi(self._model(kpi), state)


def _matches(context: Mapping[ParamId, float], state: Mapping[ParamId, float]) -> bool:
    return all(p in state and abs(float(state[p]) - v) <= 1e-9 for p, v in context.items())


class TablePredictor:
    """Linear interpolation in conflict tables.

    ``sweep`` uses the table of the KPI whose swept parameter is ``param``.
    ``value`` prefers a table whose fixed ICPs match ``state`` and otherwise
    falls back to the first table holding the KPI.
    """

    def __init__(self, tables: Sequence[ConflictTable]):
        self.tables = list(tables)

    def _for(self, kpi, param) -> ConflictTable:
        for t in self.tables:
            if kpi in t.kpis and t.swept_param == param:
                return t
        raise OracleError(f"no table for {kpi} sweeping {param}")

    def sweep(self, kpi, param, grid, state):
        table = self._for(kpi, param)
        grid = np.asarray(grid, dtype=float)
        if grid.min() < table.grid[0] - 1e-9 or grid.max() > table.grid[-1] + 1e-9:
            raise OracleError(f"grid [{grid.min()}, {grid.max()}] leaves the {kpi} table range "
                              f"[{table.grid[0]}, {table.grid[-1]}]")
        return np.interp(grid, table.grid, table.kpis[kpi])

    def value(self, kpi, state):
        candidates = [t for t in self.tables if kpi in t.kpis and t.swept_param in state]
        if not candidates:
            raise OracleError(f"no table can answer {kpi} at the current state")
        exact = [t for t in candidates if _matches(t.fixed, state)]
        table = (exact or candidates)[0]
        x = float(state[table.swept_param])
        return float(np.interp(x, table.grid, table.kpis[kpi]))


class RegressorPredictor:
    def __init__(self, regressors: Sequence[PolyRegressor]):
        self.regressors = list(regressors)

    @classmethod
    def from_tables(cls, tables: Sequence[ConflictTable], degree: int = DEFAULT_DEGREE):
        return cls([fit(t, k, degree) for t in tables for k in t.kpis])

    def sweep(self, kpi, param, grid, state):
        for reg in self.regressors:
            if reg.target == kpi and reg.input_ids == (param,):
                z = predict_many(reg, np.asarray(grid, dtype=float))
                return reg.transform.inverse(z)
        raise OracleError(f"no regressor for {kpi} over {param}")

    def value(self, kpi, state):
        candidates = [r for r in self.regressors
                      if r.target == kpi and all(p in state for p in r.input_ids)]
        if not candidates:
            raise OracleError(f"no regressor can answer {kpi} at the current state")
        exact = [r for r in candidates if _matches(r.context, state)]
        return (exact or candidates)[0].raw(state)
