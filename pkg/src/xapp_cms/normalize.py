"""KPI to utility conversion by z-score normalization."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import ConflictTable, format_value
from .errors import (ConfigError, DegenerateDistribution, GridMismatch, ParseError, SchemaError,
                     WeightError)
from .model import KpiDef, ParamId, XAppId

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ZScoreTransform:
    mean: float
    stddev: float

    def __post_init__(self):
        if not self.stddev > 0:
            raise DegenerateDistribution(f"stddev must be > 0, got {self.stddev}")

    def __call__(self, x):
        if np.ndim(x):
            return (np.asarray(x, dtype=float) - self.mean) / self.stddev
        return (float(x) - self.mean) / self.stddev

    def inverse(self, z):
        if np.ndim(z):
            return np.asarray(z, dtype=float) * self.stddev + self.mean
        return float(z) * self.stddev + self.mean


def fit_zscore(samples: Sequence[float]) -> ZScoreTransform:
    """Fit mean and population standard deviation."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise DegenerateDistribution(f"need at least 2 samples, got {x.size}")
    mean = float(np.mean(x))
    std = float(np.std(x))
    # a constant column can leave rounding residue in the variance
    scale = float(np.max(np.abs(x)))
    if std == 0.0 or std <= 1e-12 * scale:
        raise DegenerateDistribution("samples have zero variance")
    return ZScoreTransform(mean, std)


@dataclass(frozen=True, eq=False)
class UtilityCurve:
    """Normalized utility of one xApp across a sweep of one parameter.

    ``label`` is the KPI the curve came from, or the xApp id for a combined
    curve.
    """

    xapp: XAppId
    param: ParamId
    grid: np.ndarray
    values: np.ndarray
    threshold: float
    delta: int = 0
    label: str = ""

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "threshold", float(self.threshold))
        if not self.label:
            object.__setattr__(self, "label", self.xapp)
        if grid.ndim != 1 or grid.shape != values.shape:
            raise GridMismatch(f"grid has {grid.shape} points but values have {values.shape}")
        if grid.size < 2:
            raise GridMismatch("a utility curve needs at least 2 grid points")
        if np.any(np.diff(grid) <= 0):
            raise GridMismatch("grid is not strictly ascending")
        if self.delta not in (0, 1):
            raise ConfigError(f"delta must be 0 or 1, got {self.delta!r}")

    def __len__(self) -> int:
        return self.grid.size

    def satisfied(self) -> np.ndarray:
        if self.delta == 1:
            return self.values <= self.threshold
        return self.values >= self.threshold

    def __eq__(self, other):
        if not isinstance(other, UtilityCurve):
            return NotImplemented
        return (self.xapp, self.param, self.threshold, self.delta, self.label) == \
            (other.xapp, other.param, other.threshold, other.delta, other.label) and \
            np.array_equal(self.grid, other.grid) and np.array_equal(self.values, other.values)

    __hash__ = None


def utility_curve(table: ConflictTable, kpi: KpiDef,
                  bounds: tuple[float, float] | None = None) -> UtilityCurve:
    """Z-score one KPI column of a table and its QoS threshold with the same fit.

    ``bounds`` restricts the fitting window (and the returned grid) to a
    sub-range of the swept parameter.
    """
    if kpi.id not in table.kpis:
        raise ConfigError(f"KPI {kpi.id} is not a column of the {table.xapp} table")
    if bounds is not None:
        table = table.restrict(*bounds)
    raw = table.kpis[kpi.id]
    transform = fit_zscore(raw)
    return UtilityCurve(table.xapp, table.swept_param, table.grid, transform(raw),
                        transform(kpi.qos_threshold), kpi.delta, kpi.id)


def combine_kpis(curves: Sequence[UtilityCurve], weights: Sequence[float]) -> UtilityCurve:
    """Pointwise weighted average of several KPI utilities of one xApp."""
    if not curves:
        raise ConfigError("nothing to combine")
    if len(weights) != len(curves):
        raise WeightError(f"{len(weights)} weights for {len(curves)} curves")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise WeightError("weights must be non-negative")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise WeightError(f"weights sum to {float(w.sum())}, expected 1")
    first = curves[0]
    for c in curves[1:]:
        if c.xapp != first.xapp or c.param != first.param:
            raise GridMismatch(f"cannot combine {c.xapp}/{c.param} with {first.xapp}/{first.param}")
        if not np.array_equal(c.grid, first.grid):
            raise GridMismatch(f"grid of {c.label} differs from grid of {first.label}")
        if c.delta != first.delta:
            raise ConfigError(f"mixed optimization directions for {first.xapp}")
    if len(curves) == 1:
        return curves[0]
    values = sum(wi * c.values for wi, c in zip(w, curves))
    threshold = float(sum(wi * c.threshold for wi, c in zip(w, curves)))
    return UtilityCurve(first.xapp, first.param, first.grid, values, threshold,
                        first.delta, first.xapp)


def xapp_utility(table: ConflictTable, kpis: Sequence[KpiDef],
                 bounds: tuple[float, float] | None = None) -> UtilityCurve | None:
    """Utility of one xApp from all its KPIs, dropping constant ones.

    Constant KPI columns carry no preference and are skipped with a warning;
    the remaining KPI weights are renormalized. Returns ``None`` when nothing
    is left.
    """
    curves, weights = [], []
    for kpi in kpis:
        try:
            curves.append(utility_curve(table, kpi, bounds))
        except DegenerateDistribution:
            log.warning("KPI %s of %s is constant over %s; excluded", kpi.id, table.xapp,
                        table.swept_param)
            continue
        weights.append(kpi.weight_in_xapp)
    if not curves:
        return None
    total = sum(weights)
    if total <= 0:
        return None
    if len(curves) == 1:
        return curves[0]
    return combine_kpis(curves, [w / total for w in weights])


# curve files: conflict-table layout with one ``z_<label>`` column per curve
CURVE_PREFIX = "z_"


def dumps_curves(curves: Sequence[UtilityCurve]) -> str:
    if not curves:
        raise ConfigError("no curves to write")
    first = curves[0]
    for c in curves[1:]:
        if c.param != first.param or not np.array_equal(c.grid, first.grid):
            raise GridMismatch(f"curve {c.label} is not on the grid of {first.label}")
    names = [CURVE_PREFIX + c.label for c in curves]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate curve labels {names}")
    buf = io.StringIO()
    buf.write(f"# swept_param: {first.param}\n")
    for name, c in zip(names, curves):
        buf.write(f"# xapp.{name}: {c.xapp}\n")
        buf.write(f"# threshold.{name}: {format_value(c.threshold)}\n")
        buf.write(f"# delta.{name}: {c.delta}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([first.param, *names])
    for i, g in enumerate(first.grid):
        writer.writerow([format_value(g), *(format_value(c.values[i]) for c in curves)])
    return buf.getvalue()


def save_curves(curves: Sequence[UtilityCurve], path: str | Path) -> None:
    Path(path).write_text(dumps_curves(curves), encoding="utf-8")


def loads_curves(text: str) -> list[UtilityCurve]:
    meta: dict[str, str] = {}
    rows: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        rows.append((lineno, next(csv.reader([stripped]))))
    if "swept_param" not in meta:
        raise SchemaError("curve file lacks the swept_param line", missing=["swept_param"])
    if len(rows) < 3:
        raise ParseError("curve file needs a header and at least 2 rows")
    header = [h.strip() for h in rows[0][1]]
    param = meta["swept_param"]
    if not header or header[0] != param:
        raise SchemaError(f"first column must be {param}", missing=[param])
    names = header[1:]
    if not names:
        raise SchemaError("curve file has no curve columns")
    missing = [f"{k}.{n}" for n in names for k in ("xapp", "threshold") if f"{k}.{n}" not in meta]
    if missing:
        raise SchemaError(f"missing curve metadata {missing}", missing=missing)
    data = np.empty((len(rows) - 1, len(header)))
    for r, (lineno, cells) in enumerate(rows[1:]):
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", row=lineno)
        for c, cell in enumerate(cells):
            try:
                data[r, c] = float(cell)
            except ValueError:
                raise ParseError(f"not a number: {cell!r}", row=lineno, column=header[c]) from None
    curves = []
    for j, name in enumerate(names, start=1):
        try:
            threshold = float(meta[f"threshold.{name}"])
            delta = int(meta.get(f"delta.{name}", "0"))
        except ValueError:
            raise ParseError(f"bad threshold/delta metadata for {name}") from None
        label = name[len(CURVE_PREFIX):] if name.startswith(CURVE_PREFIX) else name
        curves.append(UtilityCurve(meta[f"xapp.{name}"], param, data[:, 0], data[:, j],
                                   threshold, delta, label))
    return curves


def load_curves(path: str | Path) -> list[UtilityCurve]:
    return loads_curves(Path(path).read_text(encoding="utf-8"))
