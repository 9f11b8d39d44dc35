"""Conflict tables: generation from analytic models, file ingestion, persistence.

File layout (delimited text)::

    # xapp: x1
    # swept_param: p1
    # kpis: k1
    p1,p2,k1
    -60,30,11.8837562
    ...

Metadata lines start with ``#``. The header lists the swept parameter first,
then the other ICPs present in the table, then the KPI columns. Values are
written with 9 significant digits. Files from other sources can be adapted
with a column-mapping file (see :class:`ColumnMapping`).
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParseError, SchemaError, TableError
from .model import GaussianKpiModel, KpiId, ParamId, ParamRange, XAppId, XAppSpec, eval_kpi

_PARAM_RE = re.compile(r"^p\d+$")
SIG_DIGITS = 9


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ConflictTable:
    """Sampled ICP settings and resulting raw KPI values for one xApp.

    Only ``swept_param`` varies across rows; every other ICP column is
    constant.
    """

    xapp: XAppId
    swept_param: ParamId
    params: Mapping[ParamId, np.ndarray]
    kpis: Mapping[KpiId, np.ndarray]

    def __post_init__(self):
        params = {p: _frozen(v) for p, v in self.params.items()}
        kpis = {k: _frozen(v) for k, v in self.kpis.items()}
        if self.swept_param not in params:
            raise TableError(f"swept parameter {self.swept_param} has no column")
        # swept column first, the rest in given order
        params = {self.swept_param: params[self.swept_param],
                  **{p: v for p, v in params.items() if p != self.swept_param}}
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "kpis", kpis)
        n = len(params[self.swept_param])
        if n < 2:
            raise TableError("a conflict table needs at least 2 rows")
        if not kpis:
            raise TableError("a conflict table needs at least one KPI column")
        for name, col in {**params, **kpis}.items():
            if col.shape != (n,):
                raise TableError(f"column {name} has {col.shape} values, expected {n}")
        if np.any(np.diff(params[self.swept_param]) <= 0):
            raise TableError(f"swept column {self.swept_param} is not strictly increasing")
        for p, col in params.items():
            if p != self.swept_param and np.any(col != col[0]):
                raise TableError(f"fixed ICP {p} is not constant across rows")

    @property
    def grid(self) -> np.ndarray:
        return self.params[self.swept_param]

    @property
    def fixed(self) -> dict[ParamId, float]:
        return {p: float(v[0]) for p, v in self.params.items() if p != self.swept_param}

    @property
    def kpi_ids(self) -> tuple[KpiId, ...]:
        return tuple(self.kpis)

    def __len__(self) -> int:
        return len(self.grid)

    def column(self, name: str) -> np.ndarray:
        if name in self.params:
            return self.params[name]
        return self.kpis[name]

    def rows(self) -> Iterator[tuple[dict[ParamId, float], dict[KpiId, float]]]:
        for i in range(len(self)):
            yield ({p: float(v[i]) for p, v in self.params.items()},
                   {k: float(v[i]) for k, v in self.kpis.items()})

    def restrict(self, lo: float, hi: float) -> "ConflictTable":
        """Rows whose swept value lies in ``[lo, hi]``."""
        mask = (self.grid >= lo) & (self.grid <= hi)
        return ConflictTable(self.xapp, self.swept_param,
                             {p: v[mask] for p, v in self.params.items()},
                             {k: v[mask] for k, v in self.kpis.items()})

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConflictTable):
            return NotImplemented
        return (self.xapp == other.xapp and self.swept_param == other.swept_param
                and list(self.params) == list(other.params)
                and list(self.kpis) == list(other.kpis)
                and all(np.array_equal(self.params[p], other.params[p]) for p in self.params)
                and all(np.array_equal(self.kpis[k], other.kpis[k]) for k in self.kpis))

    __hash__ = None


def generate_table(spec: XAppSpec, models: Mapping[KpiId, GaussianKpiModel], swept: ParamId,
                   range_: ParamRange, fixed: Mapping[ParamId, float]) -> ConflictTable:
    """Sweep ``swept`` over ``range_`` and evaluate every KPI of ``spec``."""
    referenced: list[ParamId] = []
    for kpi in spec.kpis:
        if kpi.id not in models:
            raise ConfigError(f"no KPI model for {kpi.id}")
        for p in models[kpi.id].params:
            if p not in referenced:
                referenced.append(p)
    if swept not in referenced:
        raise ConfigError(f"{swept} does not influence any KPI of {spec.id}")

    grid = range_.grid()
    assignment = {p: float(fixed[p]) for p in referenced if p != swept and p in fixed}
    kpi_cols: dict[KpiId, list[float]] = {k.id: [] for k in spec.kpis}
    for value in grid:
        assignment[swept] = float(value)
        for kpi in spec.kpis:
            kpi_cols[kpi.id].append(eval_kpi(models[kpi.id], assignment))

    others = sorted((p for p in referenced if p != swept), key=_param_sort_key)
    params = {swept: grid, **{p: np.full(len(grid), assignment[p]) for p in others}}
    return ConflictTable(spec.id, swept, params, kpi_cols)


def _param_sort_key(p: str):
    m = re.match(r"^([A-Za-z_]*)(\d+)$", p)
    return (m.group(1), int(m.group(2))) if m else (p, -1)


def format_value(value: float) -> str:
    return format(float(value), f".{SIG_DIGITS}g")


def save_table(table: ConflictTable, path: str | Path) -> None:
    Path(path).write_text(dumps_table(table), encoding="utf-8")


def dumps_table(table: ConflictTable) -> str:
    buf = io.StringIO()
    buf.write(f"# xapp: {table.xapp}\n")
    buf.write(f"# swept_param: {table.swept_param}\n")
    buf.write(f"# kpis: {','.join(table.kpis)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    columns = list(table.params) + list(table.kpis)
    writer.writerow(columns)
    for i in range(len(table)):
        writer.writerow([format_value(table.column(c)[i]) for c in columns])
    return buf.getvalue()


@dataclass(frozen=True)
class ColumnMapping:
    """Adapter for conflict-table files produced elsewhere.

    ``rename`` maps file column names to ICP/KPI ids; ``xapp``,
    ``swept_param`` and ``kpis`` stand in for missing metadata lines.
    """

    rename: Mapping[str, str] = field(default_factory=dict)
    xapp: str | None = None
    swept_param: str | None = None
    kpis: tuple[str, ...] | None = None
    params: tuple[str, ...] | None = None

    @classmethod
    def load(cls, path: str | Path) -> "ColumnMapping":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"column mapping is not valid JSON: {exc.msg}", row=exc.lineno) from None
        kpis = raw.get("kpis")
        params = raw.get("params")
        return cls(rename=dict(raw.get("rename", {})), xapp=raw.get("xapp"),
                   swept_param=raw.get("swept_param"),
                   kpis=tuple(kpis) if kpis is not None else None,
                   params=tuple(params) if params is not None else None)


def load_table(path: str | Path, mapping: ColumnMapping | None = None,
               expected_kpis: Sequence[KpiId] | None = None) -> ConflictTable:
    """Read and validate a conflict-table file.

    Raises:
        ParseError: malformed content, with line/column location.
        SchemaError: required columns or metadata are missing.
    """
    text = Path(path).read_text(encoding="utf-8")
    return loads_table(text, mapping, expected_kpis)


def loads_table(text: str, mapping: ColumnMapping | None = None,
                expected_kpis: Sequence[KpiId] | None = None) -> ConflictTable:
    mapping = mapping or ColumnMapping()
    meta: dict[str, str] = {}
    header: list[str] | None = None
    body: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        cells = next(csv.reader([line]))
        if header is None:
            header = [mapping.rename.get(c.strip(), c.strip()) for c in cells]
            header_line = lineno
        else:
            body.append((lineno, cells))
    if header is None:
        raise SchemaError("file has no header row", missing=["header"])
    if len(set(header)) != len(header):
        dupes = sorted({c for c in header if header.count(c) > 1})
        raise ParseError(f"duplicate columns {dupes}", row=header_line)

    xapp = mapping.xapp or meta.get("xapp")
    swept = mapping.swept_param or meta.get("swept_param")
    missing_meta = [k for k, v in (("xapp", xapp), ("swept_param", swept)) if not v]
    if missing_meta:
        raise SchemaError(f"missing metadata {missing_meta}", missing=missing_meta)
    if mapping.kpis is not None:
        declared_kpis = list(mapping.kpis)
    elif "kpis" in meta:
        declared_kpis = [k.strip() for k in meta["kpis"].split(",") if k.strip()]
    else:
        declared_kpis = None

    required = list(declared_kpis or [])
    for k in expected_kpis or ():
        if k not in required:
            required.append(k)
    missing = [c for c in [swept, *required] if c not in header]
    if missing:
        raise SchemaError(f"missing columns {missing}", missing=missing)

    if declared_kpis is None:
        if mapping.params is not None:
            declared_kpis = [c for c in header if c not in mapping.params]
        else:
            declared_kpis = [c for c in header if not _PARAM_RE.match(c)]
    param_cols = [c for c in header if c not in declared_kpis]
    if not declared_kpis:
        raise SchemaError("no KPI columns", missing=["<kpi>"])

    columns: dict[str, list[float]] = {c: [] for c in header}
    for lineno, cells in body:
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(cells)}", row=lineno)
        for name, cell in zip(header, cells):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"not a number: {cell.strip()!r}", row=lineno, column=name) from None
            if not np.isfinite(value):
                raise ParseError(f"non-finite value {cell.strip()!r}", row=lineno, column=name)
            columns[name].append(value)

    n = len(body)
    if n < 2:
        raise ParseError(f"a conflict table needs at least 2 rows, found {n}")
    swept_col = np.array(columns[swept])
    steps = np.diff(swept_col)
    if np.all(steps > 0):
        order = np.arange(n)
    elif np.all(steps < 0):
        order = np.arange(n)[::-1]
    else:
        bad = int(np.argmax(steps <= 0)) if steps[0] > 0 else int(np.argmax(steps >= 0))
        raise ParseError("swept column is not strictly monotone", row=body[bad + 1][0], column=swept)

    for p in param_cols:
        if p == swept:
            continue
        col = np.array(columns[p])
        if np.any(col != col[0]):
            bad = int(np.argmax(col != col[0]))
            raise ParseError(f"fixed ICP {p} varies across rows", row=body[bad][0], column=p)

    params = {p: np.array(columns[p])[order] for p in param_cols}
    kpis = {k: np.array(columns[k])[order] for k in declared_kpis}
    return ConflictTable(xapp, swept, params, kpis)
