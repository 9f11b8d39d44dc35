"""Scenario files: xApps, KPI oracle, ranges, policy and a timed event schedule.

A scenario is a JSON object::

    {
      "name": "case_A",
      "model": "builtin",                 # or {"xapps": [...], "kpi_models": {...}}
      "xapps": ["x1", "x2"],               # optional subset of the model's xApps
      "parameter_groups": {"k1": ["p1", "p2"], ...},   # default: builtin groups
      "param_ranges": {"p1": [-60, 60, 1], "p2": [1, 50, 1]},
      "fixed": {"p1": 10, "p2": 30, ...},  # initial ICP state
      "xapp_ranges": {"x1": {"p2": [1, 50]}},          # optional
      "oracle": {"kind": "analytic"},      # or table / regressor with "tables"
      "method": "qacm",
      "policy": {"ratios": {"x1": 7, "x2": 3}, "default": null},
      "zeta": 1000, "big_m": 10, "window": 5, "strikes": 2, "nswf_shift": true,
      "schedule": [
        {"t": 0, "type": "request", "xapp": "x1", "param": "p2", "value": 18},
        {"t": 1, "type": "observe", "kpis": ["k41"]},
        {"t": 1, "type": "observe", "values": {"k1": 50.0}},
        {"t": 2, "type": "policy", "ratios": {}}
      ],
      "casestudy": {"priority": {"x1": 7, "x2": 3}}
    }

Table paths are resolved relative to the scenario file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .dataset import ColumnMapping, ConflictTable, load_table
from .errors import ConfigError
from .mitigate import DEFAULT_BIG_M, DEFAULT_ZETA, Method, PolicyConfig
from .model import (GaussianKpiModel, KpiDef, KpiId, ParamId, ParamRange, XAppId, XAppSpec,
                    builtin_example_model, builtin_parameter_groups)
from .predict import AnalyticPredictor, Predictor, RegressorPredictor, TablePredictor

EVENT_TYPES = ("request", "observe", "policy")
ORACLE_KINDS = ("analytic", "table", "regressor")


@dataclass(frozen=True)
class Event:
    t: int
    type: str
    xapp: XAppId | None = None
    param: ParamId | None = None
    value: float | None = None
    kpis: tuple[KpiId, ...] | None = None
    values: Mapping[KpiId, float] | None = None
    policy: PolicyConfig | None = None

    def to_record(self) -> dict:
        out: dict[str, Any] = {"t": self.t, "type": self.type}
        if self.type == "request":
            out.update(xapp=self.xapp, param=self.param, value=self.value)
        elif self.type == "observe":
            if self.kpis is not None:
                out["kpis"] = list(self.kpis)
            if self.values is not None:
                out["values"] = dict(self.values)
        else:
            out.update(ratios=dict(self.policy.ratios), default=self.policy.default)
        return out


@dataclass(frozen=True)
class OracleConfig:
    kind: str = "analytic"
    tables: tuple[ConflictTable, ...] = ()
    degree: int = 4

    def build(self, models: Mapping[KpiId, GaussianKpiModel]) -> Predictor:
        if self.kind == "analytic":
            return AnalyticPredictor(models)
        if self.kind == "table":
            return TablePredictor(self.tables)
        return RegressorPredictor.from_tables(self.tables, self.degree)


@dataclass(frozen=True)
class Scenario:
    specs: tuple[XAppSpec, ...]
    models: Mapping[KpiId, GaussianKpiModel]
    groups: Mapping[KpiId, frozenset[ParamId]]
    ranges: Mapping[ParamId, ParamRange]
    fixed: Mapping[ParamId, float]
    schedule: tuple[Event, ...] = ()
    oracle: OracleConfig = field(default_factory=OracleConfig)
    xapp_ranges: Mapping[XAppId, Mapping[ParamId, tuple[float, float]]] = field(default_factory=dict)
    method: Method = Method.QACM
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    zeta: float = DEFAULT_ZETA
    big_m: float = DEFAULT_BIG_M
    window: int = 5
    strikes: int = 2
    nswf_shift: bool = True
    name: str = ""
    priority: Mapping[XAppId, float] = field(default_factory=dict)

    def __post_init__(self):
        last = None
        for i, e in enumerate(self.schedule):
            if last is not None and e.t < last:
                raise ConfigError(f"schedule event {i} at t={e.t} precedes t={last}")
            last = e.t
        kpis = {k.id for s in self.specs for k in s.kpis}
        if self.oracle.kind == "analytic":
            missing = sorted(kpis - set(self.models))
            if missing:
                raise ConfigError(f"analytic oracle lacks models for {missing}")
        else:
            covered = {k for t in self.oracle.tables for k in t.kpis}
            missing = sorted(kpis - covered)
            if missing:
                raise ConfigError(f"{self.oracle.kind} oracle has no tables for {missing}")
        xapps = {s.id for s in self.specs}
        for e in self.schedule:
            if e.type == "request":
                if e.xapp not in xapps:
                    raise ConfigError(f"request from unknown xApp {e.xapp}")
                if e.param not in self.ranges:
                    raise ConfigError(f"request for {e.param}, which has no range")
            if e.type == "observe":
                unknown = sorted((set(e.kpis or ()) | set(e.values or {})) - kpis)
                if unknown:
                    raise ConfigError(f"observation of unknown KPIs {unknown}")

    def spec(self, xapp: XAppId) -> XAppSpec:
        for s in self.specs:
            if s.id == xapp:
                return s
        raise ConfigError(f"unknown xApp {xapp}")

    @property
    def kpi_ids(self) -> tuple[KpiId, ...]:
        return tuple(k.id for s in self.specs for k in s.kpis)

    def with_oracle(self, oracle: OracleConfig) -> "Scenario":
        return replace(self, oracle=oracle)


def _policy(raw: Mapping | None) -> PolicyConfig:
    raw = raw or {}
    ratios = raw.get("ratios", {})
    if not isinstance(ratios, Mapping):
        raise ConfigError("policy ratios must be an object of xApp -> ratio")
    default = raw.get("default")
    return PolicyConfig({str(k): float(v) for k, v in ratios.items()},
                        None if default is None else float(default))


def _model_section(raw: Any) -> tuple[list[XAppSpec], dict[KpiId, GaussianKpiModel]]:
    if raw in (None, "builtin"):
        specs, models, _ = builtin_example_model()
        return specs, models
    if not isinstance(raw, Mapping):
        raise ConfigError("model must be \"builtin\" or an object")
    specs = []
    for x in raw.get("xapps", []):
        kpis = tuple(KpiDef(k["id"], x["id"], float(k["qos"]), int(k.get("delta", 0)),
                            float(k.get("weight", 1.0))) for k in x["kpis"])
        specs.append(XAppSpec(x["id"], frozenset(x["icps"]), kpis))
    models = {}
    for kpi, m in raw.get("kpi_models", {}).items():
        models[kpi] = GaussianKpiModel.build(float(m["amplitude"]), m.get("terms", {}),
                                             m["width"], float(m.get("offset", 0.0)))
    if not specs:
        raise ConfigError("model declares no xApps")
    return specs, models


def _event(raw: Mapping, i: int) -> Event:
    try:
        t = int(raw["t"])
        kind = raw["type"]
    except KeyError as exc:
        raise ConfigError(f"schedule event {i} lacks {exc.args[0]!r}") from None
    if kind not in EVENT_TYPES:
        raise ConfigError(f"schedule event {i} has unknown type {kind!r}")
    if kind == "request":
        return Event(t, kind, xapp=raw["xapp"], param=raw["param"], value=float(raw["value"]))
    if kind == "observe":
        kpis = raw.get("kpis")
        values = raw.get("values")
        return Event(t, kind, kpis=tuple(kpis) if kpis is not None else None,
                     values={k: float(v) for k, v in values.items()} if values is not None else None)
    return Event(t, kind, policy=_policy(raw))


def scenario_from_dict(raw: Mapping, base: Path | None = None) -> Scenario:
    base = base or Path(".")
    specs, models = _model_section(raw.get("model", "builtin"))
    if "xapps" in raw:
        known = {s.id for s in specs}
        unknown = sorted(set(raw["xapps"]) - known)
        if unknown:
            raise ConfigError(f"scenario lists unknown xApps {unknown}")
        specs = [s for s in specs if s.id in set(raw["xapps"])]
    if "parameter_groups" in raw:
        groups = {k: frozenset(v) for k, v in raw["parameter_groups"].items()}
    else:
        groups = {k: frozenset(v) for k, v in builtin_parameter_groups().items()}
    active = {k.id for s in specs for k in s.kpis}
    groups = {k: g for k, g in groups.items() if k in active}
    ranges = {}
    for p, r in raw.get("param_ranges", {}).items():
        if not 2 <= len(r) <= 3:
            raise ConfigError(f"range of {p} must be [min, max] or [min, max, step]")
        ranges[p] = ParamRange(*(float(v) for v in r))
    fixed = {p: float(v) for p, v in raw.get("fixed", {}).items()}
    xapp_ranges = {x: {p: (float(r[0]), float(r[1])) for p, r in per.items()}
                   for x, per in raw.get("xapp_ranges", {}).items()}

    oracle_raw = raw.get("oracle", {"kind": "analytic"})
    kind = oracle_raw.get("kind", "analytic")
    if kind not in ORACLE_KINDS:
        raise ConfigError(f"unknown oracle kind {kind!r}; expected one of {ORACLE_KINDS}")
    mapping = None
    if oracle_raw.get("mapping"):
        mapping = ColumnMapping.load(base / oracle_raw["mapping"])
    tables = tuple(load_table(base / p, mapping) for p in oracle_raw.get("tables", []))
    if kind != "analytic" and not tables:
        raise ConfigError(f"{kind} oracle needs at least one table")
    oracle = OracleConfig(kind, tables, int(oracle_raw.get("degree", 4)))

    try:
        method = Method(raw.get("method", "qacm"))
    except ValueError:
        raise ConfigError(f"unknown method {raw.get('method')!r}") from None
    schedule = tuple(_event(e, i) for i, e in enumerate(raw.get("schedule", [])))
    priority = {str(k): float(v) for k, v in raw.get("casestudy", {}).get("priority", {}).items()}
    return Scenario(
        specs=tuple(specs), models=models, groups=groups, ranges=ranges, fixed=fixed,
        schedule=schedule, oracle=oracle, xapp_ranges=xapp_ranges, method=method,
        policy=_policy(raw.get("policy")), zeta=float(raw.get("zeta", DEFAULT_ZETA)),
        big_m=float(raw.get("big_m", DEFAULT_BIG_M)), window=int(raw.get("window", 5)),
        strikes=int(raw.get("strikes", 2)), nswf_shift=bool(raw.get("nswf_shift", True)),
        name=str(raw.get("name", "")), priority=priority)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{path}: scenario must be a JSON object")
    return scenario_from_dict(raw, path.parent)
