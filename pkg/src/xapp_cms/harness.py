"""Control loop and case-study runner.

The loop works in logical ticks. Within one tick it applies policy updates,
then the batch of parameter requests (direct-conflict detection and
mitigation), then KPI observations (degradation alerts, indirect/implicit
classification and mitigation), and finally records a snapshot of the ICP
state and the KPI values the oracle reports for it.
"""

from __future__ import annotations

import io
import json
import logging
import os
import time
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .dataset import ColumnMapping, ConflictTable, format_value, load_table
from .detect import ConflictCase, Stores, classify, detect_direct, pmon_observe
from .errors import CmsError, ConfigError, FixtureMissing, OracleError
from .mitigate import (Method, MitigationInput, MitigationResult, PolicyConfig, assign_weights,
                       optimal_range, solve)
from .model import ParamId, ParamRange, XAppId
from .normalize import xapp_utility
from .scenario import Event, OracleConfig, Scenario, load_scenario

log = logging.getLogger(__name__)

FIXTURES_ENV = "XAPP_CMS_FIXTURES"
CASE_IDS = ("A", "B", "C", "D")


def fixtures_dir(override: str | Path | None = None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(FIXTURES_ENV)
    if env:
        return Path(env)
    return Path(__file__).parent / "fixtures"


def _dumps(record: Mapping) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


@dataclass
class RunLog:
    """Ordered records of one run plus the objects behind them.

    Only ``records`` is serialized; ``inputs`` and ``results`` keep the
    mitigation inputs/outputs for callers that want to re-solve them.
    """

    records: list[dict] = field(default_factory=list)
    stores: Stores | None = None
    state: dict[ParamId, float] = field(default_factory=dict)
    inputs: list[MitigationInput] = field(default_factory=list)
    results: list[MitigationResult] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def of_type(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["type"] == kind]

    @property
    def cases(self) -> list[dict]:
        return self.of_type("conflict")

    def dumps(self) -> str:
        return "".join(_dumps(r) + "\n" for r in self.records)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def summary(self) -> str:
        lines = [f"{'t':>4}  {'kind':<9} {'param':<6} {'involved':<16} {'method':<15} "
                 f"{'value':>9}  satisfied"]
        conflicts = {r["seq"]: r for r in self.cases}
        for r in self.of_type("mitigation"):
            c = conflicts[r["conflict"]]
            sat = ",".join(x["xapp"] for x in r["result"]["xapps"] if x["satisfied"]) or "-"
            lines.append(f"{r['t']:>4}  {c['case']['kind']:<9} {c['case']['param']:<6} "
                         f"{','.join(c['case']['involved']):<16} {r['result']['method']:<15} "
                         f"{format_value(r['result']['p_opt']):>9}  {sat}")
        for r in self.of_type("skip"):
            lines.append(f"{r['t']:>4}  skipped: {r['reason']}")
        if len(lines) == 1:
            lines.append("  (no conflicts)")
        return "\n".join(lines)


class ControlLoop:
    """Single-writer CMS loop over a scenario's event schedule."""

    def __init__(self, scenario: Scenario, stores: Stores | None = None):
        self.scenario = scenario
        self.oracle = scenario.oracle.build(scenario.models)
        if stores is None:
            stores = Stores.from_specs(scenario.specs, scenario.groups, scenario.ranges,
                                       window=scenario.window,
                                       strikes_to_promote=scenario.strikes)
            self.offset = 0
        else:
            # continue the store timeline instead of rewinding it
            self.offset = stores.clock + 1
        self.stores = stores
        self.state: dict[ParamId, float] = dict(scenario.fixed)
        self.policy = scenario.policy
        self.log = RunLog(stores=stores)

    # records -----------------------------------------------------------------
    def _emit(self, kind: str, t: int, **fields) -> int:
        seq = len(self.log.records)
        self.log.records.append({"seq": seq, "type": kind, "t": t, **fields})
        return seq

    # mitigation ----------------------------------------------------------------
    def _curves(self, case: ConflictCase, grid: np.ndarray):
        curves = {}
        for x in case.involved:
            spec = self.scenario.spec(x)
            raw = {k.id: self.oracle.sweep(k.id, case.param, grid, self.state) for k in spec.kpis}
            table = ConflictTable(x, case.param, {case.param: grid}, raw)
            curve = xapp_utility(table, spec.kpis)
            if curve is not None:
                curves[x] = curve
        return curves

    def mitigate(self, case: ConflictCase, t: int, conflict_seq: int) -> MitigationResult | None:
        s = self.scenario
        param = case.param
        full = s.ranges[param]
        per_xapp = {x: s.xapp_ranges.get(x, {}).get(param, (full.min, full.max))
                    for x in case.involved}
        bounds = optimal_range(per_xapp)
        grid = ParamRange(bounds[0], bounds[1], full.step).grid()
        curves = self._curves(case, grid)
        if len(curves) < 2:
            self._emit("skip", t, conflict=conflict_seq,
                       reason=f"fewer than two xApps with a non-constant utility over {param}")
            return None
        if len(curves) < len(case.involved):
            case = ConflictCase(case.kind, param, tuple(x for x in case.involved if x in curves),
                                case.detected_at)
        weights = assign_weights(case, self.policy)
        inp = MitigationInput(case, curves, weights, s.zeta, s.big_m)
        kwargs = {"shift": s.nswf_shift} if s.method is Method.NSWF else {}
        result = solve(inp, s.method, **kwargs)
        self.log.inputs.append(inp)
        self.log.results.append(result)
        seq = self._emit("mitigation", t, conflict=conflict_seq, result=result.to_record(),
                         weights={x: weights[x] for x in case.involved})
        self.state[param] = result.p_opt
        for x in case.involved:
            self.stores.record_change(param, result.p_opt, t, x)
        self._emit("apply", t, param=param, value=result.p_opt, source={"mitigation": seq})
        return result

    # event handling -------------------------------------------------------------
    def _requests(self, t: int, batch: list[tuple[int, Event]]) -> None:
        seqs = {}
        for _, e in batch:
            seqs.setdefault(e.param, self._emit("request", t, xapp=e.xapp, param=e.param,
                                                value=e.value))
        cases = detect_direct([(e.xapp, e.param, e.value) for _, e in batch], self.stores, t)
        contested = {c.param for c in cases}
        for case in cases:
            seq = self._emit("conflict", t, case=case.to_record())
            self.mitigate(case, t, seq)
        for param, group in groupby(sorted((e for _, e in batch if e.param not in contested),
                                           key=lambda e: e.param), key=lambda e: e.param):
            group = list(group)
            value = group[0].value
            self.state[param] = value
            for e in group:
                self.stores.record_change(param, value, t, e.xapp)
            self._emit("apply", t, param=param, value=value, source={"request": seqs[param]})

    def _observe(self, t: int, event: Event, handled: set) -> None:
        if event.values is not None:
            samples = dict(event.values)
        else:
            kpis = event.kpis if event.kpis is not None else self.scenario.kpi_ids
            samples = {k: self.oracle.value(k, self.state) for k in kpis}
        alerts = []
        for kpi, value in samples.items():
            self._emit("observe", t, kpi=kpi, value=float(value))
            alert = pmon_observe(kpi, value, t, self.stores)
            if alert is not None:
                self._emit("alert", t, kpi=alert.kpi, xapp=alert.xapp, value=alert.value,
                           threshold=alert.threshold, delta=alert.delta)
                alerts.append(alert)
        for alert in alerts:
            case = classify(alert, self.stores)
            if case is None:
                continue
            key = (case.param, frozenset(case.involved))
            if key in handled:
                continue
            handled.add(key)
            seq = self._emit("conflict", t, case=case.to_record(), trigger=alert.kpi)
            self.mitigate(case, t, seq)

    def _snapshot(self, t: int) -> None:
        kpis = {}
        for k in self.scenario.kpi_ids:
            try:
                kpis[k] = self.oracle.value(k, self.state)
            except (OracleError, KeyError):
                continue
        self._emit("snapshot", t, state=dict(sorted(self.state.items())), kpis=kpis)

    def _tick(self, t: int, events: list[tuple[int, Event]]) -> None:
        current = None
        try:
            for i, e in events:
                if e.type == "policy":
                    current = i
                    self.policy = e.policy
                    self._emit("policy", t, ratios=dict(e.policy.ratios), default=e.policy.default)
            batch = [(i, e) for i, e in events if e.type == "request"]
            if batch:
                current = batch[0][0]
                self._requests(t, batch)
            handled: set = set()
            for i, e in events:
                if e.type == "observe":
                    current = i
                    self._observe(t, e, handled)
            current = events[-1][0]
            self._snapshot(t)
        except CmsError as exc:
            if exc.event_index is None:
                exc.event_index = current
            raise

    def run(self) -> RunLog:
        indexed = list(enumerate(self.scenario.schedule))
        for t, events in groupby(indexed, key=lambda ie: ie[1].t):
            self._tick(t + self.offset, list(events))
        self.log.state = dict(self.state)
        return self.log


def run(scenario: Scenario, stores: Stores | None = None) -> RunLog:
    """Replay a scenario. Passing ``stores`` continues an earlier run's history."""
    return ControlLoop(scenario, stores).run()


# case studies ---------------------------------------------------------------------
@dataclass(frozen=True)
class MethodRow:
    label: str
    method: Method
    weights: Mapping[XAppId, float]
    result: MitigationResult

    def to_record(self) -> dict:
        return {"label": self.label, "weights": dict(self.weights), **self.result.to_record()}


@dataclass(frozen=True)
class CaseStudyReport:
    case_id: str
    source: str
    header: str
    param: ParamId
    xapps: tuple[XAppId, ...]
    rows: tuple[MethodRow, ...]
    history: tuple[MitigationResult, ...]
    mitigation_input: MitigationInput
    runtime_s: float

    def row(self, label: str) -> MethodRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_record(self) -> dict:
        return {"case": self.case_id, "source": self.source, "header": self.header,
                "param": self.param, "xapps": list(self.xapps),
                "rows": [r.to_record() for r in self.rows],
                "history": [h.to_record() for h in self.history]}

    def format(self) -> str:
        out = [f"case {self.case_id}: {self.header}"]
        if len(self.history) > 1:
            earlier = ", ".join(f"{h.param}={format_value(h.p_opt)} ({h.method.value})"
                                for h in self.history[:-1])
            out.append(f"earlier decisions: {earlier}")
        cols = "  ".join(f"{x:>4}" for x in self.xapps)
        out.append(f"{'method':<8} {'weights':<22} {self.param:>7}  {cols}  {'sat':>3}  objective")
        for r in self.rows:
            w = "/".join(format(r.weights[x], ".3g") for x in self.xapps)
            sats = "  ".join(f"{r.result.outcome(x).satisfied:>4}" for x in self.xapps)
            out.append(f"{r.label:<8} {w:<22} {format_value(r.result.p_opt):>7}  {sats}  "
                       f"{r.result.satisfied_count:>3}  {format_value(r.result.objective)}")
        return "\n".join(out)


def _published_tables(root: Path) -> tuple[ConflictTable, ...]:
    mapping_file = root / "mapping.json"
    mapping = ColumnMapping.load(mapping_file) if mapping_file.exists() else None
    files = sorted(p for p in root.iterdir() if p.suffix in (".csv", ".txt"))
    return tuple(load_table(p, mapping) for p in files)


def load_case(case_id: str, fixtures: str | Path | None = None,
              source: str = "auto") -> tuple[Scenario, str, str]:
    """Scenario of one case study and the origin of its KPI data."""
    case_id = case_id.upper()
    if case_id not in CASE_IDS:
        raise ConfigError(f"unknown case study {case_id!r}; expected one of {CASE_IDS}")
    if source not in ("auto", "published", "regenerated"):
        raise ConfigError(f"unknown source {source!r}")
    root = fixtures_dir(fixtures)
    path = root / f"case_{case_id}.json"
    if not path.exists():
        raise FixtureMissing(f"no scenario fixture {path}")
    scenario = load_scenario(path)
    published = root / "published" / f"case_{case_id}"
    have_published = published.is_dir() and any(p.suffix in (".csv", ".txt")
                                                 for p in published.iterdir())
    if source == "published" and not have_published:
        raise FixtureMissing(f"no published conflict tables under {published}")
    if have_published and source != "regenerated":
        scenario = scenario.with_oracle(OracleConfig("table", _published_tables(published)))
        return scenario, "published", f"published conflict tables from {published}"
    return scenario, "regenerated", ("conflict tables regenerated from the analytic model with "
                                     "fixture ICP values; published reference values not asserted")


def _weights_for(case: ConflictCase, weights) -> dict[XAppId, float]:
    if isinstance(weights, Mapping):
        return assign_weights(case, PolicyConfig(dict(weights)))
    weights = list(weights)
    if len(weights) != len(case.involved):
        raise ConfigError(f"{len(weights)} weights for {len(case.involved)} xApps")
    return assign_weights(case, PolicyConfig(dict(zip(case.involved, weights))))


def casestudy(case_id: str, method: Method | str | None = None,
              weights: Mapping[XAppId, float] | Sequence[float] | None = None,
              fixtures: str | Path | None = None, source: str = "auto") -> CaseStudyReport:
    """Run one case study and compare the mitigation methods on its last conflict.

    With no ``method`` the report holds four rows: QACM and NSWF with equal
    weights, QACMP (QACM with priority weights) and EG with priority weights.
    """
    start = time.perf_counter()
    scenario, origin, header = load_case(case_id, fixtures, source)
    run_log = run(scenario)
    if not run_log.inputs:
        raise ConfigError(f"case {case_id} produced no mitigation")
    base = run_log.inputs[-1]
    case = base.case
    equal = assign_weights(case, PolicyConfig())
    priority = (_weights_for(case, scenario.priority) if scenario.priority else equal)

    if method is None:
        plan = [("QACM", Method.QACM, equal), ("QACMP", Method.QACM, priority),
                ("NSWF", Method.NSWF, equal), ("EG", Method.EG, priority)]
    else:
        m = Method(method)
        if weights is not None:
            w = _weights_for(case, weights)
        else:
            w = priority if m is Method.EG else equal
        label = m.value.upper()
        if m in (Method.QACM, Method.QACM_HEURISTIC) and w != equal:
            label = "QACMP"
        plan = [(label, m, w)]

    rows = []
    for label, m, w in plan:
        inp = MitigationInput(case, base.curves, w, base.zeta, base.big_m)
        kwargs = {"shift": scenario.nswf_shift} if m is Method.NSWF else {}
        rows.append(MethodRow(label, m, w, solve(inp, m, **kwargs)))
    return CaseStudyReport(case_id.upper(), origin, header, case.param, case.involved,
                           tuple(rows), tuple(run_log.results), base,
                           time.perf_counter() - start)


def plot_data(report: CaseStudyReport) -> str:
    """Utility curves, thresholds and chosen values of a report as a text table."""
    inp = report.mitigation_input
    buf = io.StringIO()
    buf.write(f"# case: {report.case_id}\n# source: {report.source}\n")
    buf.write(f"# swept_param: {report.param}\n")
    for x in report.xapps:
        buf.write(f"# threshold.z_{x}: {format_value(inp.curves[x].threshold)}\n")
        buf.write(f"# delta.z_{x}: {inp.curves[x].delta}\n")
    for r in report.rows:
        buf.write(f"# p_opt.{r.label}: {format_value(r.result.p_opt)}\n")
    buf.write(",".join([report.param] + [f"z_{x}" for x in report.xapps]) + "\n")
    for i, g in enumerate(inp.grid):
        cells = [format_value(g)] + [format_value(inp.curves[x].values[i]) for x in report.xapps]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def report_record(reports: Sequence[CaseStudyReport]) -> dict[str, Any]:
    return {"cases": [r.to_record() for r in reports]}


def builtin_tables(fixtures: str | Path | None = None) -> list[ConflictTable]:
    """Regenerate the reference conflict tables listed in ``builtin.json``."""
    from .dataset import generate_table

    path = fixtures_dir(fixtures) / "builtin.json"
    if not path.exists():
        raise FixtureMissing(f"no builtin fixture {path}")
    raw = json.loads(path.read_text(encoding="utf-8"))
    scenario = load_scenario(path)
    tables = []
    for entry in raw.get("tables", []):
        spec = scenario.spec(entry["xapp"])
        fixed = {**scenario.fixed, **{p: float(v) for p, v in entry.get("fixed", {}).items()}}
        swept = entry["swept"]
        tables.append(generate_table(spec, scenario.models, swept, scenario.ranges[swept], fixed))
    return tables
