"""Performance monitoring and conflict detection.

:class:`Stores` bundles the six database sections the detector reads and
writes (recent parameter changes, parameter groups, recent group changes,
parameter/KPI ranges, KPI thresholds, KPI degradation occurrences). The
functions here are the PMon and CDC logic acting on them. Stores are meant to
be mutated by a single writer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import StoreError, UnknownKpi
from .model import KpiDef, KpiId, ParamId, ParamRange, XAppId, XAppSpec

DEFAULT_WINDOW = 5
DEFAULT_STRIKES = 2


class ConflictKind(str, Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"
    IMPLICIT = "implicit"


@dataclass(frozen=True)
class RcpEntry:
    param: ParamId
    value: float
    t: int
    xapp: XAppId


@dataclass(frozen=True)
class RcpgEntry:
    param: ParamId
    t: int
    members: tuple[ParamId, ...]


@dataclass(frozen=True)
class KdoEntry:
    kpi: KpiId
    value: float
    t: int


@dataclass(frozen=True)
class DegradationAlert:
    kpi: KpiId
    xapp: XAppId
    value: float
    threshold: float
    delta: int
    t: int


@dataclass(frozen=True)
class ConflictCase:
    kind: ConflictKind
    param: ParamId
    involved: tuple[XAppId, ...]
    detected_at: int

    def __post_init__(self):
        object.__setattr__(self, "kind", ConflictKind(self.kind))
        object.__setattr__(self, "involved", tuple(self.involved))
        if len(set(self.involved)) != len(self.involved):
            raise StoreError(f"duplicate xApps in {self.involved}")
        if len(self.involved) < 2:
            raise StoreError("a conflict involves at least two xApps")

    def to_record(self) -> dict:
        return {"kind": self.kind.value, "param": self.param,
                "involved": list(self.involved), "detected_at": self.detected_at}


@dataclass
class Stores:
    """CMS database sections plus the registry of deployed xApps."""

    xapps: dict[XAppId, XAppSpec]
    pgd: dict[KpiId, set[ParamId]]
    pkr: dict[ParamId, ParamRange] = field(default_factory=dict)
    kpi_ranges: dict[KpiId, tuple[float, float]] = field(default_factory=dict)
    dckd: dict[KpiId, float] = field(default_factory=dict)
    rcp: list[RcpEntry] = field(default_factory=list)
    rcpg: list[RcpgEntry] = field(default_factory=list)
    kdo: list[KdoEntry] = field(default_factory=list)
    window: int = DEFAULT_WINDOW
    strikes_to_promote: int = DEFAULT_STRIKES
    # (kpi, param) -> co-occurrences observed so far
    candidates: dict[tuple[KpiId, ParamId], int] = field(default_factory=dict)

    @classmethod
    def from_specs(cls, specs: Iterable[XAppSpec], groups: dict[KpiId, Iterable[ParamId]],
                   ranges: dict[ParamId, ParamRange] | None = None, **kwargs) -> "Stores":
        specs = list(specs)
        stores = cls(xapps={s.id: s for s in specs},
                     pgd={k: set(v) for k, v in groups.items()},
                     pkr=dict(ranges or {}), **kwargs)
        for spec in specs:
            for kpi in spec.kpis:
                stores.dckd.setdefault(kpi.id, kpi.qos_threshold)
                stores.pgd.setdefault(kpi.id, set())
        stores.validate()
        return stores

    def validate(self) -> None:
        if self.pkr:
            for kpi, group in self.pgd.items():
                unknown = sorted(p for p in group if p not in self.pkr)
                if unknown:
                    raise StoreError(f"group of {kpi} lists {unknown} without a PKR range")

    @property
    def clock(self) -> int:
        """Latest timestamp recorded in any store, or -1 when empty."""
        last = [s[-1].t for s in (self.rcp, self.rcpg, self.kdo) if s]
        return max(last, default=-1)

    def kpi_def(self, kpi: KpiId) -> KpiDef:
        for spec in self.xapps.values():
            for k in spec.kpis:
                if k.id == kpi:
                    return k
        raise UnknownKpi(f"KPI {kpi} is not registered", kpi=kpi)

    def groups_of(self, param: ParamId) -> list[KpiId]:
        return [k for k, group in self.pgd.items() if param in group]

    def record_change(self, param: ParamId, value: float, t: int, xapp: XAppId) -> None:
        if self.rcp and t < self.rcp[-1].t:
            raise StoreError(f"RCP timestamp {t} precedes {self.rcp[-1].t}")
        self.rcp.append(RcpEntry(param, float(value), int(t), xapp))
        groups = self.groups_of(param)
        if groups:
            members = sorted(set().union(*(self.pgd[k] for k in groups)))
            if self.rcpg and t < self.rcpg[-1].t:
                raise StoreError(f"RCPG timestamp {t} precedes {self.rcpg[-1].t}")
            self.rcpg.append(RcpgEntry(param, int(t), tuple(members)))

    def latest_change(self, param: ParamId) -> RcpEntry | None:
        for entry in reversed(self.rcp):
            if entry.param == param:
                return entry
        return None

    def recent_changes(self, t: int) -> list[RcpEntry]:
        """RCP entries with timestamp in ``[t - window, t]``, newest first."""
        return [e for e in reversed(self.rcp) if t - self.window <= e.t <= t]

    # persistence -----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "strikes_to_promote": self.strikes_to_promote,
            "xapps": [_spec_record(s) for s in self.xapps.values()],
            "pgd": {k: sorted(v) for k, v in self.pgd.items()},
            "pkr": {p: [r.min, r.max, r.step] for p, r in self.pkr.items()},
            "kpi_ranges": {k: list(v) for k, v in self.kpi_ranges.items()},
            "dckd": dict(self.dckd),
            "rcp": [[e.param, e.value, e.t, e.xapp] for e in self.rcp],
            "rcpg": [[e.param, e.t, list(e.members)] for e in self.rcpg],
            "kdo": [[e.kpi, e.value, e.t] for e in self.kdo],
            "candidates": [[k, p, n] for (k, p), n in self.candidates.items()],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Stores":
        specs = {}
        for s in raw["xapps"]:
            kpis = tuple(KpiDef(k["id"], s["id"], k["qos"], k.get("delta", 0), k.get("weight", 1.0))
                         for k in s["kpis"])
            specs[s["id"]] = XAppSpec(s["id"], frozenset(s["icps"]), kpis)
        stores = cls(
            xapps=specs,
            pgd={k: set(v) for k, v in raw["pgd"].items()},
            pkr={p: ParamRange(*v) for p, v in raw.get("pkr", {}).items()},
            kpi_ranges={k: tuple(v) for k, v in raw.get("kpi_ranges", {}).items()},
            dckd=dict(raw.get("dckd", {})),
            rcp=[RcpEntry(p, float(v), int(t), x) for p, v, t, x in raw.get("rcp", [])],
            rcpg=[RcpgEntry(p, int(t), tuple(m)) for p, t, m in raw.get("rcpg", [])],
            kdo=[KdoEntry(k, float(v), int(t)) for k, v, t in raw.get("kdo", [])],
            window=int(raw.get("window", DEFAULT_WINDOW)),
            strikes_to_promote=int(raw.get("strikes_to_promote", DEFAULT_STRIKES)),
            candidates={(k, p): int(n) for k, p, n in raw.get("candidates", [])},
        )
        stores.validate()
        return stores

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Stores":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _spec_record(spec: XAppSpec) -> dict:
    return {"id": spec.id, "icps": sorted(spec.icps),
            "kpis": [{"id": k.id, "qos": k.qos_threshold, "delta": k.delta,
                      "weight": k.weight_in_xapp} for k in spec.kpis]}


def pmon_observe(kpi: KpiId, value: float, t: int, stores: Stores) -> DegradationAlert | None:
    """Check one KPI sample against its threshold; log and alert on violation."""
    if kpi not in stores.dckd:
        raise UnknownKpi(f"no threshold recorded for {kpi}", kpi=kpi)
    definition = stores.kpi_def(kpi)
    threshold = stores.dckd[kpi]
    value = float(value)
    violated = value > threshold if definition.delta == 1 else value < threshold
    if not violated:
        return None
    if stores.kdo and t < stores.kdo[-1].t:
        raise StoreError(f"KDO timestamp {t} precedes {stores.kdo[-1].t}")
    stores.kdo.append(KdoEntry(kpi, value, int(t)))
    return DegradationAlert(kpi, definition.owner, value, threshold, definition.delta, int(t))


def detect_direct(requests: Sequence[tuple[XAppId, ParamId, float]], stores: Stores,
                  t: int | None = None) -> list[ConflictCase]:
    """Direct conflicts among one batch of parameter requests.

    A parameter is contested when two or more xApps ask for different values,
    or when the request disagrees with the latest recorded change made by a
    different xApp.
    """
    t = stores.clock if t is None else t
    by_param: dict[ParamId, list[tuple[XAppId, float]]] = {}
    for xapp, param, value in requests:
        by_param.setdefault(param, []).append((xapp, float(value)))

    cases = []
    for param, asks in by_param.items():
        xapps = list(dict.fromkeys(x for x, _ in asks))
        values = {v for _, v in asks}
        if len(xapps) >= 2 and len(values) > 1:
            cases.append(ConflictCase(ConflictKind.DIRECT, param, tuple(xapps), t))
            continue
        last = stores.latest_change(param)
        if last is not None and last.xapp not in xapps and any(v != last.value for v in values):
            cases.append(ConflictCase(ConflictKind.DIRECT, param, (last.xapp, *xapps), t))
    return cases


def _changers(entries: Sequence[RcpEntry], param: ParamId, owner: XAppId) -> list[XAppId]:
    # oldest first so the involved list follows the order changes were made
    ordered = [e.xapp for e in reversed(entries) if e.param == param and e.xapp != owner]
    return list(dict.fromkeys(ordered))


def detect_indirect(alert: DegradationAlert, stores: Stores) -> ConflictCase | None:
    """Degradation explained by a recent change to a parameter of the KPI's group."""
    owner = stores.xapps[alert.xapp]
    group = stores.pgd.get(alert.kpi, set())
    recent = stores.recent_changes(alert.t)
    for entry in recent:
        if entry.param in group and entry.param not in owner.icps:
            changers = _changers(recent, entry.param, owner.id)
            if changers:
                return ConflictCase(ConflictKind.INDIRECT, entry.param,
                                    (*changers, owner.id), alert.t)
    return None


def detect_implicit(alert: DegradationAlert, stores: Stores) -> ConflictCase | None:
    """Degradation co-occurring with a change outside the KPI's known group.

    Each co-occurrence is one strike against the (KPI, parameter) pair; when
    the pair reaches ``stores.strikes_to_promote`` the parameter is added to
    the KPI's group and an implicit conflict is reported. Later occurrences
    are then classified as indirect.
    """
    owner = stores.xapps[alert.xapp]
    group = stores.pgd.setdefault(alert.kpi, set())
    recent = stores.recent_changes(alert.t)
    seen: list[ParamId] = []
    for entry in recent:
        p = entry.param
        if p in group or p in owner.icps or p in seen:
            continue
        changers = _changers(recent, p, owner.id)
        if not changers:
            continue
        seen.append(p)
        key = (alert.kpi, p)
        stores.candidates[key] = stores.candidates.get(key, 0) + 1
    for p in seen:
        key = (alert.kpi, p)
        if stores.candidates[key] >= stores.strikes_to_promote:
            del stores.candidates[key]
            if stores.pkr and p not in stores.pkr:
                raise StoreError(f"cannot add {p} to the group of {alert.kpi}: no PKR range")
            group.add(p)
            return ConflictCase(ConflictKind.IMPLICIT, p,
                                (*_changers(recent, p, owner.id), owner.id), alert.t)
    return None


def classify(alert: DegradationAlert, stores: Stores) -> ConflictCase | None:
    """Indirect if the alert is explained by a known group, else implicit."""
    return detect_indirect(alert, stores) or detect_implicit(alert, stores)
