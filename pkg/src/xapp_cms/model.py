"""Domain types for xApps, their control parameters and KPIs.

Also houses the analytic Gaussian KPI generators used by the five-xApp
example model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, DegenerateWidth, MissingParam

ParamId = str
KpiId = str
XAppId = str

MAXIMIZE = 0
MINIMIZE = 1


def _check_id(kind: str, value: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{kind} identifier must be a nonempty string, got {value!r}")
    return value


@dataclass(frozen=True)
class ParamRange:
    """Permissible values of one parameter, sampled on a regular grid."""

    min: float
    max: float
    step: float = 1.0

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError(f"step must be > 0, got {self.step}")
        if self.min > self.max:
            raise ConfigError(f"min {self.min} exceeds max {self.max}")

    @property
    def size(self) -> int:
        # small epsilon so that e.g. (0.3 - 0.0) / 0.1 lands on 3, not 2.9999
        return int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1

    def grid(self) -> np.ndarray:
        return self.min + self.step * np.arange(self.size, dtype=float)

    def contains(self, value: float) -> bool:
        return self.min <= value <= self.max


@dataclass(frozen=True)
class KpiDef:
    id: KpiId
    owner: XAppId
    qos_threshold: float
    delta: int = MAXIMIZE
    weight_in_xapp: float = 1.0

    def __post_init__(self):
        _check_id("KPI", self.id)
        _check_id("xApp", self.owner)
        if self.delta not in (MAXIMIZE, MINIMIZE):
            raise ConfigError(f"delta of {self.id} must be 0 or 1, got {self.delta!r}")
        if not 0.0 <= self.weight_in_xapp <= 1.0:
            raise ConfigError(f"weight of {self.id} must lie in [0, 1]")

    def satisfied(self, value: float) -> bool:
        """Inclusive threshold test in the direction given by ``delta``."""
        if self.delta == MINIMIZE:
            return value <= self.qos_threshold
        return value >= self.qos_threshold


@dataclass(frozen=True)
class XAppSpec:
    id: XAppId
    icps: frozenset[ParamId]
    kpis: tuple[KpiDef, ...]

    def __post_init__(self):
        _check_id("xApp", self.id)
        object.__setattr__(self, "icps", frozenset(self.icps))
        object.__setattr__(self, "kpis", tuple(self.kpis))
        if not self.icps:
            raise ConfigError(f"xApp {self.id} declares no ICPs")
        if not self.kpis:
            raise ConfigError(f"xApp {self.id} declares no KPIs")
        for kpi in self.kpis:
            if kpi.owner != self.id:
                raise ConfigError(f"KPI {kpi.id} is owned by {kpi.owner}, not {self.id}")
        total = sum(k.weight_in_xapp for k in self.kpis)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"KPI weights of {self.id} sum to {total}, expected 1")

    def kpi(self, kpi_id: KpiId) -> KpiDef:
        for k in self.kpis:
            if k.id == kpi_id:
                return k
        raise KeyError(kpi_id)

    @property
    def kpi_ids(self) -> tuple[KpiId, ...]:
        return tuple(k.id for k in self.kpis)


@dataclass(frozen=True)
class GaussianKpiModel:
    """``amplitude * exp(-(offset + sum(c * p))**2 / (2 * width**2))``.

    ``terms`` holds the affine numerator as ``(param, coefficient)`` pairs;
    ``width`` names the parameter used as the Gaussian width.
    """

    amplitude: float
    terms: tuple[tuple[ParamId, float], ...]
    width: ParamId
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((str(p), float(c)) for p, c in self.terms))
        _check_id("width parameter", self.width)

    @classmethod
    def build(cls, amplitude: float, center: Mapping[ParamId, float], width: ParamId,
              offset: float = 0.0) -> "GaussianKpiModel":
        return cls(float(amplitude), tuple(center.items()), width, float(offset))

    @property
    def params(self) -> tuple[ParamId, ...]:
        """Parameters referenced by the model, numerator first, width last."""
        seen = [p for p, _ in self.terms]
        if self.width not in seen:
            seen.append(self.width)
        return tuple(seen)

    def numerator(self, assignment: Mapping[ParamId, float]) -> float:
        total = self.offset
        for param, coef in self.terms:
            total += coef * _lookup(assignment, param)
        return total


def _lookup(assignment: Mapping[ParamId, float], param: ParamId) -> float:
    try:
        return float(assignment[param])
    except KeyError:
        raise MissingParam(f"parameter {param} is not assigned", param=param) from None


def eval_kpi(model: GaussianKpiModel, assignment: Mapping[ParamId, float]) -> float:
    """Evaluate a Gaussian KPI generator at one parameter assignment."""
    num = model.numerator(assignment)
    width = _lookup(assignment, model.width)
    if width == 0:
        raise DegenerateWidth(f"width parameter {model.width} is zero")
    return model.amplitude * math.exp(-(num * num) / (2.0 * width * width))


# Example model: five stochastic xApps sharing p1/p2, with x4 affected
# indirectly through p2 and x5 implicitly through p1.
_BUILTIN_ICPS: dict[XAppId, tuple[ParamId, ...]] = {
    "x1": ("p1", "p2"),
    "x2": ("p1", "p2", "p3"),
    "x3": ("p1", "p4"),
    "x4": ("p5", "p6"),
    "x5": ("p7", "p8"),
}

_BUILTIN_KPIS: tuple[tuple[KpiId, XAppId, float, int, float], ...] = (
    ("k1", "x1", 55.0, MAXIMIZE, 1.0),
    ("k2", "x2", 95.0, MAXIMIZE, 1.0),
    ("k3", "x3", 85.0, MAXIMIZE, 1.0),
    ("k41", "x4", 75.0, MAXIMIZE, 0.5),
    ("k42", "x4", 80.0, MAXIMIZE, 0.5),
    ("k5", "x5", -25.0, MINIMIZE, 1.0),
)

_BUILTIN_MODELS: dict[KpiId, GaussianKpiModel] = {
    "k1": GaussianKpiModel.build(80, {"p1": 1}, "p2", offset=0),
    "k2": GaussianKpiModel.build(100, {"p1": 1, "p3": 1}, "p2"),
    "k3": GaussianKpiModel.build(120, {"p1": 1}, "p4", offset=45),
    "k41": GaussianKpiModel.build(120, {"p6": 1, "p2": 1}, "p5", offset=-30),
    "k42": GaussianKpiModel.build(150, {"p6": 1, "p2": 1}, "p5", offset=-50),
    "k5": GaussianKpiModel.build(-35, {"p8": 1, "p1": 1}, "p7", offset=-25),
}

# Known parameter groups per KPI. p1 is deliberately absent from k5's group:
# its influence on x5 is only discovered at runtime.
_BUILTIN_GROUPS: dict[KpiId, tuple[ParamId, ...]] = {
    "k1": ("p1", "p2"),
    "k2": ("p1", "p2", "p3"),
    "k3": ("p1", "p4"),
    "k41": ("p2", "p5", "p6"),
    "k42": ("p2", "p5", "p6"),
    "k5": ("p7", "p8"),
}


def builtin_example_model() -> tuple[list[XAppSpec], dict[KpiId, GaussianKpiModel], dict[KpiId, float]]:
    """Return the five example xApps, their KPI generators and QoS thresholds."""
    kpis: dict[XAppId, list[KpiDef]] = {x: [] for x in _BUILTIN_ICPS}
    qos: dict[KpiId, float] = {}
    for kpi_id, owner, threshold, delta, weight in _BUILTIN_KPIS:
        kpis[owner].append(KpiDef(kpi_id, owner, threshold, delta, weight))
        qos[kpi_id] = threshold
    specs = [XAppSpec(x, frozenset(icps), tuple(kpis[x])) for x, icps in _BUILTIN_ICPS.items()]
    return specs, dict(_BUILTIN_MODELS), qos


def builtin_parameter_groups() -> dict[KpiId, set[ParamId]]:
    return {k: set(v) for k, v in _BUILTIN_GROUPS.items()}


def index_kpis(specs: Iterable[XAppSpec]) -> dict[KpiId, KpiDef]:
    out: dict[KpiId, KpiDef] = {}
    for spec in specs:
        for kpi in spec.kpis:
            if kpi.id in out:
                raise ConfigError(f"KPI {kpi.id} declared twice")
            out[kpi.id] = kpi
    return out
