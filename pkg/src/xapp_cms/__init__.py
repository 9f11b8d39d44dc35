"""Conflict management for near-RT RIC xApps.

Detect direct, indirect and implicit conflicts between xApps and resolve them
with QoS-aware mitigation (QACM) or the NSWF / egalitarian benchmarks.
"""

from .dataset import ConflictTable, generate_table, load_table, save_table
from .detect import (ConflictCase, ConflictKind, DegradationAlert, Stores, classify,
                     detect_direct, detect_implicit, detect_indirect, pmon_observe)
from .errors import CmsError
from .harness import RunLog, casestudy, run
from .mitigate import (Method, MitigationInput, MitigationResult, PolicyConfig, assign_weights,
                       eg, nswf, optimal_range, qacm_exact, qacm_heuristic, solve)
from .model import (GaussianKpiModel, KpiDef, ParamRange, XAppSpec, builtin_example_model,
                    eval_kpi)
from .normalize import UtilityCurve, ZScoreTransform, combine_kpis, fit_zscore, utility_curve
from .predict import FitMetrics, PolyRegressor, evaluate, fit, predict
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "CmsError", "ConflictCase", "ConflictKind", "ConflictTable", "DegradationAlert",
    "FitMetrics", "GaussianKpiModel", "KpiDef", "Method", "MitigationInput", "MitigationResult",
    "ParamRange", "PolicyConfig", "PolyRegressor", "RunLog", "Scenario", "Stores",
    "UtilityCurve", "XAppSpec", "ZScoreTransform", "assign_weights", "builtin_example_model",
    "casestudy", "classify", "combine_kpis", "detect_direct", "detect_implicit",
    "detect_indirect", "eg", "eval_kpi", "evaluate", "fit", "fit_zscore", "generate_table",
    "load_scenario", "load_table", "nswf", "optimal_range", "pmon_observe", "predict",
    "qacm_exact", "qacm_heuristic", "run", "save_table", "solve", "utility_curve",
]
