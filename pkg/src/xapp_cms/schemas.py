"""JSON schemas of the machine-readable records the CLI emits."""

from __future__ import annotations

_NUM = {"type": "number"}
_STR = {"type": "string"}
_INT = {"type": "integer"}

XAPP_ROW = {
    "type": "object",
    "required": ["xapp", "utility", "threshold", "delta", "distance", "satisfied"],
    "properties": {
        "xapp": _STR, "utility": _NUM, "threshold": _NUM,
        "delta": {"enum": [0, 1]}, "distance": {"type": "number", "minimum": 0},
        "satisfied": {"enum": [0, 1]},
    },
    "additionalProperties": False,
}

MITIGATION_RESULT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MitigationResult",
    "type": "object",
    "required": ["method", "param", "p_opt", "index", "objective", "bounds",
                 "satisfied_count", "xapps"],
    "properties": {
        "method": {"enum": ["qacm", "qacm-heuristic", "nswf", "eg"]},
        "param": _STR,
        "p_opt": _NUM,
        "index": {"type": "integer", "minimum": 0},
        "objective": _NUM,
        "bounds": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "satisfied_count": {"type": "integer", "minimum": 0},
        "xapps": {"type": "array", "items": XAPP_ROW, "minItems": 2},
        "label": _STR,
        "weights": {"type": "object", "additionalProperties": _NUM},
    },
    "additionalProperties": False,
}

CONFLICT_CASE = {
    "type": "object",
    "required": ["kind", "param", "involved", "detected_at"],
    "properties": {
        "kind": {"enum": ["direct", "indirect", "implicit"]},
        "param": _STR,
        "involved": {"type": "array", "items": _STR, "minItems": 2, "uniqueItems": True},
        "detected_at": _INT,
    },
    "additionalProperties": False,
}

_BASE = {"seq": {"type": "integer", "minimum": 0}, "t": _INT}


def _record(kind: str, required: list[str], props: dict) -> dict:
    return {
        "type": "object",
        "required": ["seq", "type", "t", *required],
        "properties": {**_BASE, "type": {"const": kind}, **props},
        "additionalProperties": False,
    }


RUNLOG_RECORD = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "RunLogRecord",
    "oneOf": [
        _record("request", ["xapp", "param", "value"],
                {"xapp": _STR, "param": _STR, "value": _NUM}),
        _record("policy", ["ratios", "default"],
                {"ratios": {"type": "object", "additionalProperties": _NUM},
                 "default": {"type": ["number", "null"]}}),
        _record("observe", ["kpi", "value"], {"kpi": _STR, "value": _NUM}),
        _record("alert", ["kpi", "xapp", "value", "threshold", "delta"],
                {"kpi": _STR, "xapp": _STR, "value": _NUM, "threshold": _NUM,
                 "delta": {"enum": [0, 1]}}),
        _record("conflict", ["case"], {"case": CONFLICT_CASE, "trigger": _STR}),
        _record("mitigation", ["conflict", "result", "weights"],
                {"conflict": _INT, "result": MITIGATION_RESULT,
                 "weights": {"type": "object", "additionalProperties": _NUM}}),
        _record("apply", ["param", "value", "source"],
                {"param": _STR, "value": _NUM,
                 "source": {"type": "object", "minProperties": 1, "maxProperties": 1,
                            "properties": {"mitigation": _INT, "request": _INT},
                            "additionalProperties": False}}),
        _record("skip", ["conflict", "reason"], {"conflict": _INT, "reason": _STR}),
        _record("snapshot", ["state", "kpis"],
                {"state": {"type": "object", "additionalProperties": _NUM},
                 "kpis": {"type": "object", "additionalProperties": _NUM}}),
    ],
}

CASESTUDY_REPORT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "CaseStudyReport",
    "type": "object",
    "required": ["case", "source", "header", "param", "xapps", "rows", "history"],
    "properties": {
        "case": {"enum": ["A", "B", "C", "D"]},
        "source": {"enum": ["published", "regenerated"]},
        "header": _STR,
        "param": _STR,
        "xapps": {"type": "array", "items": _STR},
        "rows": {"type": "array", "items": MITIGATION_RESULT, "minItems": 1},
        "history": {"type": "array", "items": MITIGATION_RESULT},
    },
    "additionalProperties": False,
}

FIT_REPORT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "FitReport",
    "type": "array",
    "items": {
        "type": "object",
        "required": ["xapp", "kpi", "param", "degree", "split", "evs", "r2", "mse"],
        "properties": {
            "xapp": _STR, "kpi": _STR, "param": _STR, "degree": _INT,
            "split": {"enum": ["full", "holdout"]},
            "evs": _NUM, "r2": {"type": "number", "maximum": 1},
            "mse": {"type": "number", "minimum": 0},
        },
        "additionalProperties": False,
    },
}

SCHEMAS = {
    "mitigation": MITIGATION_RESULT,
    "runlog": RUNLOG_RECORD,
    "casestudy": CASESTUDY_REPORT,
    "fit": FIT_REPORT,
}
