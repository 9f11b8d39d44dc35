"""Exception hierarchy.

Every domain error carries the name of the module it originates from so the
CLI can print ``error [module]: Kind: message`` without guessing.
"""

from __future__ import annotations


class CmsError(Exception):
    """Base class for all domain errors raised by this package."""

    module = "xapp_cms"

    def __init__(self, message: str = "", *, origin: str | None = None, **context):
        super().__init__(message)
        if origin is not None:
            self.module = origin
        self.context = context
        self.event_index: int | None = None

    def describe(self) -> str:
        text = f"error [{self.module}]: {type(self).__name__}: {self}"
        if self.event_index is not None:
            text += f" (event {self.event_index})"
        return text


class ConfigError(CmsError, ValueError):
    module = "config"


# model
class MissingParam(CmsError, KeyError):
    module = "model"

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class DegenerateWidth(CmsError, ZeroDivisionError):
    module = "model"


# dataset
class TableError(CmsError, ValueError):
    module = "dataset"


class ParseError(TableError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"line {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message, row=row, column=column)
        self.row = row
        self.column = column


class SchemaError(TableError):
    def __init__(self, message: str, missing: list[str] | None = None):
        super().__init__(message, missing=missing or [])
        self.missing = list(missing or [])


# normalize
class DegenerateDistribution(CmsError, ValueError):
    module = "normalize"


class GridMismatch(CmsError, ValueError):
    module = "normalize"


class WeightError(CmsError, ValueError):
    module = "normalize"


# predict
class RankDeficient(CmsError, ValueError):
    module = "predict"


# detect
class UnknownKpi(CmsError, KeyError):
    module = "detect"

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class StoreError(CmsError, ValueError):
    module = "detect"


# mitigate
class EmptyInput(CmsError, ValueError):
    module = "mitigate"


class PolicyError(CmsError, ValueError):
    module = "mitigate"


# harness
class FixtureMissing(CmsError, FileNotFoundError):
    module = "harness"


class OracleError(CmsError, LookupError):
    module = "harness"
