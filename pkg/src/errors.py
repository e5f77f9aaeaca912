"""
Exception hierarchy for the osteorisk toolkit.

Every error a command can surface derives from OsteoriskError so the CLI can
map it to an exit code in one place.
"""

from typing import Optional


class OsteoriskError(Exception):
    """Base class for all domain errors."""
    exit_code = 1


class UsageError(OsteoriskError):
    """Raised when a required file or flag is missing after argument parsing."""
    exit_code = 2


class ConfigError(OsteoriskError):
    """Raised when parameters, metric names or environment values are invalid."""
    pass


class DataIOError(OsteoriskError):
    """Raised when a data, schema, model or grid file cannot be read."""
    pass


class SchemaError(OsteoriskError):
    """Raised when a file does not match the feature schema."""
    pass


class ParseError(OsteoriskError):
    """Raised when a continuous cell cannot be parsed as a finite number."""

    def __init__(self, row: int, column: str, value: Optional[str] = None):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"Cannot parse value {value!r} in row {row}, column '{column}'")


class StratificationError(OsteoriskError):
    """Raised when a class is too small to be stratified."""
    pass


class UnsupportedFeatureError(OsteoriskError):
    """Raised when an operation is asked for a feature kind it cannot handle."""
    pass


class FitError(OsteoriskError):
    """Raised when a learner receives unusable training input."""
    pass


class PredictionError(OsteoriskError):
    """Raised when a prediction input has the wrong width or non-finite values."""
    pass


class DegenerateModelError(FitError):
    """Raised when boosting cannot produce a single useful stage."""
    pass


class SearchError(OsteoriskError):
    """Raised when every grid-search candidate failed."""
    pass


class InputError(OsteoriskError):
    """Raised when metric inputs are malformed."""
    pass


class UndefinedMetricError(OsteoriskError):
    """Raised when a metric is undefined for the given labels."""
    pass


class UnsupportedFamilyError(OsteoriskError):
    """Raised when an explainer does not support the model family."""
    pass


class KernelWidthError(OsteoriskError):
    """Raised when every LIME neighbourhood weight vanishes."""
    pass
