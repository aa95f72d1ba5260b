"""
Exceptions raised by the Telemetry Incognito core modules.

Everything a caller can fix by changing its input derives from ValidationError
(the CLI maps it to exit code 2); the remaining errors describe runtime conditions.
"""

from typing import Optional


class ValidationError(ValueError):
    """Invalid caller input, parameters or configuration."""


class InvalidParamsError(ValidationError):
    """Mechanism or clamp parameters outside their valid domain."""


class InvalidInputError(ValidationError):
    """Non-finite values, malformed frames or unusable durations."""


class ConfigError(ValidationError):
    """Malformed defense configuration or experiment spec."""


class MissingTruthError(ValidationError):
    """An enabled defense needs a ground-truth field that is not set."""

    def __init__(self, field: str, defense: Optional[str] = None):
        self.field = field
        self.defense = defense
        suffix = f" (required by '{defense}')" if defense else ""
        super().__init__(f"Ground truth field '{field}' is missing{suffix}")


class CalibrationError(ValidationError):
    """Calibration snapshot cannot yield plausible ground truth."""


class TelemetryFormatError(ValidationError):
    """Malformed line in a telemetry recording."""

    def __init__(self, message: str, path: Optional[str] = None, line_number: Optional[int] = None):
        self.path = path
        self.line_number = line_number
        location = ""
        if path is not None:
            location += f"{path}"
        if line_number is not None:
            location += f":{line_number}" if location else f"line {line_number}"
        super().__init__(f"{location}: {message}" if location else message)


class StreamOrderError(ValueError):
    """Frame timestamps are not strictly increasing."""


class EstimationError(ValueError):
    """An attack cannot produce an estimate from the given stream."""


class DegenerateGeometryError(EstimationError):
    """Multilateration anchors are too few or collinear."""


class UnidentifiableError(EstimationError):
    """A query shares no present feature with any population entry."""
