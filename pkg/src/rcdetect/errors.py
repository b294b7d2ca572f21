"""Exception hierarchy.

Every error raised by the library derives from :class:`RcdetectError`. The CLI
maps the groups below onto distinct exit codes.
"""


class RcdetectError(Exception):
    """Base class for all library errors."""

    exit_code = 5


# -- usage / configuration (exit 1) ----------------------------------------
class ParameterError(RcdetectError, ValueError):
    exit_code = 1


class ConfigurationError(RcdetectError, ValueError):
    exit_code = 1


class OutOfRangeError(ParameterError):
    pass


# -- input format / schema (exit 3) -----------------------------------------
class SchemaError(RcdetectError, ValueError):
    exit_code = 3


class ParseError(SchemaError):
    pass


class FormatError(SchemaError):
    pass


class UnsupportedLinkTypeError(FormatError):
    pass


class TruncationError(FormatError):
    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"truncated packet record at index {index}")


class ShapeError(SchemaError):
    pass


class EmptyInputError(SchemaError):
    pass


class EmptyWindowError(RcdetectError, ValueError):
    exit_code = 3


# -- training (exit 4) --------------------------------------------------------
class TrainingError(RcdetectError):
    exit_code = 4


class EmptyTrainingError(TrainingError):
    pass


class DegenerateTrainingError(TrainingError):
    pass


# -- telemetry ----------------------------------------------------------------
class InsufficientBaselineError(RcdetectError):
    exit_code = 4

    def __init__(self, device_id: str, required: int, found: int):
        self.device_id = device_id
        self.required = required
        self.found = found
        super().__init__(
            f"device {device_id!r}: baseline needs {required} NORMAL samples, found {found}"
        )


class MissingTelemetryError(RcdetectError):
    exit_code = 3
