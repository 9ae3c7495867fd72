"""
Exception hierarchy for the mortality forecast toolkit
"""

# Standard library imports
from typing import Iterable, Optional

# Third-party imports
from pydantic import ValidationError


class ForecastError(Exception):
    """Base class for every error raised by the toolkit"""


class DataError(ForecastError):
    """Cohort or CSV content that cannot be used as given"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class ConfigError(ForecastError):
    """Invalid configuration file or value"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


class ModelError(ForecastError):
    """A learner or baseline cannot be fitted or applied to the given inputs"""


class UnsupportedModelError(ForecastError):
    """Unknown model kind, or a kind that does not support the requested operation"""

    def __init__(self, kind: str, supported: Iterable[str], operation: str = "this operation"):
        self.kind = kind
        self.supported = sorted(supported)
        super().__init__(
            f"Model kind '{kind}' is not supported for {operation}. "
            f"Supported kinds: {', '.join(self.supported)}"
        )


class BundleVersionError(ForecastError):
    """Persisted file written with an unsupported format version"""

    def __init__(self, found: object, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"Unsupported format version: found {found}, expected {expected}")


class BundleIntegrityError(ForecastError):
    """Persisted file is truncated, corrupt or fails its checksum"""


class LockError(ForecastError):
    """Another writer holds the prediction log lock"""


def format_validation_error(error: ValidationError) -> str:
    """One-line `field.path: message` rendering of a pydantic ValidationError"""
    problems = []
    for detail in error.errors():
        location = ".".join(str(part) for part in detail["loc"])
        problems.append(f"{location}: {detail['msg']}")
    return "; ".join(problems)
