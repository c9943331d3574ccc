"""Exception types raised across the package."""


class GruAttitudeError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(GruAttitudeError):
    pass


class NonUniformSampling(GruAttitudeError):
    pass


class GridMismatch(GruAttitudeError):
    pass


class InsufficientData(GruAttitudeError):
    pass


class EmptySeries(GruAttitudeError):
    pass


class TooShort(GruAttitudeError):
    pass


class TrainingDiverged(GruAttitudeError):
    """Final training loss was not finite.

    ``records`` holds the iteration records completed before the failure.
    """

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records or [])


class ConfigError(GruAttitudeError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.key = key


class ValidationError(ConfigError):
    def __init__(self, field, constraint):
        super().__init__(f"{field} must be {constraint}")
        self.field = field
        self.constraint = constraint


class ModelFormatError(GruAttitudeError):
    pass


class VerificationFailed(GruAttitudeError):
    def __init__(self, mismatches):
        self.mismatches = list(mismatches)
        lines = "\n".join(f"  {m}" for m in self.mismatches[:20])
        super().__init__(f"{len(self.mismatches)} mismatched cell(s):\n{lines}")
