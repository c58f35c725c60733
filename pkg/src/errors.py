"""Exception hierarchy shared by every spheremix package.

Each error knows the CLI exit code it maps to, so the front-end can turn any
library failure into the documented exit-code scheme without a lookup table.
"""


class SphereMixError(ValueError):
    exit_code: int = 1

    def __init__(self, message: str, *, row: int | None = None) -> None:
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)


# Geometry


class ZeroVector(SphereMixError):
    exit_code = 6


class DimensionMismatch(SphereMixError):
    exit_code = 3


class AntipodalInputs(SphereMixError):
    exit_code = 4


class NotUnitNorm(SphereMixError):
    exit_code = 2


# Domain preconditions


class BatchTooSmall(SphereMixError):
    exit_code = 6


class KTooLarge(SphereMixError):
    exit_code = 6


class OutOfRange(SphereMixError):
    exit_code = 6


class UndefinedDirection(SphereMixError):
    exit_code = 6


class DomainPrecondition(SphereMixError):
    exit_code = 6


# File format


class BadMagic(SphereMixError):
    exit_code = 2


class TruncatedFile(SphereMixError):
    exit_code = 2


class UnsupportedDtype(SphereMixError):
    exit_code = 2


class NonFiniteValue(SphereMixError):
    exit_code = 2


class ConfigError(SphereMixError):
    exit_code = 5
