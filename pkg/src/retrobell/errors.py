"""Exception types raised across the package."""


class RetrobellError(Exception):
    """Base class for all package errors."""


class ZeroVector(RetrobellError, ValueError):
    pass


class AntipodalSingularity(RetrobellError, ValueError):
    pass


class DegenerateCombination(RetrobellError, ValueError):
    pass


class EmptySet(RetrobellError, ValueError):
    pass


class RegimeViolation(RetrobellError, ValueError):
    pass


class DomainError(RetrobellError, ValueError):
    pass


class OutOfRange(RetrobellError, ValueError):
    pass


class InvalidAngle(OutOfRange):
    pass


class EmptyBin(RetrobellError, ValueError):
    pass


class DegenerateBasis(RetrobellError, ValueError):
    pass


class NoConvergence(RetrobellError, RuntimeError):
    pass


class SeedInconsistent(RetrobellError, RuntimeError):
    pass
