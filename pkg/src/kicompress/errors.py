"""Exception types raised across the package."""


class KICompressError(Exception):
    """Base class for all errors raised by kicompress."""


# matrix primitives
class NotSquare(KICompressError, ValueError):
    pass


class NotHermitian(KICompressError, ValueError):
    pass


class NotPSD(KICompressError, ValueError):
    pass


class NotDensityMatrix(KICompressError, ValueError):
    pass


class DimensionMismatch(KICompressError, ValueError):
    pass


# ensembles
class InvalidEnsemble(KICompressError, ValueError):
    """Raised when an ensemble violates its invariants.

    ``violations`` carries the list produced by :func:`kicompress.ensemble.validate`.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class DimensionTooLarge(KICompressError, ValueError):
    pass


class BadShape(KICompressError, ValueError):
    pass


# decomposition
class ClosureDiverged(KICompressError, RuntimeError):
    pass


class DegenerateSample(KICompressError, RuntimeError):
    pass


class NonProductResidual(KICompressError, RuntimeError):
    pass


class NotCommuting(KICompressError, ValueError):
    pass


class DecompositionFailed(KICompressError, RuntimeError):
    """Retries exhausted; ``report`` holds the last verification report (may be None)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# rates
class InternalConsistencyError(KICompressError, RuntimeError):
    pass


class InconsistentBound(InternalConsistencyError):
    pass


# codec
class EmptyInput(KICompressError, ValueError):
    pass


class MissingCodeword(KICompressError, KeyError):
    pass


class UnparseableCodeword(KICompressError, ValueError):
    pass


class PayloadLeakage(KICompressError, ValueError):
    pass


class WindowViolation(InternalConsistencyError):
    pass
