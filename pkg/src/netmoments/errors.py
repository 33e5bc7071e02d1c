"""Exception hierarchy shared by all netmoments modules."""


class MomentError(Exception):
    """Base class for all errors raised by netmoments."""


class NumericalPrecondition(MomentError):
    """A numerical precondition of an operation does not hold (CLI exit code 2)."""


class OutOfSafeBand(NumericalPrecondition):
    """The closed-form erf formulas would lose accuracy for this Gaussian."""


class InvalidInterval(NumericalPrecondition):
    pass


class ZeroMass(NumericalPrecondition):
    """Statistical moments are undefined for a zero-mass triple."""


class InsufficientSamples(NumericalPrecondition):
    pass


class UnknownVertex(MomentError, KeyError):
    pass


class StepTooLarge(NumericalPrecondition):
    """The advected length over one step exceeds the unit domain."""


class ZeroSendingSpeed(NumericalPrecondition):
    pass


class PreconditionViolation(NumericalPrecondition):
    """The configured problem is outside what the chosen method supports."""


class CflViolation(NumericalPrecondition):
    pass


class ExtinctPopulation(NumericalPrecondition):
    pass


class IoFailure(MomentError, OSError):
    pass


class FormatVersionMismatch(IoFailure):
    pass


class CorruptTable(IoFailure):
    pass


class ConfigError(MomentError, ValueError):
    """A configuration document is malformed (CLI exit code 1)."""
