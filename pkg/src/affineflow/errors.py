"""Typed failures raised across the package."""


class AffineFlowError(Exception):
    """Base class; ``exit_code`` is what the command line returns for it."""

    exit_code = 2


class InputError(AffineFlowError):
    exit_code = 2


class NumericalFailure(AffineFlowError):
    exit_code = 3


class DivisionByZeroJet(InputError, ZeroDivisionError):
    pass


class OrderTooHigh(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class OutOfDomain(InputError):
    pass


class SingularMap(InputError):
    pass


class NonMonotoneMap(InputError):
    pass


class NotClosed(InputError):
    pass


class TooFewSamples(InputError):
    pass


class Degenerate(InputError):
    pass


class InflectionPoint(Degenerate):
    pass


class FlatPoint(Degenerate):
    pass


class SextacticPoint(Degenerate):
    pass


class NotConvex(InputError):
    pass


class DegenerateFrame(InputError):
    pass


class BoundaryViolation(InputError):
    pass


class InvalidParams(InputError):
    pass


class DenominatorVanishes(NumericalFailure):
    pass


class LostConvexity(NumericalFailure):
    pass


class MuVanishes(NumericalFailure):
    pass


class BlowUp(NumericalFailure):
    pass


class StepUnderflow(NumericalFailure):
    pass


class NonFiniteField(NumericalFailure):
    pass
