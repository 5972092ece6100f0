"""Exception types raised across the package."""


class Vr3cError(Exception):
    """Base class for all package errors."""


class InvalidParameter(Vr3cError, ValueError):
    pass


class InfeasibleCompute(Vr3cError):
    """Local projection cannot finish before the deadline at this CPU frequency."""


class AlphaDegenerate(Vr3cError, ValueError):
    pass


class InvalidPolicy(Vr3cError, ValueError):
    pass


class CountsExceedN(Vr3cError, ValueError):
    pass


class EnumerationTooLarge(Vr3cError):
    pass


class NegativeDiscriminant(Vr3cError, ArithmeticError):
    pass


class ShapeMismatch(Vr3cError, ValueError):
    pass


class LpFailure(Vr3cError):
    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"{message} (CCCP iteration {iteration})")
        self.iteration = iteration


class NumericalBreakdown(LpFailure):
    pass


class NonDecreasingObjective(Vr3cError, AssertionError):
    pass


class BadDistribution(Vr3cError, ValueError):
    pass


class InfeasibleRoute(Vr3cError):
    pass


class ConfigError(Vr3cError):
    pass


class InstanceParseError(Vr3cError):
    pass


class SolverError(Vr3cError):
    pass
