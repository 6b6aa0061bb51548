"""Exception hierarchy.

Everything raised on purpose by the package derives from ``QuadTankError``.
The CLI maps ``InputError`` subclasses to exit code 1 and ``NumericError``
subclasses to exit code 2.
"""


class QuadTankError(Exception):
    pass


class InputError(QuadTankError):
    """Bad configuration, parameters, or designs supplied by the caller."""


class NumericError(QuadTankError):
    """A computation could not be completed in floating point."""


class SingularMatrix(NumericError):
    pass


class DimensionTooLarge(InputError):
    pass


class ZeroPolynomial(InputError):
    pass


class NotSymmetric(InputError):
    pass


class NotStable(NumericError):
    pass


class NonPositiveLevel(InputError):
    pass


class PoleEvaluation(NumericError):
    pass


class DegenerateValve(InputError):
    pass


class NotAZero(InputError):
    pass


class SingularDcGain(InputError):
    pass


class EmptySchedule(InputError):
    pass


class DisconnectedGraph(InputError):
    pass


class NotDetectable(InputError):
    pass


class NotHurwitz(InputError):
    """A supplied injection gain leaves the observable error block unstable.

    ``char_poly`` and ``trace`` carry the counter-certificate: a positive
    trace alone proves some eigenvalue has positive real part.
    """

    def __init__(self, message, char_poly=None, trace=None):
        super().__init__(message)
        self.char_poly = char_poly
        self.trace = trace


class PlacementFailed(NumericError):
    pass


class DesignRejected(InputError):
    pass


class NonFiniteState(NumericError):
    def __init__(self, t):
        super().__init__(f"non-finite state at t = {t:.6g} s")
        self.t = t


class ParseError(InputError):
    def __init__(self, message, lineno=None):
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)
        self.lineno = lineno


class ValidationError(InputError):
    def __init__(self, field, constraint):
        super().__init__(f"{field}: {constraint}")
        self.field = field
        self.constraint = constraint
