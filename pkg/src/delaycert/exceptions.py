"""Exception hierarchy shared by the certification and simulation modules."""


class DelayCertError(Exception):
    """Base class for all package errors."""


class DimensionError(DelayCertError, ValueError):
    """Matrix shapes are incompatible with the requested operation."""


class SymmetryError(DelayCertError, ValueError):
    """A matrix expected to be symmetric is not."""


class PreconditionError(DelayCertError, ValueError):
    """A mathematical precondition (Hurwitz, parameter range, ...) fails."""


class PlacementError(DelayCertError):
    """Pole placement could not assign the requested spectrum."""


class AssumptionError(DelayCertError, ValueError):
    """A structural assumption on a spectral system is violated."""


class IndeterminateError(DelayCertError):
    """The semidefinite solver neither certified nor refuted feasibility."""


class DivergenceError(DelayCertError, ArithmeticError):
    """A simulation produced non-finite values.

    Attributes
    ----------
    time : float
        Last simulation time at which the state was still finite.
    """

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time
