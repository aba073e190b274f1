"""Exception hierarchy shared by all solver paths."""


class MGSError(Exception):
    """Base class for solver errors."""


class DomainError(MGSError, ValueError):
    """An argument lies outside the domain of an operation."""


class StructureError(MGSError):
    """The sign structure of f could not be established."""


class AssumptionViolation(MGSError):
    """A structural assumption on f fails where an operation needs it."""


class QuadratureError(MGSError):
    """Adaptive quadrature did not converge on an interval."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class ConeViolation(DomainError):
    """A discrete profile leaves the 1-Lipschitz cone."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class NumericalFailure(MGSError):
    """Integration or iteration broke down."""

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail or {}


class BracketInvalid(MGSError):
    """Both ends of a shooting bracket classify identically."""


class MultiplicityNotReached(MGSError):
    """Not every hump produced a ground state at the tested parameter."""

    def __init__(self, message, lam=None, succeeded=(), failed=(), partial=(), boundaries=(),
                 reasons=None):
        super().__init__(message)
        self.lam = lam
        self.succeeded = tuple(succeeded)
        self.failed = tuple(failed)
        self.partial = tuple(partial)
        self.boundaries = tuple(boundaries)
        self.reasons = dict(reasons or {})


class NonDecayingBoundary(MGSError):
    """A Plus/Minus boundary was located but its profile does not decay to 0."""

    def __init__(self, message, ground_state=None):
        super().__init__(message)
        self.ground_state = ground_state


class ThresholdError(MGSError):
    """A lambda-threshold probe could not be carried out."""

    def __init__(self, message, samples=()):
        super().__init__(message)
        self.samples = list(samples)
