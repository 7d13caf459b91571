"""Exception hierarchy shared by the numerical modules."""


class BTQuantError(Exception):
    """Base class for all errors raised by btquant."""


class InvalidStructure(BTQuantError, ValueError):
    """A matrix fails to be a compatible complex structure."""


class NotAlmostComplex(InvalidStructure):
    pass


class NotSymplectic(InvalidStructure):
    pass


class NotPositive(InvalidStructure):
    pass


class DimensionMismatch(BTQuantError, ValueError):
    pass


class SingularInterpolation(BTQuantError, ArithmeticError):
    pass


class BranchJump(BTQuantError, ArithmeticError):
    """Argument tracking could not resolve a continuous branch."""


class ZeroDeterminant(BTQuantError, ArithmeticError):
    pass


class TailBoundViolated(BTQuantError, ValueError):
    """The quadrature box is too small for the requested accuracy."""


class ConvergenceFailure(BTQuantError, ArithmeticError):
    pass


class DegenerateFixedPoint(BTQuantError, ValueError):
    pass


class DegenerateOnN(DegenerateFixedPoint):
    pass


class HolomorphyFailure(BTQuantError, ArithmeticError):
    pass


class PeriodicityFailure(BTQuantError, ArithmeticError):
    pass


class TruncationTooSmall(BTQuantError, ValueError):
    pass


class GridTooCoarse(BTQuantError, ValueError):
    pass


class LiftInconsistent(BTQuantError, ArithmeticError):
    pass
