"""Exception hierarchy shared by all solver components."""


class SolverError(Exception):
    """Base class for every error raised by :mod:`mlprec`."""


class StructuralError(SolverError, ValueError):
    """Index out of range or otherwise malformed sparse structure."""


class DimensionError(SolverError, ValueError):
    """Operand sizes do not conform."""


class NotSPDError(SolverError, ValueError):
    """A matrix expected to be symmetric positive definite is not."""


class NumericalError(SolverError, ArithmeticError):
    """An iterative kernel failed to converge within its cap."""


class BreakdownError(NumericalError):
    """A Krylov method hit a non-positive curvature or inner product."""

    def __init__(self, quantity, value):
        self.quantity = quantity
        self.value = value
        super().__init__(f"breakdown: {quantity} = {value!r}")


class InsufficientDataError(SolverError, ValueError):
    """Not enough iteration history to form an estimate."""


class RankDeficiencyError(SolverError, ValueError):
    """Near-kernel vectors vanish on an aggregate."""

    def __init__(self, aggregate):
        self.aggregate = aggregate
        super().__init__(f"near-kernel restriction is zero on aggregate {aggregate}")


class ComplexPolesError(SolverError, ValueError):
    """The rational approximant has non-real poles."""

    def __init__(self, degree, poles=None):
        self.degree = degree
        self.poles = poles
        super().__init__(f"complex poles in degree-{degree} rational approximant")


class ParseError(SolverError, ValueError):
    """Malformed Matrix Market input."""

    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
