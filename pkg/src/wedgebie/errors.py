"""Exception hierarchy shared by all modules."""


class WedgeError(Exception):
    """Base class for all package errors."""


class DomainError(WedgeError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class UnsupportedDomainError(DomainError):
    """Argument in a region the implementation deliberately does not cover."""


class BranchError(DomainError):
    """Complex power requested on the cut of the chosen branch."""


class ConstraintError(WedgeError, ValueError):
    """Parameters violate a standing admissibility constraint."""


class NonEllipticError(WedgeError):
    """Symbol vanishes on the contour, so no winding number exists."""


class SingularSystemError(WedgeError):
    """Discrete system is numerically singular."""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class ContractError(WedgeError, ValueError):
    """Inputs break a documented precondition of an operator."""
