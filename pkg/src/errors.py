"""
Errors - Exception hierarchy shared by the network, solver and simulation layers
"""
from typing import Optional


class DcmgError(Exception):
    """Base class for every error raised by the toolkit"""


class ConstructionError(DcmgError):
    """Invalid network or model construction (bad edges, disconnected graph, dimension mismatch)"""


class TopologyError(DcmgError):
    """A topology edit would split the network into several islands"""


class SingularMatrixError(DcmgError):
    """A matrix that has to be inverted is singular"""


class SingularJacobianError(SingularMatrixError):
    """The load-flow Jacobian is singular at the current iterate"""


class DomainError(DcmgError):
    """A function was evaluated outside its domain (e.g. zero voltage at a P load)"""


class ConvergenceError(DcmgError):
    """An iterative solver did not converge within its iteration budget"""


class NotCertifiedError(DcmgError):
    """The existence certificate does not hold, so the contraction iteration is not applicable"""


class InfeasibleError(DcmgError):
    """No feasible point was found for a constrained problem"""


class SchemaError(DcmgError):
    """
    Scenario file violates the schema

    Args:
        message: Human-readable description
        field: Dot-path of the offending field
        line: Line number in the source file, when known
    """

    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        self.field = field
        self.line = line
        location = field
        if line is not None:
            location = f"{field} (line {line})" if field else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)
