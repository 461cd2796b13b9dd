"""Exception hierarchy shared across the package."""


class CertError(Exception):
    """Base class for all package errors."""


class ModelError(CertError):
    """Problem-file or expression input error."""


class ExpressionSyntaxError(ModelError):
    def __init__(self, message: str, position: int, expected: str):
        super().__init__(f"{message} at position {position} (expected {expected})")
        self.position = position
        self.expected = expected


class UnknownIdentifier(ModelError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier {name!r} at position {position}")
        self.name = name
        self.position = position


class IndexOutOfRange(ModelError):
    def __init__(self, name: str, limit: int, position: int):
        super().__init__(f"variable {name!r} out of range 1..{limit} at position {position}")
        self.name = name
        self.limit = limit
        self.position = position


class ParseError(ModelError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ModelError):
    pass


class DomainError(CertError):
    """Evaluation left the domain of log/sqrt/division."""

    def __init__(self, message: str, subexpression: str):
        super().__init__(f"{message} in {subexpression}")
        self.subexpression = subexpression


class NumericalBreakdown(CertError):
    pass


class SingularKkt(CertError):
    def __init__(self, rank: int, size: int):
        super().__init__(f"KKT matrix singular: rank {rank} < {size}")
        self.rank = rank
        self.size = size


class FaceBudgetExceeded(CertError):
    pass


class InfeasiblePoint(CertError):
    def __init__(self, violations: list[tuple[str, float]]):
        desc = ", ".join(f"{name} by {amt:.3g}" for name, amt in violations)
        super().__init__(f"point violates constraints: {desc}")
        self.violations = violations


class LambdaMaxEmpty(CertError):
    pass


class NotNegativeDefinite(CertError):
    def __init__(self, min_eig: float):
        super().__init__(f"y-block of the Lagrangian Hessian is not negative definite (max eigenvalue {min_eig:.3g})")
        self.eigenvalue = min_eig


class EmptyCriticalSet(CertError):
    pass


class OracleBudgetExceeded(CertError):
    pass
