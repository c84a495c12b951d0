"""Structured exceptions raised across the lab.

Every exception carries the fields a caller needs to act on it (the violated
condition, the achieved quadrature error, the frequency that left the gap
window) instead of burying them in the message.
"""

# Not ValueErrors: pydantic would wrap them in a ValidationError and drop the fields.


class ConditionViolation(Exception):
    """A matrix, tail law, or ensemble spec breaks one of the numbered Conditions 1-5."""

    def __init__(self, condition: int, detail: str):
        self.condition = condition
        self.detail = detail
        super().__init__(f"Condition {condition} violated: {detail}")


class ExcludedCaseError(Exception):
    """A parameter combination the limit theorems explicitly exclude."""

    def __init__(self, case: str, detail: str):
        self.case = case
        self.detail = detail
        super().__init__(f"Excluded case ({case}): {detail}")


class ContractViolation(ArithmeticError):
    """A degenerate input reached an operation whose precondition forbids it (e.g. |gx| = 0)."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, message: str, abserr: float):
        self.abserr = abserr
        super().__init__(f"{message} (achieved error estimate {abserr:.3e})")


class GapWindowError(ArithmeticError):
    """Power iteration stagnated: the frequency lies outside the verified spectral-gap window."""

    def __init__(self, t: float, iterations: int, residual: float):
        self.t = t
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"Power iteration at t={t:g} stagnated after {iterations} iterations "
            f"(residual {residual:.3e}); t is outside the gap window."
        )


class UsageError(ValueError):
    """A CLI invocation or experiment file that cannot be turned into a valid run."""
