"""Exception hierarchy shared by the solvers, the oracle and the CLI."""

from __future__ import annotations


class SubstitutionModelError(Exception):
    """Base class for every failure raised by this package."""


class ValidationError(SubstitutionModelError):
    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(f"{v.assumption}: {v.message}" for v in self.violations)
        super().__init__(f"invalid parameters ({text})")


class InfeasibleError(SubstitutionModelError):
    """A closed form has no real solution for the given parameters."""


class ConvergenceError(SubstitutionModelError):
    def __init__(self, message, last_iterate):
        super().__init__(message)
        self.last_iterate = last_iterate


class InfeasiblePolicyError(SubstitutionModelError, ValueError):
    """The inventory trajectory implied by a policy cannot be realised."""


class VerificationError(SubstitutionModelError):
    def __init__(self, message, solver_policy, oracle_policy, residual):
        super().__init__(message)
        self.solver_policy = solver_policy
        self.oracle_policy = oracle_policy
        self.residual = residual


class NumericalStepError(SubstitutionModelError):
    pass


class RegionError(SubstitutionModelError):
    pass


class SweepSizeError(SubstitutionModelError):
    pass


class UsageError(SubstitutionModelError):
    pass
