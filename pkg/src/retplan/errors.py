"""Exception hierarchy.

Every error raised by the library derives from :class:`RetError`.  The CLI
maps the two top-level groups onto exit codes: validation problems (bad
input, parameters outside a domain) and numerical failures.
"""

from __future__ import annotations


class RetError(Exception):
    """Base class for all library errors."""


class ValidationError(RetError, ValueError):
    """Input that violates a documented precondition."""


class NumericalError(RetError, ArithmeticError):
    """A computation that could not be carried out numerically."""


class DomainError(ValidationError):
    """A parameter lies outside the family's parameter space."""


class DegenerateData(ValidationError):
    """The group MLE falls on the boundary of the parameter space.

    Attributes:
        group: group label ("T", "R" or "P") when known.
        estimate: the boundary estimate.
    """

    def __init__(self, message: str, group: str | None = None, estimate=None):
        super().__init__(message)
        self.group = group
        self.estimate = estimate


class RangeError(ValidationError):
    """A boundary substitution left the range of the efficacy map."""


class HypothesisMismatch(ValidationError):
    """The alternative does not satisfy the assumptions of a theorem-based check."""


class DegenerateAllocation(ValidationError):
    """Optimal allocation would put zero weight on a group.

    Attributes:
        suggestion: the two-arm design the three-arm problem collapses to.
    """

    def __init__(self, message: str, suggestion: str):
        super().__init__(f"{message}; {suggestion}")
        self.suggestion = suggestion


class ParseError(ValidationError):
    """Malformed input file.

    Attributes:
        line: 1-based line number of the offending row, if known.
    """

    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class MissingGroup(ValidationError):
    """An input file lacks one of the groups T, R, P."""


class InconsistentStat(ValidationError):
    """A sufficient statistic is inconsistent with its group size, or a group is duplicated."""


class SingularInformation(NumericalError):
    """The Fisher information is not invertible at the requested parameter."""


class OptimizationFailure(NumericalError):
    """An iterative optimizer did not converge within its iteration cap."""


class NegativeDiscriminant(NumericalError):
    """The radicand of the closed-form Poisson projection is negative."""


class BudgetExceeded(RetError):
    """An exact enumeration would exceed the configured evaluation budget.

    Attributes:
        cost: number of outcome triples the enumeration would visit.
        budget: the configured cap.
    """

    def __init__(self, cost: int, budget: int):
        super().__init__(f"enumeration needs {cost} triple evaluations, budget is {budget}")
        self.cost = cost
        self.budget = budget
