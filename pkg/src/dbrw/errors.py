class ConstructionError(ValueError):
    """A law, config or solver was built with parameters that violate its invariants."""


class BudgetExceeded(RuntimeError):
    """A traversal or materialization hit its node budget.

    ``partial`` holds whatever was computed before the cut (flagged as truncated).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InternalInconsistency(RuntimeError):
    """Two independent verdicts on the same quantity disagree."""


class BoundViolated(AssertionError):
    """A proven inequality failed numerically, which signals an implementation bug."""


class DepthTooShallowForLevel(ValueError):
    """The requested partition level needs ancestors deeper than the simulated tree."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""
