"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class EvaluationError(ArithmeticError):
    """A pointwise model function or a trajectory produced non-finite values."""


class InsufficientDataError(ValueError):
    """Too few usable rows to fit a convergence order."""


class ConfigError(ValueError):
    """An experiment configuration failed schema validation.

    ``problems`` maps field names to human-readable diagnostics.
    """

    def __init__(self, problems):
        self.problems = dict(problems)
        detail = "; ".join(f"{k}: {v}" for k, v in self.problems.items())
        super().__init__(f"invalid configuration ({detail})")
