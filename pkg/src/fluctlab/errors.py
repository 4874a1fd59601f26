"""Exception types shared across the package.

The CLI maps these onto exit codes: config problems -> 2, resource
refusals -> 3, numerical-validity failures -> 4.
"""


class InputError(ValueError):
    """Caller passed structurally invalid input (bad index, dim mismatch)."""


class DomainError(ValueError):
    """Parameters lie outside the mathematical domain of a formula."""


class NumericalValidityError(ArithmeticError):
    """A numerical invariant was violated beyond round-off tolerance."""


class ResourceLimitError(RuntimeError):
    """Requested computation exceeds the desk-scale resource guard."""


class StatisticalPowerError(RuntimeError):
    """Ensemble too small for the requested tail statistic."""


class ConfigError(ValueError):
    """Experiment configuration failed validation.

    `errors` holds every violated constraint, each prefixed with the
    offending field path.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
