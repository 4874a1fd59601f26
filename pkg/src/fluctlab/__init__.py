"""Desk-scale lab for subsystem-entropy fluctuation statistics.

Simulates brickwork random circuits (with and without a conserved U(1)
charge) and a chaotic Ising chain, collects entropy / trace-distance
fluctuation statistics over ensembles, and evaluates the matching
closed-form probability bounds and walker combinatorics.
"""

__version__ = "0.1.0"

from .errors import (
    DomainError,
    InputError,
    NumericalValidityError,
    ResourceLimitError,
    StatisticalPowerError,
)

__all__ = [
    "DomainError",
    "InputError",
    "NumericalValidityError",
    "ResourceLimitError",
    "StatisticalPowerError",
    "__version__",
]
