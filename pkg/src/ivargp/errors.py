"""Shared exception types.

The CLI maps these onto its exit-code contract: configuration problems exit
with code 2, numerical failures with code 3.
"""


class ConfigError(ValueError):
    """A user-supplied configuration value is invalid or inconsistent."""


class DomainError(ConfigError):
    """A domain specification that cannot be sampled (e.g. empty support)."""


class EigensystemUnavailableError(ConfigError):
    """The kernel has no implemented closed-form eigensystem."""


class NumericalError(RuntimeError):
    """A numerical operation failed beyond recovery."""


class IllConditionedError(NumericalError):
    """Covariance factorization failed even after the jitter retry."""

    def __init__(self, message, min_eig=None):
        super().__init__(message)
        self.min_eig = min_eig


class NonOrthogonalizingRuleError(NumericalError):
    """The quadrature rule does not orthogonalize the requested basis."""
