"""Exception types shared across the package.

The CLI maps these onto process exit codes: config errors -> 1,
contract violations -> 2, incompatible pairings -> 3, numerical
failures -> 4.
"""


class ConfigError(ValueError):
    """An experiment config could not be parsed or validated."""


class ContractViolation(ValueError):
    """An argument violates an operation's documented preconditions."""


class IncompatiblePairing(ValueError):
    """A predictor or oracle cannot be applied to the given system."""


class NumericalFailure(RuntimeError):
    """A numerical routine failed to converge or produced unusable output."""


class SingularSystem(NumericalFailure):
    """An unregularized least-squares system is rank deficient."""


class IntegrationBlowup(NumericalFailure):
    """Numerical integration produced a non-finite state."""
