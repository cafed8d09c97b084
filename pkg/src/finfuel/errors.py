"""Exception types raised by the numerical kernels."""


class DomainError(ValueError):
    """Argument outside the domain where a formula is defined."""


class ConvergenceError(RuntimeError):
    """An iterative or adaptive routine failed to reach its tolerance."""


class BracketError(RuntimeError):
    """A root bracket could not be established."""


class MonotonicityError(RuntimeError):
    """A tabulated boundary is not strictly monotone."""


class InconsistencyError(RuntimeError):
    """Two formulas that must agree do not."""


class RegimeError(ValueError):
    """Operation requested for a regime where it does not apply."""


class ConfigError(ValueError):
    """Invalid run configuration."""
