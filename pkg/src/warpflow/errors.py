"""Exception hierarchy shared across the package."""


class WarpflowError(Exception):
    """Base class for all package errors."""


class DomainError(WarpflowError, ValueError):
    """A value lies outside the interval where a map is defined."""


class RangeError(DomainError):
    """A flow state left the admissible range (I in rho-form, J in gamma-form)."""


class ContractError(WarpflowError, ValueError):
    """An input violates a documented precondition."""


class ConfigError(WarpflowError, ValueError):
    """Invalid or unknown configuration keys or values."""


class NumericalError(WarpflowError, ArithmeticError):
    """Quadrature, root finding, or a verification scan did not converge."""


class BlowupSuspected(WarpflowError):
    """Adaptive step size underflowed below ``dt_min``."""

    def __init__(self, t, dt):
        super().__init__(f"step size {dt:.3e} fell below dt_min at t={t:.17g}")
        self.t = t
        self.dt = dt


class SearchFailure(WarpflowError):
    """No admissible subsolution parameters were found within the search budget."""

    def __init__(self, message, log=()):
        super().__init__(message)
        self.log = list(log)


class InfeasibleError(WarpflowError, ValueError):
    """A requested parameter fit has no admissible solution."""
