"""Vectorized adaptive quadrature and monotone inversion.

Both routines work on whole arrays of limits/targets at once so that
profile-sized transforms cost one adaptive integration, not one per node.
"""

import numpy as np
from scipy.integrate import quad_vec

from .errors import NumericalError


def integrate_to(f, lower, upper, tol=1e-12):
    """Return ``int_lower^upper f(s) ds`` for every entry of ``upper``.

    ``f`` must accept and return arrays.  The integrals are mapped onto
    ``[0, 1]`` and handed to an adaptive Gauss-Kronrod (21-point) scheme
    with a max-norm absolute tolerance.
    """
    upper = np.asarray(upper, dtype=float)
    shape = upper.shape
    b = upper.ravel()
    if b.size == 0:
        return np.zeros(shape)
    width = b - lower

    def integrand(u):
        return width * f(lower + width * u)

    value, err = quad_vec(integrand, 0.0, 1.0, epsabs=tol, epsrel=0.0, norm="max", limit=400)
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)) or err > 100 * tol:
        raise NumericalError(f"quadrature did not converge (error estimate {err:.3e})")
    return value.reshape(shape)[()]


def invert_monotone(F, dF, targets, lo, hi, tol=1e-13, max_iter=100):
    """Solve ``F(x) = y`` for an increasing ``F`` on ``[lo, hi]``.

    Newton steps are taken where they stay inside the current bracket,
    bisection otherwise.  ``targets`` outside ``[F(lo), F(hi)]`` are the
    caller's responsibility.
    """
    y = np.asarray(targets, dtype=float)
    shape = y.shape
    y = y.ravel()
    a = np.full_like(y, lo)
    b = np.full_like(y, hi)
    Fa, Fb = F(np.array([lo, hi]))
    # initial guess from linear interpolation of the end values
    x = lo + (hi - lo) * np.clip((y - Fa) / (Fb - Fa), 0.0, 1.0)
    for _ in range(max_iter):
        r = F(x) - y
        a = np.where(r < 0, x, a)
        b = np.where(r > 0, x, b)
        slope = dF(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = x - r / slope
        bad = ~np.isfinite(x_new) | (x_new <= a) | (x_new >= b)
        x_new = np.where(bad, 0.5 * (a + b), x_new)
        x_new = np.where(r == 0, x, x_new)
        step = np.abs(x_new - x)
        x = x_new
        if np.all(step <= tol * max(1.0, abs(lo), abs(hi))):
            return x.reshape(shape)[()]
    raise NumericalError("monotone inversion did not converge")
