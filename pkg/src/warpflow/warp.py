"""Warping functions, the convexity-type check, and the gamma change of variables.

A warped product over the round sphere carries the metric
``phi(rho)**2 g_sphere + d rho**2``.  The gamma variable is the primitive
of ``1/phi`` measured from a base point; in that variable the diffusion
part of the flow has unit speed and the warp enters only through
``psi = phi o Gamma^{-1}``.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numpy.polynomial import Chebyshev

from . import _kernels as _k
from .errors import ContractError, DomainError, NumericalError
from .quadrature import integrate_to, invert_monotone

KINDS = (
    "sphere-sine",
    "hyperbolic-sinh",
    "euclidean-identity",
    "cosh",
    "constant",
    "even-polynomial",
)

POSITIVITY_GRID = 10_000


def _slack(lo, hi):
    return 1e-11 * (1.0 + abs(hi - lo))


def _check_inside(values, lo, hi, what):
    v = np.asarray(values, dtype=float)
    s = _slack(lo, hi)
    if v.size and (not np.all(np.isfinite(v)) or v.min() < lo - s or v.max() > hi + s):
        raise DomainError(
            f"{what} value(s) outside [{lo:.17g}, {hi:.17g}]: "
            f"min={np.nanmin(v):.17g}, max={np.nanmax(v):.17g}"
        )
    return v


def _apply(fn, *args, x):
    x = np.asarray(x, dtype=float)
    return fn(*args, np.ascontiguousarray(x.ravel())).reshape(x.shape)[()]


@dataclass(frozen=True)
class WarpFunction:
    """A catalog warping function on a closed interval.

    ``coefficients`` is ``(c,)`` for ``constant`` (default 1) and
    ``(a0, a1, ...)`` for ``even-polynomial``, meaning
    ``phi = a0 + a1 rho**2 + a2 rho**4 + ...``.
    """

    kind: str
    interval: tuple
    coefficients: tuple = ()
    code: int = field(init=False, repr=False, compare=False)
    c: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a, b = (float(x) for x in self.interval)
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ContractError(f"interval must satisfy a < b, got {self.interval}")
        object.__setattr__(self, "interval", (a, b))
        coeffs = tuple(float(c) for c in self.coefficients)
        if self.kind == "constant":
            coeffs = coeffs or (1.0,)
            if len(coeffs) != 1:
                raise ContractError("constant warp takes exactly one coefficient")
        elif self.kind == "even-polynomial":
            if not coeffs:
                raise ContractError("even-polynomial warp needs coefficients")
        elif coeffs:
            raise ContractError(f"warp kind {self.kind!r} takes no coefficients")
        if self.kind not in _k.KIND_CODES:
            raise ContractError(f"unknown warp kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "code", _k.KIND_CODES[self.kind])
        object.__setattr__(self, "c", np.array(coeffs or (0.0,), dtype=float))

        grid = np.linspace(a, b, POSITIVITY_GRID)
        with np.errstate(all="ignore"):
            values = self.phi(grid)
        if not np.all(np.isfinite(values)) or values.min() <= 0.0:
            bad = grid[np.argmin(np.where(np.isfinite(values), values, -np.inf))]
            raise DomainError(f"{self.kind} warp is not positive on [{a}, {b}] (fails near rho={bad:.6g})")

    def phi(self, rho):
        return _apply(_k.map_phi_0, self.code, self.c, x=rho)

    def dphi(self, rho):
        return _apply(_k.map_phi_1, self.code, self.c, x=rho)

    def d2phi(self, rho):
        return _apply(_k.map_phi_2, self.code, self.c, x=rho)

    def contains(self, rho):
        a, b = self.interval
        s = _slack(a, b)
        r = np.asarray(rho)
        return bool(np.all((r >= a - s) & (r <= b + s)))

    def sup_phi(self, grid_size=POSITIVITY_GRID):
        return float(self.phi(np.linspace(*self.interval, grid_size)).max())

    def inf_phi(self, grid_size=POSITIVITY_GRID):
        return float(self.phi(np.linspace(*self.interval, grid_size)).min())


def eval_warp(w: WarpFunction, rho):
    """Return ``(phi, phi', phi'')`` at ``rho``; raise ``DomainError`` outside I."""
    r = _check_inside(rho, *w.interval, what="rho")
    out = (w.phi(r), w.dphi(r), w.d2phi(r))
    if np.ndim(rho) == 0:
        return tuple(float(x) for x in out)
    return out


class Condition2(NamedTuple):
    holds: bool
    min_value: float
    argmin: float


def check_condition2(w: WarpFunction, grid_size: int = 10_000, tol: float = 1e-12) -> Condition2:
    """Grid check of ``phi'^2 - phi phi'' >= 0`` on I (a numeric test, not a proof)."""
    if grid_size < 2:
        raise ContractError("grid_size must be at least 2")
    r = np.linspace(*w.interval, grid_size)
    q = w.dphi(r) ** 2 - w.phi(r) * w.d2phi(r)
    j = int(np.argmin(q))
    return Condition2(bool(q[j] >= -tol), float(q[j]), float(r[j]))


@dataclass(frozen=True, eq=False)
class GammaTransform:
    """``Gamma(rho) = int_base^rho ds/phi(s)`` with inverse and ``psi``.

    ``gamma`` and ``inverse`` are the reference routes (adaptive quadrature
    and bracketed Newton).  ``rho_of``/``psi``/``dpsi`` use a closed-form
    primitive or a Chebyshev interpolant of the inverse; either is checked
    against ``inverse`` at construction.
    """

    warp: WarpFunction
    base: float
    tol: float
    J: tuple
    base_is_default: bool = False
    # fast inverse: closed-form primitive shifted by ``offset``, or a
    # Chebyshev series on [cheb_lo, cheb_hi] when ``cheb`` is non-empty
    offset: float = 0.0
    cheb: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    cheb_lo: float = 0.0
    cheb_hi: float = 1.0

    @property
    def interval(self):
        return self.warp.interval

    def gamma(self, rho):
        r = _check_inside(rho, *self.warp.interval, what="rho")
        r = np.clip(r, *self.warp.interval)
        return integrate_to(lambda s: 1.0 / self.warp.phi(s), self.base, r, self.tol)

    def inverse(self, g):
        gg = _check_inside(g, *self.J, what="gamma")
        gg = np.clip(gg, *self.J)
        a, b = self.warp.interval
        return invert_monotone(self.gamma, lambda r: 1.0 / self.warp.phi(r), gg, a, b, tol=self.tol)

    @property
    def kernel_args(self):
        return (self.warp.code, self.warp.c, self.offset, self.cheb, self.cheb_lo, self.cheb_hi)

    def rho_of(self, g):
        return _apply(_k.map_rho_of, *self.kernel_args, x=g)

    def psi(self, g):
        return self.warp.phi(self.rho_of(g))

    def dpsi(self, g):
        # (Gamma^{-1})' = phi, so psi' = (phi' phi) o Gamma^{-1}
        r = self.rho_of(g)
        return self.warp.dphi(r) * self.warp.phi(r)

    def d2psi(self, g):
        r = self.rho_of(g)
        f, df, d2f = self.warp.phi(r), self.warp.dphi(r), self.warp.d2phi(r)
        return (d2f * f + df * df) * f

    def contains(self, g):
        lo, hi = self.J
        s = _slack(lo, hi)
        v = np.asarray(g)
        return bool(np.all((v >= lo - s) & (v <= hi + s)))


def _chebyshev_inverse(t: GammaTransform, max_degree=1024):
    lo, hi = t.J
    probe = np.linspace(lo, hi, 257)[1:-1:2]
    exact = t.inverse(probe)
    deg = 32
    while deg <= max_degree:
        cheb = Chebyshev.interpolate(t.inverse, deg, domain=[lo, hi])
        if np.max(np.abs(cheb(probe) - exact)) <= 1e-12 * max(1.0, np.abs(exact).max()):
            return cheb.coef
        deg *= 2
    raise NumericalError("Chebyshev surrogate of Gamma^{-1} did not reach 1e-12")


def build_transform(w: WarpFunction, base: Optional[float] = None, tol: float = 1e-12) -> GammaTransform:
    """Construct the change of variables for ``w`` with base point ``base``.

    The base point defaults to the midpoint of I.
    """
    if tol <= 0:
        raise ContractError("tol must be positive")
    a, b = w.interval
    is_default = base is None
    base = 0.5 * (a + b) if base is None else float(base)
    if not (a <= base <= b):
        raise DomainError(f"base point {base} outside I = [{a}, {b}]")
    ends = integrate_to(lambda s: 1.0 / w.phi(s), base, np.array([a, b]), tol)
    J = (float(ends[0]), float(ends[1]))
    ref = GammaTransform(w, base, tol, J, is_default)

    offset = float(_k.map_primitive(w.code, w.c, np.array([base]))[0])
    if np.isfinite(offset):
        t = GammaTransform(w, base, tol, J, is_default, offset)
        probe = np.linspace(J[0], J[1], 65)
        err = np.abs(t.rho_of(probe) - ref.inverse(probe))
        if np.all(err <= 1e-11 * max(1.0, abs(a), abs(b))):
            return t
    return GammaTransform(w, base, tol, J, is_default, 0.0, _chebyshev_inverse(ref), J[0], J[1])


def transform_profile(t: GammaTransform, values, inverse: bool = False):
    """Pointwise ``Gamma`` (or ``Gamma^{-1}`` with ``inverse=True``) of an array."""
    return t.inverse(values) if inverse else t.gamma(values)
