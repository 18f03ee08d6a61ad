"""Compiled scalar catalog formulas and the flow stencil.

Warps are passed to kernels as ``(kind, coeffs)`` and the fast inverse of
Gamma as ``(offset, cheb, cheb_lo, cheb_hi)``; ``cheb`` is empty unless the
warp has no closed-form primitive.
"""

import math

import numpy as np
from numba import njit

# no-NaN/no-Inf flags stay off: stage values are screened with isfinite
FLAGS = {"contract", "afn", "arcp", "reassoc", "nsz"}

SINE, SINH, IDENTITY, COSH, CONSTANT, POLY = range(6)
KIND_CODES = {
    "sphere-sine": SINE,
    "hyperbolic-sinh": SINH,
    "euclidean-identity": IDENTITY,
    "cosh": COSH,
    "constant": CONSTANT,
    "even-polynomial": POLY,
}
PERIODIC, ARC, COLATITUDE = range(3)
DOMAIN_CODES = {"periodic": PERIODIC, "arc": ARC, "colatitude": COLATITUDE}


@njit(cache=True, fastmath=FLAGS)
def phi(kind, c, r):
    if kind == SINE:
        return math.sin(r)
    if kind == SINH:
        return math.sinh(r)
    if kind == IDENTITY:
        return r
    if kind == COSH:
        return math.cosh(r)
    if kind == CONSTANT:
        return c[0]
    u = r * r
    p = 0.0
    for i in range(c.size - 1, -1, -1):
        p = p * u + c[i]
    return p


@njit(cache=True, fastmath=FLAGS)
def dphi(kind, c, r):
    if kind == SINE:
        return math.cos(r)
    if kind == SINH:
        return math.cosh(r)
    if kind == IDENTITY:
        return 1.0
    if kind == COSH:
        return math.sinh(r)
    if kind == CONSTANT:
        return 0.0
    u = r * r
    p = 0.0
    for i in range(c.size - 1, 0, -1):
        p = p * u + 2.0 * i * c[i]
    return r * p


@njit(cache=True, fastmath=FLAGS)
def d2phi(kind, c, r):
    if kind == SINE:
        return -math.sin(r)
    if kind == SINH:
        return math.sinh(r)
    if kind == IDENTITY or kind == CONSTANT:
        return 0.0
    if kind == COSH:
        return math.cosh(r)
    u = r * r
    p = 0.0
    for i in range(c.size - 1, 0, -1):
        p = p * u + 2.0 * i * (2.0 * i - 1.0) * c[i]
    return p


@njit(cache=True)
def primitive(kind, c, r):
    """Antiderivative of 1/phi (NaN where no closed form is used)."""
    if kind == SINE:
        return math.log(math.tan(0.5 * r))
    if kind == SINH:
        return math.log(math.tanh(0.5 * r))
    if kind == IDENTITY:
        return math.log(r)
    if kind == COSH:
        return math.atan(math.sinh(r))
    if kind == CONSTANT:
        return r / c[0]
    return math.nan


@njit(cache=True, fastmath=FLAGS)
def rho_of(kind, c, off, cheb, lo, hi, g):
    if cheb.size > 0:
        x = (2.0 * g - lo - hi) / (hi - lo)
        b1 = 0.0
        b2 = 0.0
        for i in range(cheb.size - 1, 0, -1):
            b1, b2 = 2.0 * x * b1 - b2 + cheb[i], b1
        return x * b1 - b2 + cheb[0]
    y = g + off
    if kind == SINE:
        return 2.0 * math.atan(math.exp(y))
    if kind == SINH:
        return 2.0 * math.atanh(math.exp(y))
    if kind == IDENTITY:
        return math.exp(y)
    if kind == COSH:
        return math.asinh(math.tan(y))
    return c[0] * y


@njit(cache=True)
def map_phi_0(kind, c, r):
    out = np.empty(r.size)
    for i in range(r.size):
        out[i] = phi(kind, c, r[i])
    return out


@njit(cache=True)
def map_phi_1(kind, c, r):
    out = np.empty(r.size)
    for i in range(r.size):
        out[i] = dphi(kind, c, r[i])
    return out


@njit(cache=True)
def map_phi_2(kind, c, r):
    out = np.empty(r.size)
    for i in range(r.size):
        out[i] = d2phi(kind, c, r[i])
    return out


@njit(cache=True)
def map_primitive(kind, c, r):
    out = np.empty(r.size)
    for i in range(r.size):
        out[i] = primitive(kind, c, r[i])
    return out


@njit(cache=True)
def map_rho_of(kind, c, off, cheb, lo, hi, g):
    out = np.empty(g.size)
    for i in range(g.size):
        out[i] = rho_of(kind, c, off, cheb, lo, hi, g[i])
    return out


@njit(cache=True, fastmath=FLAGS)
def rhs(v, h, dom, n, gform, kind, c, off, cheb, clo, chi, wf, wn, out):
    """Flow right-hand side at every node of ``v`` (written into ``out``)."""
    N = v.size
    nf = N if dom == PERIODIC else N - 1
    F = np.empty(nf)
    for j in range(nf):
        jn = j + 1 if j + 1 < N else 0
        g = (v[jn] - v[j]) / h
        if gform:
            W = math.sqrt(1.0 + g * g)
        else:
            p = phi(kind, c, 0.5 * (v[j] + v[jn]))
            W = math.sqrt(p * p + g * g)
        F[j] = g / W
    for j in range(N):
        if dom == PERIODIC:
            jp = j - 1 if j > 0 else N - 1
            jn = j + 1 if j + 1 < N else 0
            div = (F[j] - F[jp]) / h
            g = (v[jn] - v[jp]) / (2.0 * h)
        elif j == 0 or j == N - 1:
            if dom == ARC:
                out[j] = 0.0
                continue
            # pole: n F_theta with F odd across the pole
            div = 2.0 * n * F[0] / h if j == 0 else -2.0 * n * F[N - 2] / h
            g = 0.0
        else:
            if dom == COLATITUDE:
                div = (wf[j] * F[j] - wf[j - 1] * F[j - 1]) / (h * wn[j - 1])
            else:
                div = (F[j] - F[j - 1]) / h
            g = (v[j + 1] - v[j - 1]) / (2.0 * h)
        if gform:
            r = rho_of(kind, c, off, cheb, clo, chi, v[j])
            p = phi(kind, c, r)
            W = math.sqrt(1.0 + g * g)
            out[j] = div / p + n * (dphi(kind, c, r) / p) * g * g / W
        else:
            p = phi(kind, c, v[j])
            W = math.sqrt(p * p + g * g)
            out[j] = div + n * (dphi(kind, c, v[j]) / p) * g * g / W


@njit(cache=True)
def in_range(v, lo, hi):
    for j in range(v.size):
        x = v[j]
        if not (x >= lo and x <= hi):
            return False
    return True


@njit(cache=True, fastmath=FLAGS)
def _rk2(v, dt, h, dom, n, gform, kind, c, off, cheb, clo, chi, wf, wn, lo, hi, k1, tmp, out):
    rhs(v, h, dom, n, gform, kind, c, off, cheb, clo, chi, wf, wn, k1)
    for j in range(v.size):
        tmp[j] = v[j] + 0.5 * dt * k1[j]
    if dom == ARC:
        tmp[0] = 0.0
        tmp[v.size - 1] = 0.0
    if not in_range(tmp, lo, hi):
        return False
    rhs(tmp, h, dom, n, gform, kind, c, off, cheb, clo, chi, wf, wn, k1)
    for j in range(v.size):
        out[j] = v[j] + dt * k1[j]
    if dom == ARC:
        out[0] = 0.0
        out[v.size - 1] = 0.0
    return in_range(out, lo, hi)


@njit(cache=True)
def doubling_step(v, dt, h, dom, n, gform, kind, c, off, cheb, clo, chi, wf, wn, lo, hi, fine):
    """One midpoint step of ``dt`` against two of ``dt/2``; returns the max-norm gap.

    ``fine`` receives the two-half-step result.  Returns ``inf`` when any
    stage leaves ``[lo, hi]`` or is not finite.
    """
    N = v.size
    k1 = np.empty(N)
    tmp = np.empty(N)
    coarse = np.empty(N)
    half = np.empty(N)
    if not _rk2(v, dt, h, dom, n, gform, kind, c, off, cheb, clo, chi, wf, wn, lo, hi, k1, tmp, coarse):
        return math.inf
    if not _rk2(v, 0.5 * dt, h, dom, n, gform, kind, c, off, cheb, clo, chi, wf, wn, lo, hi, k1, tmp, half):
        return math.inf
    if not _rk2(half, 0.5 * dt, h, dom, n, gform, kind, c, off, cheb, clo, chi, wf, wn, lo, hi, k1, tmp, fine):
        return math.inf
    err = 0.0
    for j in range(N):
        d = abs(fine[j] - coarse[j])
        if d > err:
            err = d
    return err


@njit(cache=True, fastmath=FLAGS)
def max_diffusivity(v, h, dom, gform, kind, c, off, cheb, clo, chi):
    N = v.size
    nf = N if dom == PERIODIC else N - 1
    best = 0.0
    for j in range(nf):
        jn = j + 1 if j + 1 < N else 0
        g = (v[jn] - v[j]) / h
        m = 0.5 * (v[j] + v[jn])
        if gform:
            p = phi(kind, c, rho_of(kind, c, off, cheb, clo, chi, m))
            D = 1.0 / (p * (1.0 + g * g) ** 1.5)
        else:
            p = phi(kind, c, m)
            D = p * p / (p * p + g * g) ** 1.5
        if D > best:
            best = D
    return best
