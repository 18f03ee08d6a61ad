"""Geometric functionals, moduli of continuity, barrier monitors and rate fits."""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import simpson
from scipy.special import gamma as gamma_fn

from .errors import ContractError, InfeasibleError
from .flow import BLOWUP, FlowState, Profile, Trajectory, discrete_gradient
from .quadrature import integrate_to
from .warp import WarpFunction

DELTA_FLOOR = 1e-14
DELTA_CEIL = 1.0 - 1e-12


def sphere_measure(m):
    """Volume of the unit round sphere of dimension ``m`` (``|S^0| = 2``)."""
    return 2.0 * math.pi ** ((m + 1) / 2.0) / gamma_fn((m + 1) / 2.0)


def _spectral_derivative(v, h):
    N = v.size
    c = np.fft.rfft(v)
    k = np.fft.rfftfreq(N, d=h / (2.0 * math.pi))
    d = 1j * k * c
    if N % 2 == 0:
        d[-1] = 0.0
    return np.fft.irfft(d, n=N)


def _integrate_profile(p: Profile, f, n):
    """Fibre integral of node values ``f`` for the profile's domain."""
    if p.domain == "periodic":
        return float(p.h * np.sum(f))
    if p.domain == "arc":
        return float(simpson(f, dx=p.h))
    weight = np.sin(p.theta) ** (n - 1) if n > 1 else 1.0
    return float(sphere_measure(n - 1) * simpson(f * weight, dx=p.h))


def _check_rho(p):
    if p.representation != "rho":
        raise ContractError("area/volume expect a rho-form profile")


def area(p: Profile, w: WarpFunction, n: int = 1) -> float:
    """Area of the radial graph ``rho(theta)`` in the warped metric.

    Periodic profiles use a spectral derivative and the trapezoid rule;
    the other domains use the centred discrete gradient and Simpson's rule.
    """
    _check_rho(p)
    v = p.values
    slope = _spectral_derivative(v, p.h) if p.domain == "periodic" else discrete_gradient(p)
    phi = w.phi(v)
    return _integrate_profile(p, phi ** (n - 1) * np.hypot(phi, slope), n)


def volume(p: Profile, w: WarpFunction, n: int = 1) -> float:
    """Enclosed volume measured from the left end of I."""
    _check_rho(p)
    a = w.interval[0]
    inner = integrate_to(lambda s: w.phi(s) ** n, a, p.values)
    return _integrate_profile(p, np.atleast_1d(inner), n)


class Modulus(NamedTuple):
    """Modulus of continuity sampled at the grid lags ``lags`` (angles)."""

    lags: np.ndarray
    omega: np.ndarray


def modulus_of_continuity(p: Profile, n: Optional[int] = None) -> Modulus:
    """``omega(l h) = max |v_i - v_j|`` over node pairs at distance ``l h``.

    Periodic: lags ``0..N/2`` on the circle.  Arc: ``|i - j| h`` on the
    segment.  Colatitude: two points at colatitudes ``a`` and ``b`` on
    ``S^n`` (``n >= 2``, the default) can be any distance in
    ``[|a - b|, min(a + b, 2 pi - a - b)]``; with ``n = 1`` only the two
    ends of that range occur.
    """
    v = p.values
    N = p.N
    if p.domain == "periodic":
        L = N // 2
        omega = np.zeros(L + 1)
        for lag in range(1, L + 1):
            omega[lag] = np.max(np.abs(np.roll(v, -lag) - v))
        return Modulus(p.h * np.arange(L + 1), omega)
    if p.domain == "arc":
        omega = np.zeros(N + 1)
        for lag in range(1, N + 1):
            omega[lag] = np.max(np.abs(v[lag:] - v[:-lag]))
        return Modulus(p.h * np.arange(N + 1), omega)

    i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    diff = np.abs(v[:, None] - v[None, :])
    lo = np.abs(i - j)
    hi = np.minimum(i + j, 2 * N - i - j)
    if n == 1:
        omega = np.zeros(N + 1)
        np.maximum.at(omega, lo.ravel(), diff.ravel())
        np.maximum.at(omega, hi.ravel(), diff.ravel())
        return Modulus(p.h * np.arange(N + 1), omega)
    # best[a, b]: largest difference among pairs covering exactly [a, b]
    best = np.zeros((N + 1, N + 1))
    np.maximum.at(best, (lo.ravel(), hi.ravel()), diff.ravel())
    reach = np.maximum.accumulate(best[:, ::-1], axis=1)[:, ::-1]   # covers >= l
    reach = np.maximum.accumulate(reach, axis=0)                    # starts <= l
    return Modulus(p.h * np.arange(N + 1), np.diagonal(reach).copy())


def min_holder_coeff(m: Modulus, exponent: float) -> float:
    """Smallest ``lam`` with ``omega(theta) <= lam theta**exponent`` at every nonzero lag."""
    if not 0.0 < exponent <= 1.0:
        raise ContractError("exponent must lie in (0, 1]")
    lags, omega = np.asarray(m.lags), np.asarray(m.omega)
    mask = lags > 0
    if not np.any(mask):
        raise ContractError("no nonzero lags")
    return float(np.max(omega[mask] / lags[mask] ** exponent))


def _sqrt_gap(delta, theta):
    # sqrt(delta + theta) - sqrt(delta) without cancellation
    return theta / (np.sqrt(delta + theta) + np.sqrt(delta))


def fit_delta(m: Modulus, lam_bar: float, tol: float = 1e-10) -> float:
    """Largest ``delta`` in (0, 1) with ``omega <= 2 lam_bar (sqrt(delta+theta) - sqrt(delta))``."""
    if not lam_bar > 0:
        raise ContractError("lam_bar must be positive")
    lags, omega = np.asarray(m.lags), np.asarray(m.omega)
    mask = lags > 0
    th, om = lags[mask], omega[mask]

    def ok(delta):
        return bool(np.all(om <= 2.0 * lam_bar * _sqrt_gap(delta, th)))

    if ok(DELTA_CEIL):
        return DELTA_CEIL
    if not ok(DELTA_FLOOR):
        raise InfeasibleError(f"the square-root barrier bound fails for every delta at lam_bar = {lam_bar:.6g}")
    lo, hi = DELTA_FLOOR, DELTA_CEIL
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class BarrierParams:
    delta: float
    lam_bar: float
    eta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ContractError("delta must lie in (0, 1)")
        if not self.lam_bar > 0 or not self.eta > 0:
            raise ContractError("lam_bar and eta must be positive")


def kappa(bp: BarrierParams, theta, t):
    """``2 lam_bar (sqrt(delta + theta) - sqrt(delta)) exp(-eta t)``."""
    return 2.0 * bp.lam_bar * _sqrt_gap(bp.delta, np.asarray(theta, dtype=float)) * np.exp(-bp.eta * np.asarray(t, dtype=float))


class ZMax(NamedTuple):
    value: float
    t: float
    i: int
    j: int


def _states(traj):
    return traj.snapshots if isinstance(traj, Trajectory) else list(traj)


def z_monitor(traj, bp: BarrierParams) -> ZMax:
    """Max of ``gamma(y) - gamma(x) - kappa(d(x, y), t)`` over grid pairs and snapshots.

    ``traj`` is a ``Trajectory`` (its snapshots are scanned) or a sequence of
    gamma-form periodic states.  Ties go to the earliest time, then the
    smallest ``(i, j)``.
    """
    best = None
    for s in _states(traj):
        p = s.profile
        if p.representation != "gamma" or p.domain != "periodic":
            raise ContractError("z_monitor needs gamma-form periodic states")
        N = p.N
        idx = np.arange(N)
        lag = np.abs(idx[:, None] - idx[None, :])
        dist = p.h * np.minimum(lag, N - lag)
        v = p.values
        Z = v[None, :] - v[:, None] - kappa(bp, dist, s.t)
        k = int(np.argmax(Z))
        i, j = divmod(k, N)
        if best is None or Z[i, j] > best.value:
            best = ZMax(float(Z[i, j]), float(s.t), i, j)
    if best is None:
        raise ContractError("empty trajectory")
    return best


def gradient_sup(p: Profile) -> float:
    return float(np.max(np.abs(discrete_gradient(p))))


def gradient_bound(bp: BarrierParams, w: WarpFunction, t) -> float:
    """``sup_I phi * lam_bar / sqrt(delta) * exp(-eta t)``."""
    return w.sup_phi() * bp.lam_bar / math.sqrt(bp.delta) * np.exp(-bp.eta * np.asarray(t, dtype=float))


class DecayFit(NamedTuple):
    eta: float
    C: float
    r2: float


def fit_decay_rate(t, values, window=None) -> DecayFit:
    """Fit ``values ~ C exp(-eta t)`` by least squares on ``log(values)``.

    ``window = (t0, t1)`` restricts the fit to ``t0 <= t <= t1``.  ``r2`` is
    the coefficient of determination (1 for an exactly constant series).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    if t.size < 2:
        raise ContractError("need at least two samples in the window")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ContractError("values must be positive and finite in the window")
    if np.all(y == y[0]):
        return DecayFit(0.0, float(y[0]), 1.0)
    ly = np.log(y)
    tc = t - t.mean()
    slope = float(np.dot(tc, ly - ly.mean()) / np.dot(tc, tc))
    intercept = float(ly.mean() - slope * t.mean())
    resid = ly - (intercept + slope * t)
    ss_tot = float(np.dot(ly - ly.mean(), ly - ly.mean()))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.dot(resid, resid)) / ss_tot
    return DecayFit(-slope, math.exp(intercept), r2)


class BlowupDetection(NamedTuple):
    t: float
    node: int
    cause: str


def detect_blowup(traj: Trajectory) -> Optional[BlowupDetection]:
    """First accepted time at which the discrete gradient exceeds ``g_max``.

    If the run stopped because the step size collapsed before any
    crossing, the stop time and the steepest node are reported instead.
    """
    if traj.reason != BLOWUP:
        return None
    over = np.flatnonzero(traj.step_grad > traj.g_max)
    if over.size:
        k = int(over[0])
        return BlowupDetection(float(traj.step_t[k]), int(traj.step_node[k]), "gradient")
    return BlowupDetection(float(traj.step_t[-1]), int(traj.step_node[-1]), "step size")


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    area: float
    volume: float
    sup_grad: float
    osc: float
    holder_half: float
    max_z: Optional[float] = None

    FIELDS = ("t", "area", "volume", "sup_grad", "osc", "holder_half", "max_z")

    def row(self):
        return tuple(getattr(self, f) for f in self.FIELDS)


def rho_profile(state: FlowState) -> Profile:
    p = state.profile
    if p.representation == "rho":
        return p
    return Profile(p.domain, state.transform.rho_of(p.values), "rho", p.k)


def gamma_state(state: FlowState) -> FlowState:
    """``state`` in gamma-form (converted through its transform if needed)."""
    p = state.profile
    if p.representation == "gamma":
        return state
    if state.transform is None:
        raise ContractError("a GammaTransform is needed to express the state in gamma-form")
    gp = Profile(p.domain, state.transform.gamma(p.values), "gamma", p.k)
    return FlowState(gp, state.t, state.n, state.warp, state.transform)


def record(state: FlowState, barrier: Optional[BarrierParams] = None, with_volume: bool = True) -> DiagnosticsRecord:
    """Monitored quantities of ``state`` (computed on the rho profile)."""
    rp = rho_profile(state)
    n = state.n
    m = modulus_of_continuity(rp, n=n) if rp.domain == "colatitude" else modulus_of_continuity(rp)
    max_z = z_monitor([gamma_state(state)], barrier).value if barrier is not None else None
    return DiagnosticsRecord(
        t=float(state.t),
        area=area(rp, state.warp, n),
        volume=volume(rp, state.warp, n) if with_volume else math.nan,
        sup_grad=gradient_sup(rp),
        osc=float(np.ptp(rp.values)),
        holder_half=min_holder_coeff(m, 0.5),
        max_z=max_z,
    )


def diagnostics_hook(barrier: Optional[BarrierParams] = None, with_volume: bool = True):
    """A ``run_flow`` hook that returns a ``DiagnosticsRecord`` per call."""
    def hook(state):
        return record(state, barrier, with_volume)
    return hook


class BarrierFit(NamedTuple):
    params: BarrierParams
    lam: float
    delta_fit: float
    decay: DecayFit


def fit_barrier(rho0: Profile, gamma0: Profile, w: WarpFunction, t, grad, window=None) -> BarrierFit:
    """Barrier parameters for a run, fitted after the fact.

    ``lam`` is the Holder-1/2 coefficient of ``rho0`` and
    ``lam_bar = lam * sup_I(1/phi)``; ``delta`` is half the largest value
    admitted by ``gamma0``'s modulus, and ``eta`` half the fitted decay rate
    of the gradient series ``(t, grad)`` over ``window``.
    """
    lam = min_holder_coeff(modulus_of_continuity(rho0), 0.5)
    lam_bar = lam / w.inf_phi()
    if not lam_bar > 0:
        raise InfeasibleError("the initial profile is constant; no barrier to fit")
    delta = fit_delta(modulus_of_continuity(gamma0), lam_bar)
    decay = fit_decay_rate(t, grad, window)
    if not decay.eta > 0:
        raise InfeasibleError(f"gradient does not decay (fitted rate {decay.eta:.6g})")
    return BarrierFit(BarrierParams(0.5 * delta, lam_bar, 0.5 * decay.eta), lam, delta, decay)
