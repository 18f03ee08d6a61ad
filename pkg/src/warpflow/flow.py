"""Method-of-lines discretization of the flow and its adaptive explicit driver.

Both representations share one conservative operator

    v_t = div(v_theta / W) / A(v) + n B(v) v_theta**2 / W

with, in rho-form, ``A = 1``, ``W = sqrt(phi(v)**2 + v_theta**2)``,
``B = phi'/phi``; and in gamma-form ``A = psi``, ``W = sqrt(1 + v_theta**2)``,
``B = psi'/psi**2``, which equals ``phi'/phi`` at ``rho = Gamma^{-1}(v)``.  The divergence is a difference of face fluxes,
weighted by ``sin(theta)**(n-1)`` on the colatitude domain.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as _k
from .errors import BlowupSuspected, ContractError, RangeError
from .warp import GammaTransform, WarpFunction, _slack

DOMAINS = ("periodic", "arc", "colatitude")
REPRESENTATIONS = ("rho", "gamma")
MIN_NODES = 16
SAFETY = 0.4

REACHED = "reached t_end"
BLOWUP = "blow-up suspected"
RANGE = "range error"


@lru_cache(maxsize=64)
def _grid(domain, N, k):
    if domain == "periodic":
        h = 2.0 * math.pi / N
        theta = h * np.arange(N)
    else:
        length = math.pi / k if domain == "arc" else math.pi
        h = length / N
        theta = np.linspace(0.0, length, N + 1)
    theta.setflags(write=False)
    return theta, h


@lru_cache(maxsize=64)
def _sphere_weights(N, n):
    theta, h = _grid("colatitude", N, 1)
    faces = theta[:-1] + 0.5 * h
    w_face = np.sin(faces) ** (n - 1)
    w_node = np.sin(theta[1:-1]) ** (n - 1)
    return w_face, w_node


@dataclass(frozen=True, eq=False)
class Profile:
    """Grid samples on one of the three 1-D domains.

    ``periodic`` stores the ``N`` distinct nodes of the circle of length 2pi;
    ``arc`` ([0, pi/k]) and ``colatitude`` ([0, pi]) store ``N + 1`` nodes
    including both ends.
    """

    domain: str
    values: np.ndarray
    representation: str
    k: int = 1

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ContractError(f"unknown domain {self.domain!r}")
        if self.representation not in REPRESENTATIONS:
            raise ContractError(f"unknown representation {self.representation!r}")
        if int(self.k) < 1:
            raise ContractError("k must be a positive integer")
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.N < MIN_NODES:
            raise ContractError(f"at least {MIN_NODES} grid segments required, got {self.N}")
        if self.domain == "arc" and (v[0] != 0.0 or v[-1] != 0.0):
            raise ContractError("arc profiles must vanish at both ends")

    @property
    def N(self):
        return self.values.size if self.domain == "periodic" else self.values.size - 1

    @property
    def theta(self):
        return _grid(self.domain, self.N, self.k)[0]

    @property
    def h(self):
        return _grid(self.domain, self.N, self.k)[1]

    def with_values(self, values):
        return replace(self, values=values)


def make_profile(domain, grid_n, values, representation="rho", k=1):
    """Sample ``values`` (a callable of theta, or an array) on a uniform grid."""
    theta, _ = _grid(domain, int(grid_n), int(k))
    v = values(theta) if callable(values) else values
    v = np.broadcast_to(np.asarray(v, dtype=float), theta.shape).copy()
    if domain == "arc":
        v[0] = v[-1] = 0.0
    return Profile(domain, v, representation, int(k))


@dataclass(frozen=True, eq=False)
class FlowState:
    """A profile at time ``t`` for fibre dimension ``n``.

    ``transform`` is required in gamma-form; in rho-form only its warp is used
    (``warp`` may be passed instead).
    """

    profile: Profile
    t: float
    n: int
    warp: WarpFunction
    transform: Optional[GammaTransform] = None

    def __post_init__(self):
        if self.n < 1:
            raise ContractError("dimension n must be at least 1")
        if self.profile.representation == "gamma" and self.transform is None:
            raise ContractError("gamma-form states need a GammaTransform")
        if self.profile.domain != "colatitude" and self.n != 1:
            raise ContractError("periodic and arc domains are one-dimensional (n = 1)")
        _check_range(self, self.profile.values)

    @property
    def representation(self):
        return self.profile.representation

    @property
    def values(self):
        return self.profile.values

    def advanced(self, values, t):
        return replace(self, profile=self.profile.with_values(values), t=t)


def _admissible(state):
    if state.representation == "rho":
        return state.warp.interval
    return state.transform.J


def _check_range(state, v):
    lo, hi = _admissible(state)
    s = _slack(lo, hi)
    vmin, vmax = v.min(), v.max()
    if not (vmin >= lo - s and vmax <= hi + s):
        raise RangeError(
            f"{state.representation} left [{lo:.6g}, {hi:.6g}]: min={vmin:.6g}, max={vmax:.6g}"
        )


def discrete_gradient(profile: Profile):
    """Centred differences inside; one-sided (second order) at arc ends; zero at poles."""
    v, h = profile.values, profile.h
    if profile.domain == "periodic":
        return (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * h)
    g = np.empty_like(v)
    g[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    if profile.domain == "arc":
        g[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
        g[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    else:
        g[0] = g[-1] = 0.0
    return g


def _kernel_args(state):
    """Positional arguments shared by the compiled stencil routines."""
    p = state.profile
    if p.domain == "colatitude":
        w_face, w_node = _sphere_weights(p.N, state.n)
    else:
        w_face = w_node = _EMPTY
    if state.representation == "gamma":
        fast = state.transform.kernel_args
    else:
        fast = (state.warp.code, state.warp.c, 0.0, _EMPTY, 0.0, 1.0)
    return (p.h, _k.DOMAIN_CODES[p.domain], float(state.n), state.representation == "gamma") + fast + (w_face, w_node)


_EMPTY = np.zeros(0)


def _evaluate(state, v):
    """Flow right-hand side for node values ``v`` on ``state``'s grid."""
    _check_range(state, v)
    out = np.empty_like(v)
    _k.rhs(np.ascontiguousarray(v, dtype=float), *_kernel_args(state), out)
    return out


def rhs_gamma(state: FlowState):
    """``d gamma / dt`` at every node (zero at Dirichlet ends)."""
    if state.representation != "gamma":
        raise ContractError("rhs_gamma needs a gamma-form state")
    return _evaluate(state, state.values)


def rhs_rho(state: FlowState):
    """``d rho / dt`` at every node."""
    if state.representation != "rho":
        raise ContractError("rhs_rho needs a rho-form state")
    return _evaluate(state, state.values)


def stable_dt(state: FlowState, h: Optional[float] = None, safety: float = SAFETY) -> float:
    """Explicit step bound ``safety h^2 / (2 max D)`` from the local diffusion coefficient.

    ``D = 1/(psi (1 + gamma_theta^2)^{3/2})`` at each face (``phi^2/W^3`` in
    rho-form).  For a uniform slope this is
    ``safety h^2 psi (1 + gamma_theta^2)^{3/2} / 2``.
    """
    p = state.profile
    h = p.h if h is None else h
    args = _kernel_args(state)
    scale = _k.max_diffusivity(p.values, args[0], args[1], args[3], *args[4:10])
    if p.domain == "colatitude":
        scale *= state.n
    return safety * h * h / (2.0 * scale)


def step(state: FlowState, dt: float, tol: float = 1e-8, dt_min: float = 1e-14):
    """One accepted explicit midpoint step with step-doubling error control.

    Returns ``(new_state, dt_next)``.  A trial whose error estimate exceeds
    ``tol`` (max norm), or whose stages leave the admissible range, is
    retried with half the step.  Raises ``BlowupSuspected`` once the trial
    step falls below ``dt_min``.
    """
    if not dt > 0:
        raise ContractError("dt must be positive")
    v, t = state.values, state.t
    args = _kernel_args(state)
    lo, hi = _admissible(state)
    slack = _slack(lo, hi)
    fine = np.empty_like(v)
    while True:
        if dt < dt_min:
            raise BlowupSuspected(t, dt)
        err = _k.doubling_step(v, dt, *args, lo - slack, hi + slack, fine)
        if err <= tol:
            break
        dt *= 0.5
    _check_range(state, fine)
    grow = 2.0 if err == 0.0 else min(2.0, max(1.0, 0.9 * (tol / err) ** (1.0 / 3.0)))
    return state.advanced(fine, t + dt), dt * grow


@dataclass
class Trajectory:
    """Output of ``run_flow``.

    ``steps`` holds one row ``(t, sup|grad|, argmax node)`` per accepted step
    (row 0 is the initial state); ``snapshots`` holds the states at the
    requested dump times plus the initial and final states.
    """

    snapshots: list
    reason: str
    message: str
    final: FlowState
    g_max: float
    step_t: np.ndarray
    step_grad: np.ndarray
    step_node: np.ndarray
    records: list = field(default_factory=list)
    accepted: int = 0

    @property
    def t_stop(self):
        return self.final.t


def _grad_sup(profile):
    g = np.abs(discrete_gradient(profile))
    j = int(np.argmax(g))
    return float(g[j]), j


def run_flow(
    initial: FlowState,
    t_end: float,
    hooks: Sequence[Callable] = (),
    cadence: int = 1,
    dump_times: Sequence[float] = (),
    g_max: float = 1e3,
    dt_min: float = 1e-14,
    step_tol: float = 1e-8,
    safety: float = SAFETY,
    max_steps: Optional[int] = None,
) -> Trajectory:
    """Advance ``initial`` to ``t_end`` or until a stopping rule fires.

    Each hook is called as ``hook(state)`` on the initial state and then
    every ``cadence`` accepted steps (and on the final state); non-``None``
    return values are collected in ``Trajectory.records``.
    """
    if not t_end > initial.t:
        raise ContractError("t_end must exceed the initial time")
    dumps = sorted(float(x) for x in dump_times if initial.t < x <= t_end)
    state = initial
    records = []

    def call_hooks(s):
        for hook in hooks:
            rec = hook(s)
            if rec is not None:
                records.append(rec)

    call_hooks(state)
    snapshots = [state]
    gsup, node = _grad_sup(state.profile)
    ts, gs, nodes = [state.t], [gsup], [node]
    reason, message = REACHED, ""
    dt = stable_dt(state, safety=safety)
    accepted = 0
    last_hooked = 0
    if gsup > g_max:
        reason, message = BLOWUP, f"sup|grad| = {gsup:.6g} exceeds g_max at t = {state.t:.17g}"
    while reason == REACHED and state.t < t_end:
        target = dumps[0] if dumps else t_end
        try:
            trial = min(dt, stable_dt(state, safety=safety), target - state.t)
            state, dt = step(state, trial, tol=step_tol, dt_min=dt_min)
        except BlowupSuspected as exc:
            reason, message = BLOWUP, str(exc)
            break
        except RangeError as exc:
            reason, message = RANGE, str(exc)
            break
        accepted += 1
        if dumps and state.t >= dumps[0] - 1e-15 * max(1.0, abs(dumps[0])):
            state = replace(state, t=dumps.pop(0))
            snapshots.append(state)
        gsup, node = _grad_sup(state.profile)
        ts.append(state.t)
        gs.append(gsup)
        nodes.append(node)
        if accepted % cadence == 0:
            call_hooks(state)
            last_hooked = accepted
        if gsup > g_max:
            reason = BLOWUP
            message = f"sup|grad| = {gsup:.6g} exceeds g_max at t = {state.t:.17g} (node {node})"
        elif max_steps is not None and accepted >= max_steps:
            message = f"stopped after max_steps = {max_steps}"
            break
    if last_hooked != accepted:
        call_hooks(state)
    if snapshots[-1] is not state:
        snapshots.append(state)
    return Trajectory(
        snapshots, reason, message, state, g_max,
        np.array(ts), np.array(gs), np.array(nodes, dtype=int), records, accepted,
    )


def extend_odd(arc_profile: Profile, k: Optional[int] = None) -> Profile:
    """Tile the circle with ``2k`` alternately reflected copies of an arc profile.

    Segment ``j`` (``[j pi/k, (j+1) pi/k)``) holds ``f(theta - j pi/k)`` for
    even ``j`` and ``-f((j+1) pi/k - theta)`` for odd ``j``.
    """
    if arc_profile.domain != "arc":
        raise ContractError("extend_odd needs an arc profile")
    k = arc_profile.k if k is None else int(k)
    if k != arc_profile.k:
        raise ContractError(f"profile lives on [0, pi/{arc_profile.k}], not [0, pi/{k}]")
    v = arc_profile.values
    if v[0] != 0.0 or v[-1] != 0.0:
        raise ContractError("arc profile must vanish at both ends")
    forward = v[:-1]
    backward = -v[::-1][:-1]
    tiles = [forward if j % 2 == 0 else backward for j in range(2 * k)]
    return Profile("periodic", np.concatenate(tiles), arc_profile.representation)
