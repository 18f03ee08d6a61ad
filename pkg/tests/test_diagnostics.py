import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warpflow.diagnostics import (BarrierParams, DiagnosticsRecord, InfeasibleError, Modulus, area,
                                  detect_blowup, diagnostics_hook, fit_decay_rate, fit_delta, gradient_bound,
                                  gradient_sup, kappa, min_holder_coeff, modulus_of_continuity, record,
                                  sphere_measure, volume, z_monitor)
from warpflow.errors import ContractError
from warpflow.flow import FlowState, make_profile, run_flow
from warpflow.warp import WarpFunction

SPHERE = WarpFunction("sphere-sine", (0.3, 2.8))


# ------------------------------------------------------------ area / volume

def test_sphere_measure():
    assert sphere_measure(0) == 2.0
    assert sphere_measure(1) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_measure(2) == pytest.approx(4 * math.pi, rel=1e-15)


def test_area_and_volume_of_constant_graphs():
    c, a = 1.2, 0.3
    p = make_profile("periodic", 64, c)
    assert area(p, SPHERE) == pytest.approx(2 * math.pi * math.sin(c), rel=1e-14)
    assert volume(p, SPHERE) == pytest.approx(2 * math.pi * (math.cos(a) - math.cos(c)), rel=1e-12)
    q = make_profile("colatitude", 64, c)
    assert area(q, SPHERE, 2) == pytest.approx(4 * math.pi * math.sin(c) ** 2, rel=1e-7)
    assert volume(q, SPHERE, 2) == pytest.approx(
        4 * math.pi * ((c - a) / 2 - (math.sin(2 * c) - math.sin(2 * a)) / 4), rel=1e-7)


def test_area_and_volume_against_dense_quadrature():
    x = np.linspace(0, 2 * math.pi, 1_000_000, endpoint=False)
    h = x[1] - x[0]
    rho = 1.5 + 0.3 * np.cos(2 * x)
    drho = -0.6 * np.sin(2 * x)
    area_ref = h * np.sum(np.hypot(np.sin(rho), drho))
    vol_ref = h * np.sum(np.cos(0.3) - np.cos(rho))
    p = make_profile("periodic", 256, lambda th: 1.5 + 0.3 * np.cos(2 * th))
    assert abs(area(p, SPHERE) - area_ref) <= 1e-8
    assert abs(volume(p, SPHERE) - vol_ref) <= 1e-8


def test_area_rejects_gamma_profiles():
    with pytest.raises(ContractError):
        area(make_profile("periodic", 32, 0.0, "gamma"), SPHERE)


def test_area_nonincreasing_along_run():
    s = FlowState(make_profile("periodic", 64, lambda th: 1.5 + 0.3 * np.cos(2 * th)), 0.0, 1, SPHERE)
    areas = []
    run_flow(s, 0.3, hooks=[lambda x: areas.append(area(x.profile, SPHERE))])
    assert np.all(np.diff(areas) <= 1e-10)


# ------------------------------------------------------------------ modulus

def brute_modulus(p, n=None):
    v, N = p.values, p.N
    if p.domain == "periodic":
        om = np.zeros(N // 2 + 1)
        for i in range(N):
            for j in range(N):
                lag = min(abs(i - j), N - abs(i - j))
                om[lag] = max(om[lag], abs(v[i] - v[j]))
        return om
    om = np.zeros(N + 1)
    for i in range(N + 1):
        for j in range(N + 1):
            d = abs(v[i] - v[j])
            if p.domain == "arc":
                lags = [abs(i - j)]
            else:
                lo, hi = abs(i - j), min(i + j, 2 * N - i - j)
                lags = [lo, hi] if n == 1 else range(lo, hi + 1)
            for lag in lags:
                om[lag] = max(om[lag], d)
    return om


@pytest.mark.parametrize("domain,n", [("periodic", None), ("arc", None), ("colatitude", 1), ("colatitude", 2)])
def test_modulus_equals_brute_force(domain, n):
    rng = np.random.default_rng(7)
    N = 48
    rep = "gamma" if domain == "arc" else "rho"
    p = make_profile(domain, N, rng.standard_normal(N if domain == "periodic" else N + 1), rep)
    m = modulus_of_continuity(p, n=n) if domain == "colatitude" else modulus_of_continuity(p)
    assert np.array_equal(m.omega, brute_modulus(p, n))
    assert np.allclose(m.lags, p.h * np.arange(m.omega.size), rtol=0, atol=1e-15)


def test_modulus_of_cosine():
    p = make_profile("periodic", 512, np.cos)
    m = modulus_of_continuity(p)
    exact = 2 * np.sin(m.lags / 2)
    even = np.arange(m.omega.size) % 2 == 0
    assert np.max(np.abs(m.omega[even] - exact[even])) <= 1e-12
    # at odd lags the maximizing pair sits half a cell off the grid
    gap = exact[~even] - m.omega[~even]
    assert np.all(gap >= -1e-12) and np.max(gap) <= p.h ** 2
    assert np.all(np.diff(m.omega) >= 0)


def test_modulus_of_constant_is_zero():
    assert np.all(modulus_of_continuity(make_profile("periodic", 64, 1.0)).omega == 0)


def test_holder_coefficient_of_cosine():
    m = modulus_of_continuity(make_profile("periodic", 512, np.cos))
    lam = min_holder_coeff(m, 0.5)
    assert lam == pytest.approx(np.max(m.omega[1:] / np.sqrt(m.lags[1:])), rel=1e-15)
    # the ratio 2 sin(x/2)/sqrt(x) peaks near x = 2.33, not at the smallest lag
    x = np.linspace(1e-3, math.pi, 100_001)
    peak = np.max(2 * np.sin(x / 2) / np.sqrt(x))
    assert lam == pytest.approx(peak, abs=1e-4)
    assert lam > m.omega[1] / math.sqrt(m.lags[1])
    with pytest.raises(ContractError):
        min_holder_coeff(m, 1.5)


def test_fit_delta_matches_dense_scan():
    m = modulus_of_continuity(make_profile("periodic", 256, lambda th: 0.05 * np.cos(th)))
    lam_bar = 0.04
    d = fit_delta(m, lam_bar)
    grid = np.geomspace(1e-12, 1 - 1e-12, 20001)
    th, om = m.lags[1:], m.omega[1:]
    ok = [np.all(om <= 2 * lam_bar * (np.sqrt(x + th) - np.sqrt(x))) for x in grid]
    best = grid[np.flatnonzero(ok)].max()
    assert best <= d + 1e-9
    assert d <= grid[np.searchsorted(grid, best) + 1]
    with pytest.raises(InfeasibleError):
        fit_delta(m, 1e-4)


# ------------------------------------------------------------ barrier

def test_kappa_example():
    bp = BarrierParams(0.25, 0.1, 0.05)
    assert kappa(bp, 0.75, 2.0) == pytest.approx(0.2 * 0.5 * math.exp(-0.1), rel=1e-15)
    assert kappa(bp, 0.75, 2.0) == pytest.approx(0.0904837, abs=1e-7)


def test_barrier_params_validated():
    with pytest.raises(ContractError):
        BarrierParams(1.0, 0.1, 0.1)
    with pytest.raises(ContractError):
        BarrierParams(0.5, -0.1, 0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 0.99), st.floats(1e-3, 10), st.floats(1e-3, 5),
       st.floats(0, 3), st.floats(1e-6, 3), st.floats(0, 5), st.floats(1e-6, 5))
def test_kappa_monotone(delta, lam, eta, theta, dtheta, t, dt):
    bp = BarrierParams(delta, lam, eta)
    assert kappa(bp, theta + dtheta, t) > kappa(bp, theta, t)
    assert kappa(bp, theta, t + dt) <= kappa(bp, theta, t)


def test_z_monitor_constant_profile_tie_break(cosh_transform):
    t = cosh_transform
    s = FlowState(make_profile("periodic", 32, 0.2, "gamma"), 0.0, 1, t.warp, t)
    z = z_monitor([s, s], BarrierParams(0.5, 0.1, 0.1))
    assert z == (0.0, 0.0, 0, 0)


def test_z_monitor_consistent_with_gradient(cosh_transform):
    t = cosh_transform
    bp = BarrierParams(0.5, 0.1, 0.1)
    s0 = FlowState(make_profile("periodic", 128, lambda th: 0.005 * np.sin(th), "gamma"), 0.0, 1, t.warp, t)
    traj = run_flow(s0, 0.5, dump_times=[0.1, 0.2, 0.3, 0.4])
    h = s0.profile.h
    slope = min(kappa(bp, h, s.t) / h for s in traj.snapshots)
    assert max(gradient_sup(s.profile) for s in traj.snapshots) < slope
    assert z_monitor(traj, bp).value <= 0


def test_z_monitor_needs_gamma_periodic():
    s = FlowState(make_profile("periodic", 32, 1.0), 0.0, 1, SPHERE)
    with pytest.raises(ContractError):
        z_monitor([s], BarrierParams(0.5, 0.1, 0.1))


def test_gradient_bound_formula():
    bp = BarrierParams(0.25, 0.1, 0.5)
    assert gradient_bound(bp, SPHERE, 2.0) == pytest.approx(SPHERE.sup_phi() * 0.2 * math.exp(-1.0), rel=1e-14)


# ------------------------------------------------------------- rate fitter

def test_fit_decay_rate_synthetic():
    t = np.linspace(0, 10, 101)
    fit = fit_decay_rate(t, 3 * np.exp(-0.3 * t))
    assert abs(fit.C - 3) <= 1e-6 and abs(fit.eta - 0.3) <= 1e-6 and fit.r2 == pytest.approx(1, abs=1e-12)
    fit = fit_decay_rate(t, 3 * np.exp(-0.3 * t), window=(5, 10))
    assert abs(fit.eta - 0.3) <= 1e-9
    assert fit_decay_rate(t, np.full(t.size, 2.0)) == (0.0, pytest.approx(2.0), 1.0)
    with pytest.raises(ContractError):
        fit_decay_rate(t, -np.ones(t.size))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.floats(-2, 2))
def test_fit_decay_rate_recovers_any_exponential(C, eta):
    t = np.linspace(0, 5, 41)
    fit = fit_decay_rate(t, C * np.exp(-eta * t))
    assert fit.C == pytest.approx(C, rel=1e-9) and fit.eta == pytest.approx(eta, abs=1e-9)


# ------------------------------------------------------------- records

def test_detect_blowup_reports_first_crossing():
    s = FlowState(make_profile("periodic", 64, lambda th: 1.5 + 0.3 * np.cos(2 * th)), 0.0, 1, SPHERE)
    assert detect_blowup(run_flow(s, 0.01)) is None
    hit = detect_blowup(run_flow(s, 1.0, g_max=0.5))
    assert hit.t == 0.0 and hit.cause == "gradient"


def test_record_fields(cosh_transform):
    s = FlowState(make_profile("periodic", 64, lambda th: 1.5 + 0.3 * np.cos(2 * th)), 0.0, 1, SPHERE)
    r = record(s)
    assert r.max_z is None and r.osc == pytest.approx(0.6)
    assert DiagnosticsRecord.FIELDS == ("t", "area", "volume", "sup_grad", "osc", "holder_half", "max_z")
    assert len(r.row()) == 7
    t = cosh_transform
    g = FlowState(make_profile("periodic", 64, lambda th: 0.1 * np.cos(th), "gamma"), 0.0, 1, t.warp, t)
    rec = diagnostics_hook(BarrierParams(0.5, 1.0, 0.1), with_volume=False)(g)
    assert math.isnan(rec.volume) and rec.max_z <= 0
    assert isinstance(Modulus(np.zeros(1), np.zeros(1)), tuple)
