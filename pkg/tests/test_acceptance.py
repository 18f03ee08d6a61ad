"""Acceptance criteria 1-12, each at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line (shown in the "acceptance
criteria" section of the pytest summary) and then asserts the verdict.
Criteria that cannot be met are marked ``xfail(strict=True)``: they still
run in full and print ``FAIL``, and the suite turns red if they start passing.
"""

import filecmp
import io
import math
from dataclasses import replace

import numpy as np
import pytest

from warpflow import blowup as bu
from warpflow.cli import execute_run, main
from warpflow.config import parse_config
from warpflow.diagnostics import area, fit_decay_rate, modulus_of_continuity, volume
from warpflow.flow import REACHED, FlowState, make_profile, rhs_gamma, rhs_rho, run_flow
from warpflow.warp import WarpFunction, build_transform, check_condition2

from conftest import CATALOG, smooth_random

pytestmark = pytest.mark.acceptance

SPHERE = WarpFunction("sphere-sine", (0.3, 2.8))
COSH = WarpFunction("cosh", (-1.0, 1.0))


def conservation_profile(theta):
    return 1.5 + 0.3 * np.cos(2 * theta)


CONSERVATION_CONFIG = """
[warp]
kind = sphere-sine
interval = [0.3, 2.8]
[flow]
grid_n = 512
t_end = 2
[initial]
kind = fourier
mean = 1.5
cos = [0, 0.3]
[diagnostics]
cadence = 100
"""

# cosh warp (convexity condition fails); Holder-1/2 coefficient of rho0 is about 0.04
HOLDER_CONFIG = """
[warp]
kind = cosh
interval = [-1, 1]
[flow]
representation = gamma
grid_n = 512
t_end = 3
[initial]
kind = fourier
mean = 0.0
cos = [0.02]
sin = [0, 0.01]
[diagnostics]
cadence = 200
barrier = auto
"""


@pytest.fixture(scope="module")
def conservation_runs():
    """The criterion-4 run at N = 512 (area every step) and N = 1024 (end volumes)."""
    out = {}
    for N in (512, 1024):
        s0 = FlowState(make_profile("periodic", N, conservation_profile), 0.0, 1, SPHERE)
        areas = []
        hooks = [lambda s: areas.append(area(s.profile, SPHERE))] if N == 512 else []
        traj = run_flow(s0, 2.0, hooks=hooks)
        v0, v1 = volume(s0.profile, SPHERE), volume(traj.final.profile, SPHERE)
        out[N] = dict(traj=traj, areas=np.array(areas), drift=abs(v1 - v0) / abs(v0))
    return out


# --------------------------------------------------------------------- 1

def test_criterion_01_transform_round_trip(verdict):
    worst_rt = worst_psi = 0.0
    rng = np.random.default_rng(11)
    for w in CATALOG.values():
        t = build_transform(w)
        rho = rng.uniform(*w.interval, 1000)
        g = t.gamma(rho)
        worst_rt = max(worst_rt, float(np.max(np.abs(t.inverse(g) - rho))))
        worst_psi = max(worst_psi, float(np.max(np.abs(t.psi(g) - w.phi(rho)))))
    ok = worst_rt <= 1e-10 and worst_psi <= 1e-10
    assert verdict(1, ok, f"max round-trip error {worst_rt:.3e}, max |psi(Gamma) - phi| {worst_psi:.3e} "
                          f"over {len(CATALOG)} warps x 1000 samples (tol 1e-10)")


# --------------------------------------------------------------------- 2

def test_criterion_02_convexity_verdicts(verdict):
    s = check_condition2(SPHERE)
    c = check_condition2(COSH)
    ok = s.holds and abs(s.min_value - 1) <= 1e-12 and not c.holds and abs(c.min_value + 1) <= 1e-12
    assert verdict(2, ok, f"sphere-sine {'HOLDS' if s.holds else 'FAILS'} min {s.min_value!r}; "
                          f"cosh {'HOLDS' if c.holds else 'FAILS'} min {c.min_value!r}")


# --------------------------------------------------------------------- 3

def test_criterion_03_stationarity(verdict):
    s0 = FlowState(make_profile("periodic", 256, 1.2), 0.0, 1, SPHERE)
    traj = run_flow(s0, 1.0, dump_times=[0.25, 0.5, 0.75])
    dev = max(float(np.max(np.abs(s.values - 1.2))) for s in traj.snapshots)
    ok = traj.reason == REACHED and traj.final.t == 1.0 and dev <= 1e-8
    assert verdict(3, ok, f"sup |rho - 1.2| = {dev:.3e} over t in [0, 1] (tol 1e-8)")


# --------------------------------------------------------------------- 4

def test_criterion_04_conservation(conservation_runs, verdict):
    d512, d1024 = conservation_runs[512]["drift"], conservation_runs[1024]["drift"]
    ratio = d512 / d1024
    rise = float(np.max(np.diff(conservation_runs[512]["areas"])))
    ok = d512 <= 1e-4 and 3 <= ratio <= 5 and rise <= 1e-10
    assert verdict(4, ok, f"volume drift {d512:.3e} (N=512), {d1024:.3e} (N=1024), ratio {ratio:.3f} in [3, 5]; "
                          f"largest per-step area change {rise:.3e} (slack 1e-10)")


# --------------------------------------------------------------------- 5

def test_criterion_05_convergence(conservation_runs, verdict):
    traj = conservation_runs[512]["traj"]
    osc = float(np.ptp(traj.final.values))
    fit = fit_decay_rate(traj.step_t, traj.step_grad, window=(1.0, 2.0))
    ok = traj.reason == REACHED and osc <= 1e-3 and fit.r2 >= 0.99 and fit.eta > 0
    assert verdict(5, ok, f"oscillation {osc:.3e} at t=2 (tol 1e-3); decay fit over [1, 2]: "
                          f"eta_hat {fit.eta:.4f}, r2 {fit.r2:.6f}")


# --------------------------------------------------------------------- 6

def test_criterion_06_holder_regime(verdict):
    cfg = parse_config(HOLDER_CONFIG)
    result = execute_run(cfg)
    traj = result.trajectory
    lam = min(r.holder_half for r in result.records[:1])
    late = traj.step_t >= 0.1
    grads = traj.step_grad[late]
    monotone = bool(np.all(np.diff(grads) <= 0)) and bool(np.all(grads < traj.step_grad[0]))
    zs = [r.max_z for r in result.records]
    zmax = max(zs) if all(z is not None for z in zs) else math.inf
    ok = (not check_condition2(COSH).holds and lam <= 0.05 and traj.reason == REACHED
          and result.barrier is not None and monotone and zmax <= 1e-8)
    bp = result.barrier
    fitted = f"(delta, lam_bar, eta) = ({bp.delta:.4g}, {bp.lam_bar:.4g}, {bp.eta:.4g})" if bp else "no feasible fit"
    assert verdict(6, ok, f"lambda {lam:.4f} <= 0.05; gradient monotone below initial after t=0.1: {monotone}; "
                          f"{fitted}; max Z {zmax:.3e} over {len(zs)} samples (tol 1e-8)")


# --------------------------------------------------------------------- 7

def test_criterion_07_representation_equivalence(verdict):
    rng = np.random.default_rng(2024)
    ratios, exact = {}, {}
    for name, w in CATALOG.items():
        t = build_transform(w)
        a, b = w.interval
        f = smooth_random(rng, amplitude=0.1 * (b - a), mean=0.5 * (a + b))
        errs = []
        for N in (128, 256):
            rho = f(make_profile("periodic", N, 0.0).theta)
            r = rhs_rho(FlowState(make_profile("periodic", N, rho), 0.0, 1, w))
            g = rhs_gamma(FlowState(make_profile("periodic", N, t.gamma(rho), "gamma"), 0.0, 1, w, t))
            errs.append(float(np.max(np.abs(w.phi(rho) * g - r))))
        if errs[0] <= 1e-12:
            # linear Gamma (constant warp): the two stencils agree to rounding
            exact[name] = errs[0]
        else:
            ratios[name] = errs[0] / errs[1]
    ok = len(ratios) >= 5 and all(3.5 <= q <= 4.5 for q in ratios.values())
    detail = ", ".join(f"{k} {v:.3f}" for k, v in ratios.items())
    same = "".join(f"; {k} exact to {v:.1e}" for k, v in exact.items())
    assert verdict(7, ok, f"error ratio h -> h/2 in [3.5, 4.5]: {detail}{same}")


# --------------------------------------------------------------------- 8

def test_criterion_08_subsolution(blowup_search, cosh_transform, verdict):
    sp = blowup_search.params
    rep = bu.verify_subsolution(sp, cosh_transform)
    bad = bu.verify_subsolution(replace(sp, c1=1e-3), cosh_transform)
    worst = max(rep.max_residual_1, rep.max_residual_2)
    ok = rep.passed and worst <= 0 and not bad.passed and bad.max_residual_1 > 0
    assert verdict(8, ok, f"k={sp.k}, tau={sp.tau:.4e}: max residual {worst:.3e} on {rep.grid[0]}x{rep.grid[1]} "
                          f"grid; c1=1e-3 gives zeta1 residual {bad.max_residual_1:.3e} (fail detected)")


# --------------------------------------------------------------------- 9

@pytest.mark.xfail(strict=True, reason=(
    "the feasible parameters have k ~ 1.4e11 and tau ~ 1e-28; the initial data's end slope is ~1e9 "
    "so every resolvable grid exceeds G_max = 1e3 at t = 0, and the odd extension needs 2kN ~ 1e14 nodes"))
def test_criterion_09_blowup(blowup_search, cosh_transform, verdict):
    sp = blowup_search.params
    runs = bu.refinement_study(sp, cosh_transform, (256, 512, 1024), 1e3, threads=3)
    before_tau = all(r.T_hat is not None and r.T_hat < sp.tau for r in runs)
    var = bu.relative_variation(runs[-2].T_hat, runs[-1].T_hat)
    comparison = all(r.comparison_ok for r in runs)
    extension = all(r.extension_consistent for r in runs[-2:])
    ok = before_tau and var < 0.05 and comparison and extension
    hats = ", ".join(f"N={r.grid_n}: {r.T_hat!r}" for r in runs)
    assert verdict(9, ok, f"T_hat {hats} (tau {sp.tau:.3e}); variation {var} (need < 5%); "
                          f"comparison ok: {comparison}; extension within 5%: {extension} "
                          f"({runs[-1].extension_note or 'run'})")


# -------------------------------------------------------------------- 10

def _brute_modulus(v):
    N = v.size
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    lag = np.minimum(np.abs(i - j), N - np.abs(i - j))
    om = np.zeros(N // 2 + 1)
    np.maximum.at(om, lag.ravel(), np.abs(v[:, None] - v[None, :]).ravel())
    return om


def test_criterion_10_brute_force_equality():
    p = make_profile("periodic", 512, np.cos)
    m = modulus_of_continuity(p)
    assert np.array_equal(m.omega, _brute_modulus(p.values))
    even = np.arange(m.omega.size) % 2 == 0
    assert np.max(np.abs(m.omega[even] - 2 * np.sin(m.lags[even] / 2))) <= 1e-12


@pytest.mark.xfail(strict=True, reason=(
    "at odd lags no grid pair is centred on the maximizer, so the grid supremum of |cos(x+l h) - cos x| "
    "falls short of 2 sin(l h / 2) by up to ~4e-5 at N = 512; matching the brute-force scan exactly "
    "rules out closing that gap"))
def test_criterion_10_oracle_equality(verdict):
    p = make_profile("periodic", 512, np.cos)
    m = modulus_of_continuity(p)
    brute = np.array_equal(m.omega, _brute_modulus(p.values))
    err = np.abs(m.omega - 2 * np.sin(m.lags / 2))
    even = np.arange(err.size) % 2 == 0
    ok = brute and float(err.max()) <= 1e-12
    assert verdict(10, ok, f"brute-force scan equal: {brute}; |omega - 2 sin(theta/2)| max {err[even].max():.2e} "
                           f"at even lags, {err[~even].max():.2e} at odd lags (tol 1e-12)")


# -------------------------------------------------------------------- 11

def test_criterion_11_rate_fitter(verdict):
    t = np.linspace(0.0, 10.0, 201)
    fit = fit_decay_rate(t, 3.0 * np.exp(-0.3 * t))
    ok = abs(fit.C - 3.0) <= 1e-6 and abs(fit.eta - 0.3) <= 1e-6
    assert verdict(11, ok, f"C = {fit.C!r}, eta = {fit.eta!r} (tol 1e-6)")


# -------------------------------------------------------------------- 12

def test_criterion_12_determinism(tmp_path, verdict):
    cfg = tmp_path / "conservation.ini"
    cfg.write_text(CONSERVATION_CONFIG, encoding="utf-8")
    for d in ("a", "b"):
        rc = main(["run", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / d)], stream=io.StringIO())
        assert rc == 0
    a, b = tmp_path / "a" / "diagnostics.csv", tmp_path / "b" / "diagnostics.csv"
    same = filecmp.cmp(a, b, shallow=False)
    assert verdict(12, same, f"diagnostics.csv byte-identical across two seeded runs: {same} "
                             f"({a.stat().st_size} bytes)")
