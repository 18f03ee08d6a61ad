"""Command line entry point: ``warpflow {check-warp,run,modulus,blowup,transform}``.

Exit status 0 on success, 1 on numeric or experiment failure, 2 on usage
or configuration errors.
"""

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import blowup as bu
from .config import RunConfig, barrier_values, initial_values, load_config
from .diagnostics import (BarrierParams, DiagnosticsRecord, InfeasibleError, fit_barrier, fit_decay_rate,
                          gamma_state, min_holder_coeff, modulus_of_continuity, record, rho_profile, z_monitor)
from .errors import ConfigError, ContractError, DomainError, SearchFailure, WarpflowError
from .flow import BLOWUP, REACHED, FlowState, Profile, make_profile, run_flow
from .io import read_profile_csv, short, write_csv, write_snapshots
from .warp import WarpFunction, build_transform, check_condition2

OK, FAILURE, USAGE = 0, 1, 2
CONVERGED_OSC = 1e-3


class Console:
    """Collects report lines, echoing them to stdout."""

    def __init__(self, stream=None):
        self.lines = []
        self.stream = stream if stream is not None else sys.stdout

    def __call__(self, line=""):
        self.lines.append(line)
        print(line, file=self.stream)

    def save(self, path):
        Path(path).write_text("\n".join(self.lines) + "\n", encoding="utf-8")


def _out_dir(cfg: RunConfig):
    out = Path(cfg.out_dir)
    if not out.is_absolute() and cfg.source:
        out = Path.cwd() / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def make_warp(cfg: RunConfig) -> WarpFunction:
    try:
        return WarpFunction(cfg.warp.kind, cfg.warp.interval, cfg.warp.coefficients)
    except (DomainError, ContractError) as exc:
        raise ConfigError(f"[warp] {exc}") from None


def make_transform(cfg: RunConfig, w: WarpFunction, base=None):
    base = cfg.warp.base if base is None else base
    try:
        return build_transform(w, base)
    except DomainError as exc:
        raise ConfigError(f"[warp] base: {exc}") from None


# --------------------------------------------------------------- check-warp

def cmd_check_warp(cfg: RunConfig, say=None) -> int:
    say = say or Console()
    w = make_warp(cfg)
    c2 = check_condition2(w)
    t = make_transform(cfg, w)
    verdict = "HOLDS" if c2.holds else "FAILS"
    say(f"warp: {w.kind} on [{short(w.interval[0])}, {short(w.interval[1])}]"
        + (f" coefficients {list(w.coefficients)}" if w.kind in ("constant", "even-polynomial") else ""))
    say(f"convexity condition phi'^2 - phi phi'' >= 0: {verdict} (min {c2.min_value:.12g} at rho = {c2.argmin:.12g})")
    say(f"base point {short(t.base)}{' (default: midpoint of I)' if t.base_is_default else ''}")
    say(f"gamma range J = [{short(t.J[0])}, {short(t.J[1])}]")
    return OK


# ---------------------------------------------------------------- transform

def cmd_transform(cfg: RunConfig, out: Path, say=None) -> int:
    say = say or Console()
    w = make_warp(cfg)
    t = make_transform(cfg, w)
    rho = np.linspace(*w.interval, cfg.transform_points)
    g = t.gamma(rho)
    rows = zip(rho, g, t.psi(g), t.dpsi(g), t.inverse(g))
    path = write_csv(out / "transform.csv", ["rho", "gamma", "psi", "dpsi", "rho_roundtrip"], rows)
    say(f"base point {short(t.base)}{' (default: midpoint of I)' if t.base_is_default else ''}; "
        f"J = [{short(t.J[0])}, {short(t.J[1])}]")
    say(f"wrote {path}")
    return OK


# -------------------------------------------------------------------- run

@dataclass
class RunResult:
    trajectory: object
    records: list
    barrier: object
    barrier_note: str
    summary: list


def initial_state(cfg: RunConfig, w: WarpFunction, t=None) -> FlowState:
    fc = cfg.flow
    theta = make_profile(fc.domain, fc.grid_n, 0.0, "rho", fc.k).theta
    rho0 = initial_values(cfg, theta)
    if not w.contains(rho0):
        raise ConfigError("[initial] profile leaves the warp interval I")
    if fc.representation == "gamma":
        values = t.gamma(rho0)
    else:
        values = rho0
    profile = make_profile(fc.domain, fc.grid_n, values, fc.representation, fc.k)
    return FlowState(profile, 0.0, fc.n, w, t)


def execute_run(cfg: RunConfig) -> RunResult:
    """Flow run with diagnostics at the configured cadence (no file output)."""
    fc = cfg.flow
    w = make_warp(cfg)
    barrier = barrier_values(cfg)
    needs_gamma = fc.representation == "gamma" or barrier is not None
    t = make_transform(cfg, w) if needs_gamma else None
    state0 = initial_state(cfg, w, t)
    fixed = BarrierParams(*barrier) if isinstance(barrier, tuple) else None
    if barrier is not None and fc.domain != "periodic":
        raise ConfigError("[diagnostics] barrier monitoring needs the periodic domain")

    kept = []

    def hook(state):
        rec = record(state, fixed, cfg.diagnostics.volume)
        kept.append(state)
        return rec

    traj = run_flow(state0, fc.t_end, hooks=[hook], cadence=cfg.diagnostics.cadence,
                    dump_times=fc.dump_times, g_max=fc.g_max, dt_min=fc.dt_min, step_tol=fc.step_tol)
    records = list(traj.records)
    note = ""
    bp = fixed
    if barrier == "auto":
        ts = np.array([r.t for r in records])
        gs = np.array([r.sup_grad for r in records])
        try:
            fit = fit_barrier(rho_profile(state0), gamma_state(state0).profile, w, ts, gs,
                              window=(0.5 * ts[-1], ts[-1]))
            bp = fit.params
            note = (f"barrier fitted: delta={short(bp.delta)} lam_bar={short(bp.lam_bar)} eta={short(bp.eta)} "
                    f"(delta_max={short(fit.delta_fit)}, lambda={short(fit.lam)})")
        except (InfeasibleError, ContractError) as exc:
            note = f"barrier fit infeasible: {exc}"
        if bp is not None:
            records = [DiagnosticsRecord(r.t, r.area, r.volume, r.sup_grad, r.osc, r.holder_half,
                                         z_monitor([gamma_state(s)], bp).value)
                       for r, s in zip(records, kept)]
    return RunResult(traj, records, bp, note, summarize(traj, records, note))


def summarize(traj, records, note=""):
    lines = [f"termination: {traj.reason}" + (f" ({traj.message})" if traj.message else "")]
    first, last = records[0], records[-1]
    if traj.reason == BLOWUP:
        from .diagnostics import detect_blowup
        hit = detect_blowup(traj)
        lines.append(f"blow-up suspected at T_hat = {short(hit.t)} (node {hit.node}, {hit.cause})")
    elif traj.reason == REACHED:
        state = "converged" if last.osc <= CONVERGED_OSC else "not converged"
        lines.append(f"{state}: final oscillation {short(last.osc)}")
    ts = np.array([r.t for r in records])
    gs = np.array([r.sup_grad for r in records])
    window = (0.5 * ts[-1], ts[-1])
    sel = (ts >= window[0]) & (ts <= window[1])
    if traj.reason == REACHED and np.count_nonzero(sel) >= 2 and np.all(gs[sel] > 0):
        fit = fit_decay_rate(ts, gs, window)
        lines.append(f"decay rate of sup|grad rho| over t in [{short(window[0])}, {short(window[1])}]: "
                     f"eta_hat = {short(fit.eta)}, C = {short(fit.C)}, r2 = {short(fit.r2)}")
    elif traj.reason == REACHED:
        lines.append("decay rate: not fitted (gradient identically zero or too few samples)")
    if math.isfinite(first.volume) and math.isfinite(last.volume):
        drift = 0.0 if last.volume == first.volume else abs(last.volume - first.volume) / abs(first.volume)
        lines.append(f"volume drift: {short(drift)} (relative)")
    lines.append(f"area: {short(first.area)} -> {short(last.area)}")
    if note:
        lines.append(note)
    zs = [r.max_z for r in records if r.max_z is not None]
    if zs:
        lines.append(f"max Z over diagnostics samples: {short(max(zs))}")
    lines.append(f"accepted steps: {traj.accepted}")
    return lines


def write_run_outputs(result: RunResult, out: Path):
    write_csv(out / "diagnostics.csv", DiagnosticsRecord.FIELDS, (r.row() for r in result.records))
    snaps = result.trajectory.snapshots
    write_snapshots(out / "snapshots.csv", snaps[0].profile.theta, snaps)


def cmd_run(cfg: RunConfig, out: Path, say=None) -> int:
    say = say or Console()
    try:
        result = execute_run(cfg)
    except WarpflowError as exc:
        if isinstance(exc, ConfigError):
            raise
        say(f"run failed: {exc}")
        say.save(out / "summary.txt")
        return FAILURE
    write_run_outputs(result, out)
    for line in result.summary:
        say(line)
    say.save(out / "summary.txt")
    return FAILURE if result.trajectory.reason not in (REACHED, BLOWUP) else OK


# ----------------------------------------------------------------- modulus

def cmd_modulus(cfg: RunConfig, profile_path, out: Path, say=None) -> int:
    say = say or Console()
    if profile_path is None:
        raise ConfigError("modulus needs --profile <csv>")
    theta, values = read_profile_csv(profile_path)
    domain = cfg.flow.domain
    if domain == "arc":
        raise ConfigError("[flow] domain: modulus tables are for periodic or colatitude profiles")
    try:
        p = Profile(domain, values, "rho")
    except ContractError as exc:
        raise ConfigError(f"{profile_path}: {exc}") from None
    if p.theta.shape != theta.shape or np.max(np.abs(p.theta - theta)) > 1e-9:
        raise ConfigError(f"{profile_path}: theta column is not the uniform {domain} grid")
    m = modulus_of_continuity(p, n=cfg.flow.n) if domain == "colatitude" else modulus_of_continuity(p)
    path = write_csv(out / "modulus.csv", ["lag", "omega"], zip(m.lags, m.omega))
    for e in (cfg.blowup.sigma, 0.5):
        say(f"lambda_min(exponent {short(e)}) = {short(min_holder_coeff(m, e))}")
    say(f"wrote {path}")
    return OK


# ------------------------------------------------------------------ blowup

def cmd_blowup(cfg: RunConfig, out: Path, threads: int = 1, say=None) -> int:
    say = say or Console()
    bc = cfg.blowup
    w = make_warp(cfg)
    if cfg.warp.base not in (None, 0.0):
        raise ConfigError("[warp] base: the blow-up construction uses base point 0")
    if not w.contains(0.0):
        raise ConfigError("[warp] interval must contain 0 for the blow-up construction")
    t = make_transform(cfg, w, base=0.0)
    say(f"warp: {w.kind} on [{short(w.interval[0])}, {short(w.interval[1])}], J = [{short(t.J[0])}, {short(t.J[1])}]")
    try:
        search = bu.choose_params(bc.sigma, bc.lam, t, k_max=bc.k_max, tau0=bc.tau0)
    except SearchFailure as exc:
        say(f"parameter search failed: {exc}")
        for line in exc.log:
            say(f"  {line}")
        say.save(out / "blowup-report.txt")
        return FAILURE
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    sp = search.params
    say("parameters:")
    for name in ("sigma", "p", "k", "tau", "c1", "c2", "mu"):
        say(f"  {name} = {short(getattr(sp, name))}")
    say("search log:")
    for line in search.log:
        say(f"  {line}")
    for line in search.report.lines():
        say(line)

    try:
        runs = bu.refinement_study(sp, t, bc.levels, bc.g_max, threads=threads, cadence=bc.cadence)
    except bu.ConstructionError as exc:
        say(f"initial data: FAIL ({exc})")
        say.save(out / "blowup-report.txt")
        return FAILURE
    for line in runs[0].initial_report.lines():
        say(f"[N={runs[0].grid_n}] {line}")
    say("refinement levels:")
    for r in runs:
        say(f"  N={r.grid_n}: T_hat={short(r.T_hat)} witness node {r.witness} (theta={short(r.witness_theta)}), "
            f"termination: {r.reason}")
        say(f"    comparison margin min(gamma - zeta) = {short(r.comparison_margin)} vs -tol_cmp = {short(-r.tol_cmp)}: "
            f"{'ok' if r.comparison_ok else 'VIOLATED'}")
        if r.extension_note:
            say(f"    {r.extension_note}")
        else:
            say(f"    odd extension on the circle: T_hat={short(r.extension_T_hat)} "
                f"({'consistent' if r.extension_consistent else 'inconsistent'} within 5%)")
    if len(runs) >= 2:
        var = bu.relative_variation(runs[-2].T_hat, runs[-1].T_hat)
        verdict = "ok" if var < 0.05 else ("undefined" if math.isnan(var) else "exceeds 5%")
        say(f"T_hat variation between the two finest levels: {short(var)} ({verdict})")
    write_csv(out / "comparison.csv", ["grid_n", "t", "margin", "max_zeta"],
              ((r.grid_n, *row) for r in runs for row in r.comparison_series))
    write_csv(out / "gradient.csv", ["grid_n", "t", "sup_grad"],
              ((r.grid_n, a, b) for r in runs for a, b in zip(*r.gradient_series)))
    say.save(out / "blowup-report.txt")
    return OK if all(r.comparison_ok for r in runs) else FAILURE


# -------------------------------------------------------------------- main

def build_parser():
    parser = argparse.ArgumentParser(prog="warpflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check-warp", "run", "modulus", "blowup", "transform"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", help="output directory (overrides [output] dir)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized initial profiles")
        if name == "modulus":
            p.add_argument("--profile", help="CSV with columns theta,value")
    return parser


def main(argv=None, stream=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    say = Console(stream)
    try:
        if args.threads < 1 or not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--threads must be >= 1 and --seed a u64")
        cfg = load_config(args.config)
        cfg.seed = args.seed
        if args.out:
            cfg.out_dir = args.out
        if args.command == "check-warp":
            return cmd_check_warp(cfg, say)
        out = _out_dir(cfg)
        if args.command == "transform":
            return cmd_transform(cfg, out, say)
        if args.command == "run":
            return cmd_run(cfg, out, say)
        if args.command == "modulus":
            return cmd_modulus(cfg, args.profile, out, say)
        return cmd_blowup(cfg, out, args.threads, say)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except WarpflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
