"""Run configuration: a sectioned ``key = value`` file validated up front.

Lists are written as JSON arrays (``interval = [-1, 1]``).  Every key is
checked before any computation starts; unknown sections or keys are errors.
"""

import configparser
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .flow import DOMAINS, REPRESENTATIONS
from .warp import KINDS

_SCHEMA = {
    "warp": {"kind", "interval", "coefficients", "base"},
    "flow": {"representation", "domain", "n", "grid_n", "k", "t_end", "dump_times",
             "g_max", "dt_min", "step_tol"},
    "initial": {"kind", "mean", "cos", "sin", "modes", "amplitude", "path", "value"},
    "diagnostics": {"cadence", "barrier", "volume"},
    "blowup": {"sigma", "lambda", "g_max", "levels", "k_max", "tau0", "cadence"},
    "output": {"dir", "transform_points"},
}
INITIAL_KINDS = ("constant", "fourier", "random", "file")


@dataclass
class WarpConfig:
    kind: str = "sphere-sine"
    interval: tuple = (0.3, 2.8)
    coefficients: tuple = ()
    base: Optional[float] = None


@dataclass
class FlowConfig:
    representation: str = "rho"
    domain: str = "periodic"
    n: int = 1
    grid_n: int = 256
    k: int = 1
    t_end: float = 1.0
    dump_times: tuple = ()
    g_max: float = 1e3
    dt_min: float = 1e-14
    step_tol: float = 1e-8


@dataclass
class InitialConfig:
    kind: str = "constant"
    value: float = 1.2
    mean: float = 0.0
    cos: tuple = ()
    sin: tuple = ()
    modes: int = 4
    amplitude: float = 0.1
    path: Optional[str] = None


@dataclass
class DiagnosticsConfig:
    cadence: int = 100
    barrier: str = "off"           # off | auto | "delta, lam_bar, eta"
    volume: bool = True


@dataclass
class BlowupConfig:
    sigma: float = 0.25
    lam: float = 1.0
    g_max: float = 1e3
    levels: tuple = (256, 512, 1024)
    k_max: int = 2 ** 48
    tau0: float = 1.0
    cadence: int = 1


@dataclass
class RunConfig:
    warp: WarpConfig = field(default_factory=WarpConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    blowup: BlowupConfig = field(default_factory=BlowupConfig)
    out_dir: str = "out"
    transform_points: int = 101
    seed: int = 0
    source: Optional[str] = None


def _number(section, key, raw, kind=float):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as a number") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"[{section}] {key}: must be finite")
    return value


def _numbers(section, key, raw, kind=float):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as a list") from None
    if not isinstance(value, list):
        raise ConfigError(f"[{section}] {key}: expected a list like [1, 2]")
    return tuple(_number(section, key, json.dumps(v), kind) for v in value)


def _choice(section, key, raw, options):
    if raw not in options:
        raise ConfigError(f"[{section}] {key}: {raw!r} is not one of {', '.join(options)}")
    return raw


def _positive(section, key, value):
    if not value > 0:
        raise ConfigError(f"[{section}] {key}: must be positive")
    return value


def parse_config(text: str, source: Optional[str] = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - _SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")

    cfg = RunConfig(source=source)

    def get(section):
        return cp[section] if cp.has_section(section) else {}

    w = get("warp")
    if "kind" in w:
        cfg.warp.kind = _choice("warp", "kind", w["kind"], KINDS)
    if "interval" in w:
        iv = _numbers("warp", "interval", w["interval"])
        if len(iv) != 2 or not iv[0] < iv[1]:
            raise ConfigError("[warp] interval: expected [a, b] with a < b")
        cfg.warp.interval = iv
    if "coefficients" in w:
        cfg.warp.coefficients = _numbers("warp", "coefficients", w["coefficients"])
    if "base" in w:
        cfg.warp.base = _number("warp", "base", w["base"])

    f = get("flow")
    fc = cfg.flow
    if "representation" in f:
        fc.representation = _choice("flow", "representation", f["representation"], REPRESENTATIONS)
    if "domain" in f:
        fc.domain = _choice("flow", "domain", f["domain"], DOMAINS)
    for key in ("n", "grid_n", "k"):
        if key in f:
            setattr(fc, key, _positive("flow", key, _number("flow", key, f[key], int)))
    for key in ("t_end", "g_max", "dt_min", "step_tol"):
        if key in f:
            setattr(fc, key, _positive("flow", key, _number("flow", key, f[key])))
    if "dump_times" in f:
        fc.dump_times = tuple(sorted(_numbers("flow", "dump_times", f["dump_times"])))
    if fc.grid_n < 16:
        raise ConfigError("[flow] grid_n: at least 16 grid segments required")
    if fc.domain != "colatitude" and fc.n != 1:
        raise ConfigError("[flow] n: periodic and arc domains need n = 1")
    if any(not 0 < t <= fc.t_end for t in fc.dump_times):
        raise ConfigError("[flow] dump_times must lie in (0, t_end]")
    if fc.domain == "arc" and fc.representation != "gamma":
        raise ConfigError("[flow] the arc domain is only used in gamma-form")

    i = get("initial")
    ic = cfg.initial
    if "kind" in i:
        ic.kind = _choice("initial", "kind", i["kind"], INITIAL_KINDS)
    for key in ("value", "mean", "amplitude"):
        if key in i:
            setattr(ic, key, _number("initial", key, i[key]))
    for key in ("cos", "sin"):
        if key in i:
            setattr(ic, key, _numbers("initial", key, i[key]))
    if "modes" in i:
        ic.modes = _positive("initial", "modes", _number("initial", "modes", i["modes"], int))
    if "path" in i:
        ic.path = i["path"]
    if ic.kind == "file" and not ic.path:
        raise ConfigError("[initial] kind = file needs a path")

    d = get("diagnostics")
    dc = cfg.diagnostics
    if "cadence" in d:
        dc.cadence = _positive("diagnostics", "cadence", _number("diagnostics", "cadence", d["cadence"], int))
    if "volume" in d:
        dc.volume = _choice("diagnostics", "volume", d["volume"], ("true", "false")) == "true"
    if "barrier" in d:
        raw = d["barrier"].strip()
        if raw not in ("off", "auto"):
            vals = _numbers("diagnostics", "barrier", raw if raw.startswith("[") else f"[{raw}]")
            if len(vals) != 3:
                raise ConfigError("[diagnostics] barrier: expected off, auto or [delta, lam_bar, eta]")
        dc.barrier = raw

    b = get("blowup")
    bc = cfg.blowup
    if "sigma" in b:
        bc.sigma = _number("blowup", "sigma", b["sigma"])
        if not 0 < bc.sigma < 0.5:
            raise ConfigError("[blowup] sigma must lie in (0,1/2)")
    if "lambda" in b:
        bc.lam = _positive("blowup", "lambda", _number("blowup", "lambda", b["lambda"]))
    if "g_max" in b:
        bc.g_max = _positive("blowup", "g_max", _number("blowup", "g_max", b["g_max"]))
    if "tau0" in b:
        bc.tau0 = _positive("blowup", "tau0", _number("blowup", "tau0", b["tau0"]))
    for key in ("k_max", "cadence"):
        if key in b:
            setattr(bc, key, _positive("blowup", key, _number("blowup", key, b[key], int)))
    if "levels" in b:
        bc.levels = _numbers("blowup", "levels", b["levels"], int)
        if not bc.levels or min(bc.levels) < 16:
            raise ConfigError("[blowup] levels: grid sizes of at least 16")

    o = get("output")
    if "dir" in o:
        cfg.out_dir = o["dir"]
    if "transform_points" in o:
        cfg.transform_points = _number("output", "transform_points", o["transform_points"], int)
        if cfg.transform_points < 2:
            raise ConfigError("[output] transform_points must be at least 2")
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(p))


def barrier_values(cfg: RunConfig):
    """``None`` (off), ``"auto"`` or a ``(delta, lam_bar, eta)`` tuple."""
    raw = cfg.diagnostics.barrier
    if raw in ("off", "auto"):
        return None if raw == "off" else "auto"
    return _numbers("diagnostics", "barrier", raw if raw.startswith("[") else f"[{raw}]")


def initial_values(cfg: RunConfig, theta: np.ndarray) -> np.ndarray:
    """Initial node values for the configured profile (in the configured representation)."""
    ic = cfg.initial
    if ic.kind == "constant":
        return np.full(theta.shape, ic.value)
    if ic.kind == "fourier":
        v = np.full(theta.shape, ic.mean)
        for m, a in enumerate(ic.cos, start=1):
            v += a * np.cos(m * theta)
        for m, a in enumerate(ic.sin, start=1):
            v += a * np.sin(m * theta)
        return v
    if ic.kind == "random":
        rng = np.random.default_rng(cfg.seed)
        v = np.full(theta.shape, ic.mean)
        for m in range(1, ic.modes + 1):
            a, b = rng.standard_normal(2) * ic.amplitude / m ** 2
            v += a * np.cos(m * theta) + b * np.sin(m * theta)
        return v
    from .io import read_profile_csv
    path = Path(ic.path)
    if not path.is_absolute() and cfg.source:
        path = Path(cfg.source).parent / path
    th, v = read_profile_csv(path)
    if th.shape != theta.shape or np.max(np.abs(th - theta)) > 1e-9:
        raise ConfigError(f"profile file {path} does not match the configured grid")
    return v
