"""CSV emission: ``,`` separated, ``.`` decimal, LF endings, UTF-8, 17 significant digits."""

import csv
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError


def fmt(x):
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def short(x):
    """Shortest decimal that round-trips, for report text."""
    if x is None:
        return ""
    return repr(float(x))


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def read_csv(path):
    """Header and float columns; empty cells read as NaN."""
    path = Path(path)
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(c) if c != "" else math.nan for c in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return header, data.reshape(len(body), len(header))


def read_profile_csv(path):
    """``(theta, values)`` from a file with columns ``theta`` and one value column."""
    header, data = read_csv(path)
    if len(header) < 2 or header[0] != "theta":
        raise ConfigError(f"{path}: expected a header 'theta,<values>'")
    return data[:, 0], data[:, 1]


def write_snapshots(path, theta, states):
    header = ["theta"] + [f"t={fmt(s.t)}" for s in states]
    columns = [theta] + [s.values for s in states]
    return write_csv(path, header, zip(*columns))
