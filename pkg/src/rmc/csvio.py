"""CSV emission and ingestion for trajectory logs.

Schema (header is part of the contract):

    t, x_1..x_{mn}, xr_1..xr_m, e1_1..e1_m, en_1..en_m,
    r_1..r_m, tau_1..tau_m, Pi_1..Pi_m

plus optional trailing analysis columns ``V1, L, P, V``.  Values are
written with 17 significant digits, which round-trips float64 exactly.
Angles are radians unless ``deg=True``, which converts the position-unit
columns (x, xr, e1, en, r) on write; inputs tau and Pi are never scaled.
"""

import math

import numpy as np

from .cascade import cascade_coefficients
from .exceptions import ConfigError

_FMT = "%.17g"
_RAD2DEG = 180.0 / math.pi

ANALYSIS_COLUMNS = ("V1", "L", "P", "V")


def csv_header(m, n, analysis=False):
    """Column names for an (m, n) log."""
    cols = ["t"]
    cols += [f"x_{i}" for i in range(1, m * n + 1)]
    for prefix in ("xr", "e1", "en", "r", "tau", "Pi"):
        cols += [f"{prefix}_{i}" for i in range(1, m + 1)]
    if analysis:
        cols += list(ANALYSIS_COLUMNS)
    return cols


def write_log_csv(log, path, deg=False, analysis=None):
    """Write a trajectory log; ``analysis`` optionally maps the four
    analysis column names to per-sample arrays."""
    m, n = log.m, log.n
    K = len(log)
    scale = _RAD2DEG if deg else 1.0
    blocks = [log.t[:, None], log.X * scale, log.xr * scale,
              log.e1 * scale, log.en * scale, log.r * scale,
              log.tau, log.Pi]
    header = csv_header(m, n, analysis=analysis is not None)
    if analysis is not None:
        missing = [c for c in ANALYSIS_COLUMNS if c not in analysis]
        if missing:
            raise ValueError(f"analysis columns missing: {missing}")
        blocks += [np.asarray(analysis[c], dtype=float)[:, None]
                   for c in ANALYSIS_COLUMNS]
    data = np.concatenate(blocks, axis=1)
    if data.shape != (K, len(header)):
        raise ValueError("log blocks do not match the header layout")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(_FMT % v for v in row) + "\n")


def read_log_csv(path):
    """Read a log CSV into ``(columns, data)``.

    ``columns`` is the header list, ``data`` a dict mapping each column
    name to its float64 array.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline().strip()
        if not header_line:
            raise ConfigError(f"{path}: empty CSV")
        columns = header_line.split(",")
        raw = np.loadtxt(fh, delimiter=",", ndmin=2)
    if raw.shape[1] != len(columns):
        raise ConfigError(f"{path}: row width does not match header")
    data = {name: raw[:, j].copy() for j, name in enumerate(columns)}
    return columns, data


def _count(columns, prefix):
    return sum(1 for c in columns if c.startswith(prefix + "_"))


def log_dims_from_header(columns):
    """Infer (m, n) from the schema column names."""
    m = _count(columns, "xr")
    mn = _count(columns, "x")
    if m == 0 or mn % m:
        raise ConfigError("CSV header does not follow the log schema")
    return m, mn // m


def log_from_csv(path, plant, ref):
    """Rebuild a TrajectoryLog from a CSV plus its plant and reference.

    Cascade errors are recomputed from the logged state and the analytic
    reference (the same code path the simulator used), and
    ``x^(n) = h + g tau`` from the plant; stage-sign flags and the
    integral state are not recoverable from a CSV.
    """
    from .simulator import TrajectoryLog

    columns, data = read_log_csv(path)
    m, n = log_dims_from_header(columns)
    if (m, n) != (plant.m, plant.n):
        raise ConfigError(f"{path}: CSV is ({m}, {n}) but plant is "
                          f"({plant.m}, {plant.n})")
    t = data["t"]
    K = t.size
    if K >= 2:
        steps_dt = np.diff(t)
        if not np.allclose(steps_dt, steps_dt[0], rtol=0.0,
                           atol=1e-9 * max(1.0, abs(t[-1]))):
            raise ConfigError(f"{path}: time stamps are not uniformly spaced")
        dt = float(steps_dt[0])
    else:
        dt = 0.0
    X = np.column_stack([data[f"x_{i}"] for i in range(1, m * n + 1)])
    tau = np.column_stack([data[f"tau_{i}"] for i in range(1, m + 1)])
    Pi = np.column_stack([data[f"Pi_{i}"] for i in range(1, m + 1)])
    r = np.column_stack([data[f"r_{i}"] for i in range(1, m + 1)])

    xr_derivs = np.empty((K, n + 1, m))
    for k in range(K):
        xr_derivs[k] = ref.stack(t[k], n)
    coeffs = cascade_coefficients(n)
    rows = [coeffs.row_floats(i) for i in range(1, n + 1)]
    e = np.empty((K, n, m))
    xdn = np.empty((K, m))
    for k in range(K):
        e1d = xr_derivs[k, :n] - X[k].reshape(n, m)
        for i in range(1, n + 1):
            e[k, i - 1] = rows[i - 1] @ e1d[:i]
        xdn[k] = plant.h(X[k]) + plant.g(X[k]) @ tau[k]
    return TrajectoryLog(m=m, n=n, dt=dt, step_dt=dt, decimation=1,
                         t=t, X=X, xr_derivs=xr_derivs, e=e, r=r, tau=tau,
                         Pi=Pi, int_en=None, xdn=xdn, sign_clean=None)


def write_diagnostics_csv(path, t, V1, L, P, V, margins):
    """Per-sample diagnostics: V1, L, P, V and the integral-inequality
    margin of every channel."""
    m = margins.shape[1]
    header = ["t", "V1", "L", "P", "V"] + [f"margin_{i}" for i in range(1, m + 1)]
    data = np.column_stack([t, V1, L, P, V, margins])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(_FMT % v for v in row) + "\n")


_PLOT_TEMPLATE = '''"""Plot tracking errors and control inputs from {csv_name}.

Generated alongside the log; run it with a working matplotlib:

    python {script_name}
"""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
CSV = HERE / {csv_name!r}

with open(CSV, newline="") as fh:
    reader = csv.reader(fh)
    header = next(reader)
    rows = [[float(v) for v in row] for row in reader]

col = {{name: i for i, name in enumerate(header)}}
t = [row[col["t"]] for row in rows]
m = {m}
rad2deg = 180.0 / 3.141592653589793

fig, ax = plt.subplots(figsize=(8, 4))
for i in range(1, m + 1):
    ax.plot(t, [row[col[f"e1_{{i}}"]] * rad2deg for row in rows],
            label=f"channel {{i}}")
ax.set_xlabel("t [s]")
ax.set_ylabel("tracking error [deg]")
ax.legend()
ax.grid(True)
fig.tight_layout()
fig.savefig(HERE / ({csv_stem!r} + "_errors.png"), dpi=150)

fig, ax = plt.subplots(figsize=(8, 4))
for i in range(1, m + 1):
    ax.plot(t, [row[col[f"tau_{{i}}"]] for row in rows], label=f"input {{i}}")
ax.set_xlabel("t [s]")
ax.set_ylabel("control input")
ax.legend()
ax.grid(True)
fig.tight_layout()
fig.savefig(HERE / ({csv_stem!r} + "_inputs.png"), dpi=150)
print("wrote", {csv_stem!r} + "_errors.png", "and", {csv_stem!r} + "_inputs.png")
'''


def write_plot_script(csv_path, script_path, m):
    """Emit a standalone matplotlib script for the standard two charts."""
    from pathlib import Path

    csv_name = Path(csv_path).name
    stem = Path(csv_path).stem
    text = _PLOT_TEMPLATE.format(csv_name=csv_name, m=m, csv_stem=stem,
                                 script_name=Path(script_path).name)
    with open(script_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
