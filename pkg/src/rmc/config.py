"""Scenario configuration: parsing, validation, serialization.

The format is flat key-value text grouped under ``[section]`` headers,
``#`` starts a comment.  Unknown sections or keys are rejected by name
(fail-closed), parse problems report the line number.  Angle-valued
fields declare their unit (``deg`` or ``rad``) and are converted to
radians at load, so an in-memory ``ScenarioConfig`` always carries
radians and serializing it is a fixed point of the loader.
"""

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import GainSet
from .exceptions import ConfigError
from .plants import (CORIOLIS_VARIANTS, TWO_LINK_PARAMS, benchmark_reference,
                     scalar_toy_plant, toy_reference, two_link_as_plant)

_DEG = math.pi / 180.0

#: plant name -> (m, n)
PLANT_DIMS = {"two_link": (2, 2), "scalar_toy": (1, 1)}

#: reference name -> (m, highest derivative order provided)
REFERENCE_DIMS = {"benchmark": (2, 3), "toy_sine": (1, 2)}


@dataclass
class ScenarioConfig:
    """Validated scenario description (angles in radians)."""

    plant: str
    reference: str
    alpha: tuple
    k_p: float
    k_d: tuple
    C: tuple
    x0: tuple
    xdot0: tuple
    T: float
    dt: float
    decimation: int = 1
    units: str = "rad"
    plant_params: tuple = None
    coriolis_variant: str = "paper"
    fd_step: float = None
    safety: float = 0.1
    gamma_max: int = 10
    lyapunov_columns: bool = False

    @property
    def m(self):
        return PLANT_DIMS[self.plant][0]

    @property
    def n(self):
        return PLANT_DIMS[self.plant][1]


@dataclass
class ScenarioObjects:
    """Concrete plant, reference and gains built from a configuration."""

    plant: object
    ref: object
    gains: GainSet
    x0_stack: np.ndarray


class _Parser:
    """Line-oriented parser for the sectioned key-value format."""

    def __init__(self, text, origin):
        self.origin = origin
        self.sections = {}
        section = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                if not line.endswith("]") or len(line) < 3:
                    self._fail(lineno, f"malformed section header {raw.strip()!r}")
                section = line[1:-1].strip()
                if section in self.sections:
                    self._fail(lineno, f"duplicate section [{section}]")
                self.sections[section] = {}
                continue
            if "=" not in line:
                self._fail(lineno, f"expected 'key = value', got {raw.strip()!r}")
            if section is None:
                self._fail(lineno, "key outside any [section]")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                self._fail(lineno, "empty key")
            if key in self.sections[section]:
                self._fail(lineno, f"duplicate key {key!r} in [{section}]")
            self.sections[section][key] = (value, lineno)

    def _fail(self, lineno, message):
        raise ConfigError(f"{self.origin}:{lineno}: {message}")


def _floats(value, origin, key):
    try:
        return tuple(float(tok) for tok in value.split())
    except ValueError:
        raise ConfigError(f"{origin}: key {key!r} is not a list of decimals: {value!r}") from None


def _float(value, origin, key):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{origin}: key {key!r} is not a decimal: {value!r}") from None


def _int(value, origin, key):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{origin}: key {key!r} is not an integer: {value!r}") from None


def _bool(value, origin, key):
    low = value.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{origin}: key {key!r} is not a boolean: {value!r}")


_SECTION_KEYS = {
    "plant": {"name", "a1", "a2", "a3", "a4", "coriolis_variant"},
    "reference": {"name"},
    "gains": {"alpha", "k_p", "k_d", "C"},
    "initial": {"units", "x", "x_dot"},
    "simulation": {"T", "dt", "decimation"},
    "analysis": {"fd_step", "safety", "gamma_max", "lyapunov_columns"},
}

_REQUIRED_SECTIONS = ("plant", "reference", "gains", "initial", "simulation")


def parse_config_text(text, origin="<config>"):
    """Parse and validate configuration text into a ``ScenarioConfig``."""
    parser = _Parser(text, origin)
    sections = parser.sections

    for name in sections:
        if name not in _SECTION_KEYS:
            raise ConfigError(f"{origin}: unknown section [{name}]")
    for name in _REQUIRED_SECTIONS:
        if name not in sections:
            raise ConfigError(f"{origin}: missing section [{name}]")
    for name, entries in sections.items():
        for key, (_, lineno) in entries.items():
            if key not in _SECTION_KEYS[name]:
                raise ConfigError(
                    f"{origin}:{lineno}: unknown key {key!r} in [{name}]")

    def take(section, key, default=None):
        entry = sections.get(section, {}).get(key)
        return default if entry is None else entry[0]

    plant = take("plant", "name")
    if plant is None:
        raise ConfigError(f"{origin}: [plant] requires 'name'")
    if plant not in PLANT_DIMS:
        raise ConfigError(f"{origin}: unknown plant {plant!r}")
    m, n = PLANT_DIMS[plant]

    plant_params = None
    coriolis_variant = "paper"
    if plant == "two_link":
        params = list(TWO_LINK_PARAMS)
        for i, key in enumerate(("a1", "a2", "a3", "a4")):
            raw = take("plant", key)
            if raw is not None:
                params[i] = _float(raw, origin, key)
        plant_params = tuple(params)
        coriolis_variant = take("plant", "coriolis_variant", "paper")
        if coriolis_variant not in CORIOLIS_VARIANTS:
            raise ConfigError(
                f"{origin}: coriolis_variant must be one of {CORIOLIS_VARIANTS}")
    else:
        for key in ("a1", "a2", "a3", "a4", "coriolis_variant"):
            if take("plant", key) is not None:
                raise ConfigError(
                    f"{origin}: key {key!r} is not valid for plant {plant!r}")

    reference = take("reference", "name")
    if reference is None:
        raise ConfigError(f"{origin}: [reference] requires 'name'")
    if reference not in REFERENCE_DIMS:
        raise ConfigError(f"{origin}: unknown reference {reference!r}")
    ref_m, ref_order = REFERENCE_DIMS[reference]
    if ref_m != m:
        raise ConfigError(
            f"{origin}: reference {reference!r} has {ref_m} channels, plant needs {m}")
    if ref_order < n + 1:
        raise ConfigError(
            f"{origin}: reference {reference!r} lacks derivatives through order {n + 1}")

    alpha = _floats(take("gains", "alpha", ""), origin, "alpha")
    k_p = _float(take("gains", "k_p", "nan"), origin, "k_p")
    k_d = _floats(take("gains", "k_d", ""), origin, "k_d")
    C = _floats(take("gains", "C", ""), origin, "C")
    if len(C) == 1 and m > 1:
        C = C * m  # scalar C means C * I
    if len(alpha) != m:
        raise ConfigError(f"{origin}: alpha needs {m} entries, got {len(alpha)}")
    if len(k_d) != m - 1:
        raise ConfigError(f"{origin}: k_d needs {m - 1} entries, got {len(k_d)}")
    if len(C) != m:
        raise ConfigError(f"{origin}: C needs {m} entries, got {len(C)}")
    if math.isnan(k_p):
        raise ConfigError(f"{origin}: [gains] requires 'k_p'")
    if min(alpha) <= 0.0 or k_p <= 0.0 or (k_d and min(k_d) <= 0.0):
        raise ConfigError(f"{origin}: gain entries must be positive")
    if min(C) < 0.0:
        raise ConfigError(f"{origin}: C entries must be non-negative")

    units = take("initial", "units", "rad")
    if units not in ("deg", "rad"):
        raise ConfigError(f"{origin}: units must be 'deg' or 'rad', got {units!r}")
    scale = _DEG if units == "deg" else 1.0
    x0 = _floats(take("initial", "x", ""), origin, "x")
    if len(x0) != m:
        raise ConfigError(f"{origin}: initial x needs {m} entries, got {len(x0)}")
    x0 = tuple(v * scale for v in x0)
    xdot_raw = take("initial", "x_dot")
    if n >= 2:
        if xdot_raw is None:
            raise ConfigError(f"{origin}: plant order {n} requires initial x_dot")
        xdot0 = _floats(xdot_raw, origin, "x_dot")
        if len(xdot0) != m:
            raise ConfigError(f"{origin}: initial x_dot needs {m} entries")
        xdot0 = tuple(v * scale for v in xdot0)
    else:
        if xdot_raw is not None:
            raise ConfigError(f"{origin}: x_dot is not valid for a first-order plant")
        xdot0 = ()

    T = _float(take("simulation", "T", "nan"), origin, "T")
    dt = _float(take("simulation", "dt", "nan"), origin, "dt")
    decimation = _int(take("simulation", "decimation", "1"), origin, "decimation")
    if not T > 0.0:
        raise ConfigError(f"{origin}: horizon T must be positive, got {T}")
    if not dt > 0.0:
        raise ConfigError(f"{origin}: step dt must equal a positive value, got {dt}")
    if decimation < 1:
        raise ConfigError(f"{origin}: decimation must be >= 1, got {decimation}")

    fd_raw = take("analysis", "fd_step")
    fd_step = None if fd_raw is None else _float(fd_raw, origin, "fd_step")
    safety = _float(take("analysis", "safety", "0.1"), origin, "safety")
    gamma_max = _int(take("analysis", "gamma_max", "10"), origin, "gamma_max")
    lyap = _bool(take("analysis", "lyapunov_columns", "false"), origin,
                 "lyapunov_columns")
    if safety < 0.0:
        raise ConfigError(f"{origin}: safety must be non-negative")
    if gamma_max < 0:
        raise ConfigError(f"{origin}: gamma_max must be non-negative")

    return ScenarioConfig(
        plant=plant, reference=reference, alpha=alpha, k_p=k_p, k_d=k_d, C=C,
        x0=x0, xdot0=xdot0, T=T, dt=dt, decimation=decimation, units="rad",
        plant_params=plant_params, coriolis_variant=coriolis_variant,
        fd_step=fd_step, safety=safety, gamma_max=gamma_max,
        lyapunov_columns=lyap)


def load_config(path):
    """Load and validate a scenario configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config_text(text, origin=str(path))


def _fmt(values):
    return " ".join(repr(float(v)) for v in values)


def serialize_config(cfg):
    """Canonical text form; ``load(serialize(load(f)))`` is a fixed point."""
    lines = ["[plant]", f"name = {cfg.plant}"]
    if cfg.plant == "two_link":
        for key, val in zip(("a1", "a2", "a3", "a4"), cfg.plant_params):
            lines.append(f"{key} = {val!r}")
        lines.append(f"coriolis_variant = {cfg.coriolis_variant}")
    lines += ["", "[reference]", f"name = {cfg.reference}"]
    lines += ["", "[gains]",
              f"alpha = {_fmt(cfg.alpha)}",
              f"k_p = {cfg.k_p!r}"]
    if cfg.k_d:
        lines.append(f"k_d = {_fmt(cfg.k_d)}")
    lines.append(f"C = {_fmt(cfg.C)}")
    lines += ["", "[initial]", "units = rad", f"x = {_fmt(cfg.x0)}"]
    if cfg.xdot0:
        lines.append(f"x_dot = {_fmt(cfg.xdot0)}")
    lines += ["", "[simulation]",
              f"T = {cfg.T!r}",
              f"dt = {cfg.dt!r}",
              f"decimation = {cfg.decimation}"]
    lines += ["", "[analysis]"]
    if cfg.fd_step is not None:
        lines.append(f"fd_step = {cfg.fd_step!r}")
    lines += [f"safety = {cfg.safety!r}",
              f"gamma_max = {cfg.gamma_max}",
              f"lyapunov_columns = {'true' if cfg.lyapunov_columns else 'false'}"]
    return "\n".join(lines) + "\n"


def build_scenario(cfg):
    """Instantiate plant, reference and gains from a configuration."""
    if cfg.plant == "two_link":
        plant = two_link_as_plant(params=cfg.plant_params,
                                  coriolis_variant=cfg.coriolis_variant)
    elif cfg.plant == "scalar_toy":
        plant = scalar_toy_plant()
    else:
        raise ConfigError(f"unknown plant {cfg.plant!r}")
    if cfg.reference == "benchmark":
        ref = benchmark_reference()
    elif cfg.reference == "toy_sine":
        ref = toy_reference()
    else:
        raise ConfigError(f"unknown reference {cfg.reference!r}")
    gains = GainSet(alpha=np.array(cfg.alpha), k_p=cfg.k_p,
                    k_d=np.array(cfg.k_d), C=np.array(cfg.C),
                    D=plant.D_true)
    x0_stack = np.array(cfg.x0 + cfg.xdot0, dtype=float)
    return ScenarioObjects(plant=plant, ref=ref, gains=gains, x0_stack=x0_stack)


def output_directory(default="."):
    """Directory for run outputs; ``RMC_LOG_DIR`` overrides when set."""
    return os.environ.get("RMC_LOG_DIR", default)
