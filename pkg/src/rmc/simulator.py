"""Fixed-step closed-loop integration.

One scenario couples a plant, a reference and a gain set.  The augmented
state ``y = [X, Pi, int_en]`` advances with classical 4-stage Runge-Kutta
at a fixed step; the control input is re-evaluated at every stage from
the stage state, and the discontinuous ``Pi' = C Sgn(e_n)`` is integrated
as-is (the input itself is one integration away from the discontinuity,
hence continuous).  No adaptive stepping: determinism and clean order
analysis outweigh efficiency at these problem sizes.

Each step also records whether all four stages agreed on ``sign(e_n)``
componentwise.  Samples near a sign switch, including switches that occur
between samples, degrade local integration order and finite-difference
diagnostics; the recorded flags let the analysis mask them.
"""

import numpy as np

from dataclasses import dataclass

from . import config as _config
from .cascade import cascade_coefficients
from .controller import ControllerState
from .decomp import MINOR_RTOL, leading_minors
from .exceptions import NonFiniteStateError, PlantModelError, SingularMinorError


@dataclass
class ClosedLoopState:
    """Plant state stack plus controller integrators at one instant."""

    t: float
    X: np.ndarray
    ctrl: ControllerState

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)


@dataclass
class TrajectoryLog:
    """Uniformly sampled record of a closed-loop run.

    ``X`` is the stacked plant state, ``xr_derivs[k]`` holds reference
    derivatives 0..n at sample k, ``e[k, i - 1]`` the cascade error e_i.
    ``r`` and ``xdn`` (= x^(n)) use the simulator's plant knowledge and
    are analysis-only: the controller never consumes them.
    ``sign_clean[k]`` is True when every integration stage between
    samples k and k+1 saw the same non-zero ``sign(e_n)`` pattern.
    """

    m: int
    n: int
    dt: float
    step_dt: float
    decimation: int
    t: np.ndarray
    X: np.ndarray
    xr_derivs: np.ndarray
    e: np.ndarray
    r: np.ndarray
    tau: np.ndarray
    Pi: np.ndarray
    int_en: np.ndarray
    xdn: np.ndarray
    sign_clean: np.ndarray = None

    def __len__(self):
        return self.t.size

    @property
    def e1(self):
        return self.e[:, 0, :]

    @property
    def en(self):
        return self.e[:, self.n - 1, :]

    @property
    def en0(self):
        return self.e[0, self.n - 1, :]

    @property
    def xr(self):
        return self.xr_derivs[:, 0, :]


class _Engine:
    """Bound closed-loop right-hand side for one scenario."""

    def __init__(self, plant, ref, gains, en0):
        if plant.m != gains.m:
            raise ValueError("gain dimension does not match plant")
        if ref.m != plant.m:
            raise ValueError("reference dimension does not match plant")
        if ref.order < plant.n:
            raise ValueError("reference must provide derivatives through the plant order")
        self.plant = plant
        self.ref = ref
        self.gains = gains
        self.m = plant.m
        self.n = plant.n
        self.mn = self.m * self.n
        coeffs = cascade_coefficients(self.n)
        self.rows = [coeffs.row_floats(i) for i in range(1, self.n + 1)]
        self.a_n = self.rows[-1]
        self.en0 = np.asarray(en0, dtype=float)

    def errors_tail(self, y, ref_rows):
        """e_n at the stage state (ref_rows: derivatives 0..n-1)."""
        X = y[: self.mn]
        e1d = ref_rows - X.reshape(self.n, self.m)
        return self.a_n @ e1d

    def rhs(self, y, ref_rows, stage_signs=None):
        m, mn = self.m, self.mn
        en = self.errors_tail(y, ref_rows)
        sgn = np.sign(en)
        if stage_signs is not None:
            stage_signs.append(sgn)
        Pi = y[mn: mn + m]
        int_en = y[mn + m:]
        g = self.gains
        tau = g.D * (g.K_diag * (en - self.en0 + g.alpha * int_en)) + g.D * Pi
        X = y[:mn]
        xdn = self.plant.h(X) + self.plant.g(X) @ tau
        return np.concatenate([X[m:mn], xdn, g.C * sgn, en])

    def advance(self, t, y, dt):
        """One RK4 step; returns ``(y_next, sign_clean)``."""
        half = 0.5 * dt
        r0 = self.ref.stack(t, self.n - 1)
        rh = self.ref.stack(t + half, self.n - 1)
        r1 = self.ref.stack(t + dt, self.n - 1)
        signs = []
        k1 = self.rhs(y, r0, signs)
        k2 = self.rhs(y + half * k1, rh, signs)
        k3 = self.rhs(y + half * k2, rh, signs)
        k4 = self.rhs(y + dt * k3, r1, signs)
        y_next = y + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        s0 = signs[0]
        clean = (np.all(s0 != 0.0)
                 and np.array_equal(signs[1], s0)
                 and np.array_equal(signs[2], s0)
                 and np.array_equal(signs[3], s0))
        return y_next, clean

    def check_plant(self, y, t):
        """Runtime plant invariants: non-degenerate minors, stable signs."""
        g = self.plant.g(y[: self.mn])
        minors = leading_minors(g)
        scale = np.linalg.norm(g, "fro")
        prev = 1.0
        for k, d in enumerate(minors, start=1):
            if abs(d) < MINOR_RTOL * max(1.0, scale ** k):
                raise SingularMinorError(k, value=d, t=t)
            if np.sign(d) * np.sign(prev) != self.plant.D_true[k - 1]:
                raise PlantModelError(
                    f"sign of minor ratio {k} disagrees with D_true", t=t)
            prev = d

    def record(self, t, y):
        """Per-sample derived quantities (uses plant knowledge for r, xdn)."""
        m, mn, n = self.m, self.mn, self.n
        X = y[:mn]
        Pi = y[mn: mn + m]
        int_en = y[mn + m:]
        rd = self.ref.stack(t, n)
        e1d = rd[:n] - X.reshape(n, m)
        g = self.gains
        e = np.empty((n, m))
        for i in range(1, n + 1):
            e[i - 1] = self.rows[i - 1] @ e1d[:i]
        en = e[n - 1]
        tau = g.D * (g.K_diag * (en - self.en0 + g.alpha * int_en)) + g.D * Pi
        xdn = self.plant.h(X) + self.plant.g(X) @ tau
        e1d_full = np.vstack([e1d, (rd[n] - xdn)[None, :]])
        en_dot = self.a_n @ e1d_full[1:]
        r = en_dot + g.alpha * en
        return rd, e, r, tau, Pi.copy(), int_en.copy(), xdn


def initial_state(plant, ref, gains, x0_stack, t0=0.0):
    """Closed-loop state at start: integrators zero, ``en0`` captured."""
    x0_stack = np.asarray(x0_stack, dtype=float)
    if x0_stack.size != plant.m * plant.n:
        raise ValueError(f"initial state must have {plant.m * plant.n} entries")
    eng = _Engine(plant, ref, gains, en0=np.zeros(plant.m))
    en0 = eng.errors_tail(np.concatenate([x0_stack, np.zeros(2 * plant.m)]),
                          ref.stack(t0, plant.n - 1))
    return ClosedLoopState(t=t0, X=x0_stack.copy(), ctrl=ControllerState.at_start(en0))


def step(state, plant, ref, gains, dt):
    """Advance one closed-loop RK4 step and return the new state.

    Raises ``NonFiniteStateError`` when the state leaves the finite range
    and propagates plant singularity errors with the failing timestamp.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    eng = _Engine(plant, ref, gains, en0=state.ctrl.en0)
    m = plant.m
    y = np.concatenate([state.X, state.ctrl.Pi, state.ctrl.int_en])
    y_next, _ = eng.advance(state.t, y, dt)
    t_next = state.t + dt
    if not np.isfinite(y_next).all():
        raise NonFiniteStateError(t_next)
    eng.check_plant(y_next, t_next)
    ctrl = ControllerState(Pi=y_next[plant.m * plant.n: plant.m * plant.n + m],
                           int_en=y_next[plant.m * plant.n + m:],
                           en0=state.ctrl.en0)
    return ClosedLoopState(t=t_next, X=y_next[: plant.m * plant.n], ctrl=ctrl)


def run_closed_loop(plant, ref, gains, x0_stack, T, dt, decimation=1):
    """Integrate the closed loop over ``[0, T]`` and log every k-th sample.

    Deterministic: identical inputs produce bit-identical logs.  ``T = 0``
    yields a log holding only the initial sample.
    """
    if T < 0.0:
        raise ValueError("horizon T must be non-negative")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    decimation = int(decimation)
    if decimation < 1:
        raise ValueError("decimation must be >= 1")
    if ref.order < plant.n:
        raise ValueError("reference must provide derivatives through the plant order")

    x0_stack = np.asarray(x0_stack, dtype=float)
    state0 = initial_state(plant, ref, gains, x0_stack)
    eng = _Engine(plant, ref, gains, en0=state0.ctrl.en0)

    steps = int(round(T / dt))
    n_samples = steps // decimation + 1
    m, n, mn = plant.m, plant.n, plant.m * plant.n
    log = TrajectoryLog(
        m=m, n=n, dt=dt * decimation, step_dt=dt, decimation=decimation,
        t=np.empty(n_samples),
        X=np.empty((n_samples, mn)),
        xr_derivs=np.empty((n_samples, n + 1, m)),
        e=np.empty((n_samples, n, m)),
        r=np.empty((n_samples, m)),
        tau=np.empty((n_samples, m)),
        Pi=np.empty((n_samples, m)),
        int_en=np.empty((n_samples, m)),
        xdn=np.empty((n_samples, m)),
        sign_clean=np.ones(max(n_samples - 1, 0), dtype=bool),
    )

    y = np.concatenate([x0_stack, np.zeros(2 * m)])
    eng.check_plant(y, 0.0)

    def store(row, t, y):
        rd, e, r, tau, Pi, int_en, xdn = eng.record(t, y)
        log.t[row] = t
        log.X[row] = y[:mn]
        log.xr_derivs[row] = rd
        log.e[row] = e
        log.r[row] = r
        log.tau[row] = tau
        log.Pi[row] = Pi
        log.int_en[row] = int_en
        log.xdn[row] = xdn

    store(0, 0.0, y)
    row = 0
    window_clean = True
    for i in range(1, steps + 1):
        t_prev = (i - 1) * dt
        y, clean = eng.advance(t_prev, y, dt)
        window_clean = window_clean and clean
        t_now = i * dt
        if not np.isfinite(y).all():
            raise NonFiniteStateError(t_now)
        eng.check_plant(y, t_now)
        if i % decimation == 0:
            row += 1
            store(row, t_now, y)
            log.sign_clean[row - 1] = window_clean
            window_clean = True
    return log


def run_scenario(cfg):
    """Run a configured scenario and return its log.

    ``cfg`` is a ``ScenarioConfig``; plant, reference and gains are built
    from the registries in :mod:`rmc.config`.
    """
    built = _config.build_scenario(cfg)
    return run_closed_loop(built.plant, built.ref, built.gains, built.x0_stack,
                           T=cfg.T, dt=cfg.dt, decimation=cfg.decimation)


def recompute_errors(log):
    """Re-derive every e_i from logged X and reference derivatives.

    Round-trip guard: the result must equal ``log.e`` exactly, since the
    same code path produced both.
    """
    n, m = log.n, log.m
    coeffs = cascade_coefficients(n)
    rows = [coeffs.row_floats(i) for i in range(1, n + 1)]
    out = np.empty_like(log.e)
    for k in range(len(log)):
        e1d = log.xr_derivs[k, :n] - log.X[k].reshape(n, m)
        for i in range(1, n + 1):
            out[k, i - 1] = rows[i - 1] @ e1d[:i]
    return out
