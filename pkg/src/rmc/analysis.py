"""Stability diagnostics evaluated along logged trajectories.

Everything here is post-processing over immutable logs.  The central
object is the per-sample signal set of the closed-loop error dynamics

    M r' = -1/2 M' r - e_n - K r + Ntilde + Nbar
           - D (U - I) D K r - D U D C Sgn(e_n)

with ``M = S^{-1}`` and ``f = M phi`` from the pointwise factorization of
the input gain, ``phi = h' + g' g^{-1} (x^(n) - h)``, and the disturbance
split ``Nbar = N`` evaluated on the reference path, ``Ntilde = N - Nbar``.
Time derivatives of h, g and M come from finite differences along the
trajectory on the log grid (second-order central in the interior,
second-order one-sided at the ends); accuracy is O(dt^2) away from sign
switches of e_n.

The triangular-coupling splits,

    D (U - I) D K r        = [Lambda + Phi, 0]
    D U D C Sgn(e_n)       = [Psi, 0] + Theta,   Theta = (I + Omega) C Sgn(e_n)

with ``Omega = D (Ubar - I) D`` built from the reference-path factor
``Ubar``, feed the integral diagnostics: L = r^T (Nbar - Theta), the
auxiliary energy P = zeta_L - int L (non-negative when C clears the
minimal gains), and the composite function V = V1 + P which must not
increase along a validated run.
"""

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from dataclasses import dataclass, field

from .cascade import cascade_coefficients
from .controller import BoundEstimates, check_alpha, minimal_C, validate_C, zeta_L
from .decomp import sdu_decompose
from .exceptions import NonFiniteStateError


def lyapunov_V1(e, r, M):
    """Quadratic error energy ``1/2 sum_i e_i^T e_i + 1/2 r^T M r``.

    ``M`` must be symmetric positive definite.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    try:
        np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        raise ValueError("M must be symmetric positive definite") from None
    r = np.atleast_1d(np.asarray(r, dtype=float))
    total = 0.5 * float(r @ M @ r)
    for e_i in e:
        e_i = np.atleast_1d(np.asarray(e_i, dtype=float))
        total += 0.5 * float(e_i @ e_i)
    return total


def _dseries(A, dt, stride=1):
    """d/dt of a sampled series: strided central differences, one-sided
    second-order stencils within ``stride`` of either end."""
    A = np.asarray(A, dtype=float)
    K = A.shape[0]
    s = int(stride)
    if K < 2 * s + 1:
        raise ValueError("series too short for the requested stencil")
    out = np.empty_like(A)
    out[s:K - s] = (A[2 * s:] - A[: K - 2 * s]) / (2.0 * s * dt)
    h = s * dt
    for k in range(s):
        out[k] = (-3.0 * A[k] + 4.0 * A[k + s] - A[k + 2 * s]) / (2.0 * h)
        out[K - 1 - k] = (3.0 * A[K - 1 - k] - 4.0 * A[K - 1 - k - s]
                          + A[K - 1 - k - 2 * s]) / (2.0 * h)
    return out


@dataclass
class ProofSignals:
    """Per-sample values of the error-dynamics signal set."""

    t: float
    M: np.ndarray
    f: np.ndarray
    N: np.ndarray
    Nbar: np.ndarray
    Ntilde: np.ndarray
    Lam: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    Theta: np.ndarray
    Omega: np.ndarray
    U: np.ndarray
    Ubar: np.ndarray
    D: np.ndarray
    z: np.ndarray
    V1: float
    L: float
    P: float = None
    V: float = None


@dataclass
class ProofSeries:
    """Arrays of proof signals over the log grid (one row per sample)."""

    t: np.ndarray
    M: np.ndarray
    f: np.ndarray
    N: np.ndarray
    Nbar: np.ndarray
    Ntilde: np.ndarray
    Lam: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    Theta: np.ndarray
    Omega: np.ndarray
    U: np.ndarray
    Ubar: np.ndarray
    D: np.ndarray
    z: np.ndarray
    V1: np.ndarray
    L: np.ndarray
    P: np.ndarray = None
    V: np.ndarray = None

    def at(self, k):
        """Signals of sample ``k`` as a ``ProofSignals`` record."""
        return ProofSignals(
            t=float(self.t[k]), M=self.M[k], f=self.f[k], N=self.N[k],
            Nbar=self.Nbar[k], Ntilde=self.Ntilde[k], Lam=self.Lam[k],
            Phi=self.Phi[k], Psi=self.Psi[k], Theta=self.Theta[k],
            Omega=self.Omega[k], U=self.U[k], Ubar=self.Ubar[k],
            D=self.D[k], z=self.z[k], V1=float(self.V1[k]),
            L=float(self.L[k]),
            P=None if self.P is None else float(self.P[k]),
            V=None if self.V is None else float(self.V[k]))


def _factor_series(g_fn, X_series):
    """Pointwise S, D-diag, U of ``g`` along a state series."""
    K = X_series.shape[0]
    g0 = g_fn(X_series[0])
    m = g0.shape[0]
    S = np.empty((K, m, m))
    D = np.empty((K, m))
    U = np.empty((K, m, m))
    gs = np.empty((K, m, m))
    for k in range(K):
        gs[k] = g_fn(X_series[k])
        fac = sdu_decompose(gs[k])
        S[k] = fac.S
        D[k] = np.diag(fac.D)
        U[k] = fac.U
    return gs, S, D, U


def _h_series(h_fn, X_series):
    K = X_series.shape[0]
    out = np.empty((K, h_fn(X_series[0]).size))
    for k in range(K):
        out[k] = h_fn(X_series[k])
    return out


def reference_signal_series(ref, plant, t, stride=1):
    """Reference-path quantities Nbar, Omega, Ubar, D over a time grid.

    On the reference path every cascade error vanishes, so the
    disturbance reduces to ``Nbar = M(X_r) x_r^(n+1) - f(X_r, x_r^(n))``,
    a function of time alone.  ``t`` must be a uniform grid.
    """
    t = np.asarray(t, dtype=float)
    n, m = plant.n, plant.m
    if ref.order < n + 1:
        raise ValueError("reference must provide derivatives through n + 1")
    K = t.size
    dt = t[1] - t[0]
    Xr = np.empty((K, m * n))
    xr_n = np.empty((K, m))
    xr_n1 = np.empty((K, m))
    for k in range(K):
        rd = ref.stack(t[k], n + 1)
        Xr[k] = rd[:n].reshape(-1)
        xr_n[k] = rd[n]
        xr_n1[k] = rd[n + 1]
    gr, Sr, Dr, Ur = _factor_series(plant.g, Xr)
    hr = _h_series(plant.h, Xr)
    hr_dot = _dseries(hr, dt, stride)
    gr_dot = _dseries(gr, dt, stride)
    Mr = np.linalg.inv(Sr)
    resid = np.linalg.solve(gr, (xr_n - hr)[..., None])[..., 0]
    phir = hr_dot + np.einsum("kij,kj->ki", gr_dot, resid)
    Nbar = np.einsum("kij,kj->ki", Mr, xr_n1 - phir)
    eye = np.eye(m)
    Omega = Dr[:, :, None] * (Ur - eye) * Dr[:, None, :]
    return Nbar, Omega, Ur, Dr


def proof_signal_series(log, plant, ref, gains, fd_step=None):
    """Evaluate the proof-signal set at every logged sample.

    ``fd_step`` is the finite-difference step for the h, g, M time
    derivatives; it must be an integer multiple of the log spacing
    (default: one log interval).  ``P`` and ``V`` stay unset here; they
    need bound constants, see :func:`L_and_P` / :func:`lemma2_report`.
    """
    n, m = log.n, log.m
    K = len(log)
    dt = log.dt
    stride = 1 if fd_step is None else int(round(fd_step / dt))
    if stride < 1 or abs(stride * dt - (fd_step or dt)) > 1e-12 * max(1.0, dt):
        raise ValueError("fd_step must be a positive integer multiple of the log spacing")

    gs, S, Dd, U = _factor_series(plant.g, log.X)
    hs = _h_series(plant.h, log.X)
    M = np.linalg.inv(S)
    h_dot = _dseries(hs, dt, stride)
    g_dot = _dseries(gs, dt, stride)
    M_dot = _dseries(M, dt, stride)
    if not (np.isfinite(h_dot).all() and np.isfinite(g_dot).all()):
        raise NonFiniteStateError(float(log.t[0]))

    resid = np.linalg.solve(gs, (log.xdn - hs)[..., None])[..., 0]
    phi = h_dot + np.einsum("kij,kj->ki", g_dot, resid)
    f = np.einsum("kij,kj->ki", M, phi)

    # e1 derivatives 0..n from the log, order n via the logged x^(n)
    e1d = np.concatenate(
        [log.xr_derivs[:, :n] - log.X.reshape(K, n, m),
         (log.xr_derivs[:, n] - log.xdn)[:, None, :]], axis=1)
    coeffs = cascade_coefficients(n)
    a_n = coeffs.row_floats(n)
    xr_n1 = np.empty((K, m))
    for k in range(K):
        xr_n1[k] = ref.stack(log.t[k], n + 1)[n + 1]
    en = log.en
    r = log.r
    en_dot = np.einsum("j,kjm->km", a_n, e1d[:, 1:])
    chain = xr_n1 + np.einsum("j,kjm->km", a_n[: n - 1], e1d[:, 2: n + 1])
    N = (np.einsum("kij,kj->ki", M, chain + gains.alpha * en_dot)
         - f + en + 0.5 * np.einsum("kij,kj->ki", M_dot, r))

    Nbar, Omega, Ubar, Dr = reference_signal_series(ref, plant, log.t, stride)
    Ntilde = N - Nbar

    Ut = U - Ubar
    sgn = np.sign(en)
    Kd = gains.K_diag
    C = gains.C
    # Lambda/Phi/Psi: strictly-upper couplings against r and sgn(e_n)
    Lam = np.einsum("ki,kij,kj,j,kj->ki", Dd, Ut, Dd, Kd, r)[:, : m - 1]
    Phi_u = np.triu(Ubar - np.eye(m), 1)
    Phi = np.einsum("ki,kij,kj,j,kj->ki", Dd, Phi_u, Dd, Kd, r)[:, : m - 1]
    Psi = np.einsum("ki,kij,kj,j,kj->ki", Dd, Ut, Dd, C, sgn)[:, : m - 1]
    eyeC = np.eye(m)
    Theta = np.einsum("kij,kj->ki", eyeC + Omega, C * sgn)

    z = np.concatenate([log.e.reshape(K, n * m), r], axis=1)
    Mr_quad = np.einsum("ki,kij,kj->k", r, M, r)
    V1 = 0.5 * (np.einsum("kj,kj->k", z[:, : n * m], z[:, : n * m]) + Mr_quad)
    L = np.einsum("ki,ki->k", r, Nbar - Theta)

    return ProofSeries(t=log.t.copy(), M=M, f=f, N=N, Nbar=Nbar,
                       Ntilde=Ntilde, Lam=Lam, Phi=Phi, Psi=Psi, Theta=Theta,
                       Omega=Omega, U=U, Ubar=Ubar, D=Dd, z=z, V1=V1, L=L)


def proof_signals_at(log, k, plant, ref, gains, fd_step=None):
    """Proof signals at one logged sample.

    Evaluates the series machinery on the window of samples the
    finite-difference stencil at ``k`` can reach, so the result equals
    the corresponding row of :func:`proof_signal_series` exactly.
    """
    K = len(log)
    if not 0 <= k < K:
        raise IndexError(f"sample {k} outside 0..{K - 1}")
    stride = 1 if fd_step is None else int(round(fd_step / log.dt))
    lo = max(0, k - 2 * stride)
    hi = min(K, k + 2 * stride + 1)
    window = TrajectoryWindow(log, lo, hi)
    series = proof_signal_series(window, plant, ref, gains, fd_step)
    return series.at(k - lo)


class TrajectoryWindow:
    """Contiguous view of a TrajectoryLog (duck-typed for analysis)."""

    def __init__(self, log, lo, hi):
        self.m, self.n = log.m, log.n
        self.dt = log.dt
        self.t = log.t[lo:hi]
        self.X = log.X[lo:hi]
        self.xr_derivs = log.xr_derivs[lo:hi]
        self.e = log.e[lo:hi]
        self.r = log.r[lo:hi]
        self.tau = log.tau[lo:hi]
        self.xdn = log.xdn[lo:hi]

    def __len__(self):
        return self.t.size

    @property
    def en(self):
        return self.e[:, self.n - 1, :]

    @property
    def e1(self):
        return self.e[:, 0, :]


def L_and_P(t, r, Nbar, Omega, C, en, zeta_L_value, rule="trapezoid"):
    """Integrand ``L = r^T (Nbar - (I + Omega) C Sgn(e_n))`` and its
    running energy ``P(t) = zeta_L - int_t0^t L``.

    ``P(t0) = zeta_L`` exactly.  ``rule`` selects trapezoidal (default)
    or Simpson quadrature; Simpson serves as a convergence cross-check.
    """
    t = np.asarray(t, dtype=float)
    m = np.atleast_1d(np.asarray(C, dtype=float)).size
    eye = np.eye(m)
    L = np.einsum("ki,ki->k", r,
                  Nbar - np.einsum("kij,kj->ki", eye + Omega,
                                   np.asarray(C) * np.sign(en)))
    if rule == "trapezoid":
        intL = cumulative_trapezoid(L, t, initial=0.0)
    elif rule == "simpson":
        intL = cumulative_simpson(L, x=t, initial=0.0)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return L, zeta_L_value - intL


def lemma1_margin_series(t, e, edot, gamma1, gamma2):
    """Running slack of the integral inequality for one channel:

    ``gamma1 + gamma2 int|e| + |e(t)| - int|e'|`` on the sample grid,
    trapezoidal quadrature.  Non-negative everywhere iff the inequality
    holds on this run with these constants.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    edot = np.asarray(edot, dtype=float)
    if t.shape != e.shape or e.shape != edot.shape:
        raise ValueError("t, e and edot must share one uniform grid")
    int_e = cumulative_trapezoid(np.abs(e), t, initial=0.0)
    int_ed = cumulative_trapezoid(np.abs(edot), t, initial=0.0)
    return gamma1 + gamma2 * int_e + np.abs(e) - int_ed


def check_lemma1(t, e, edot, gamma1, gamma2):
    """Worst-case margin of the integral inequality (min over time)."""
    return float(lemma1_margin_series(t, e, edot, gamma1, gamma2).min())


def detected_gamma1(t, en, en_dot):
    """Empirical gamma1: sup of |e_n,i| over instants where e_n,i' flips sign."""
    en = np.atleast_2d(np.asarray(en, dtype=float).T).T
    en_dot = np.atleast_2d(np.asarray(en_dot, dtype=float).T).T
    best = 0.0
    for i in range(en.shape[1]):
        s = np.sign(en_dot[:, i])
        flips = np.where(s[1:] * s[:-1] < 0.0)[0]
        if flips.size:
            best = max(best, float(np.abs(en[flips, i]).max()))
    return best


@dataclass
class Lemma1Search:
    """Result of the (gamma1, gamma2) feasibility search."""

    feasible: bool
    gamma1: float = None
    gamma2: float = None
    margin: float = None


def lemma1_grid_search(t, en, en_dot, gamma1_grid=None, gamma2_grid=None):
    """Smallest feasible (gamma1, gamma2) over integer grids (default 0..10).

    Feasible means the inequality margin is non-negative for every
    channel.  Near-zero-mean channels can make gamma2 ill-posed; then no
    grid point works and the result reports infeasibility rather than a
    guessed pair.
    """
    if gamma1_grid is None:
        gamma1_grid = range(0, 11)
    if gamma2_grid is None:
        gamma2_grid = range(0, 11)
    en = np.atleast_2d(np.asarray(en, dtype=float).T).T
    en_dot = np.atleast_2d(np.asarray(en_dot, dtype=float).T).T
    for g2 in gamma2_grid:
        for g1 in gamma1_grid:
            margin = min(check_lemma1(t, en[:, i], en_dot[:, i], g1, g2)
                         for i in range(en.shape[1]))
            if margin >= 0.0:
                return Lemma1Search(feasible=True, gamma1=float(g1),
                                    gamma2=float(g2), margin=margin)
    return Lemma1Search(feasible=False)


def estimate_bounds(ref, plant, horizon, dt, safety=0.1, stride=1):
    """Empirical bound constants from a reference-path sweep.

    Samples ``[0, horizon]`` at spacing ``dt`` and returns
    ``zeta = (1 + safety) * sup |.|`` for the reference disturbance
    channels, the strictly-upper coupling entries ``Omega`` and the full
    upper factor ``Ubar``.  Deterministic for a fixed grid.  The gamma
    constants are left at zero: they are properties of a closed-loop run,
    not of the reference.
    """
    if horizon <= 0.0 or dt <= 0.0:
        raise ValueError("horizon and dt must be positive")
    steps = int(round(horizon / dt))
    t = np.arange(steps + 1) * dt
    Nbar, Omega, Ubar, _ = reference_signal_series(ref, plant, t, stride)
    m = plant.m
    factor = 1.0 + safety
    zeta_Nbar = factor * np.abs(Nbar).max(axis=0)
    zeta_Omega = factor * np.abs(Omega).max(axis=0)
    zeta_Omega[np.tril_indices(m)] = 0.0
    zeta_Ubar = factor * np.abs(Ubar).max(axis=0)
    zeta_Ubar[np.tril_indices(m, -1)] = 0.0
    return BoundEstimates(zeta_Nbar=zeta_Nbar, zeta_Omega=zeta_Omega,
                          zeta_Ubar=zeta_Ubar)


def clean_sample_mask(log, width=2):
    """Samples at least ``width`` log intervals from any e_n sign change.

    Uses the simulator's stage-level flags when present (they catch
    switches between samples); otherwise falls back to sampled sign
    changes.  The first and last ``width`` samples are excluded, matching
    the reach of the finite-difference stencils.
    """
    K = len(log)
    en_sign = np.sign(log.en)
    sampled_same = np.all(en_sign[1:] == en_sign[:-1], axis=1)
    nonzero = np.all(en_sign[:-1] != 0.0, axis=1)
    step_clean = sampled_same & nonzero
    if log.sign_clean is not None:
        step_clean = step_clean & log.sign_clean
    mask = np.zeros(K, dtype=bool)
    for k in range(width, K - width):
        mask[k] = bool(step_clean[k - width: k + width].all())
    return mask


@dataclass
class Lemma2Report:
    """Full gain-condition and energy audit of one logged run."""

    bounds: BoundEstimates
    lemma1: Lemma1Search
    C_used: np.ndarray
    C_min: np.ndarray = None
    C_passed: bool = False
    alpha_margin: float = None
    zeta_L: float = None
    L: np.ndarray = None
    P: np.ndarray = None
    V1: np.ndarray = None
    V: np.ndarray = None
    min_P: float = None
    series: ProofSeries = field(default=None, repr=False)

    @property
    def passed(self):
        return (self.lemma1.feasible and self.C_passed
                and self.alpha_margin is not None and self.alpha_margin >= 0.0
                and self.min_P is not None and self.min_P >= 0.0)


def lemma2_report(log, plant, ref, gains, safety=0.1, gamma1_grid=None,
                  gamma2_grid=None, rule="trapezoid"):
    """Audit a run against the sign-gain conditions and P >= 0.

    Estimates the zeta bounds from the reference, searches feasible
    (gamma1, gamma2) on the run, compares the run's C against the minimal
    gains, and integrates L into P and V = V1 + P.
    """
    series = proof_signal_series(log, plant, ref, gains)
    horizon = float(log.t[-1]) if log.t[-1] > 0 else log.dt
    bounds = estimate_bounds(ref, plant, horizon=horizon, dt=log.dt,
                             safety=safety)
    en_dot = log.r - gains.alpha * log.en
    search = lemma1_grid_search(log.t, log.en, en_dot, gamma1_grid, gamma2_grid)
    report = Lemma2Report(bounds=bounds, lemma1=search, C_used=gains.C,
                          series=series)
    report.alpha_margin = check_alpha(gains.alpha).margin
    if not search.feasible:
        return report
    bounds.gamma1 = search.gamma1
    bounds.gamma2 = search.gamma2
    validation = validate_C(gains.C, bounds, gains.alpha)
    report.C_min = validation.C_min
    report.C_passed = validation.passed
    zl = zeta_L(bounds, gains.C, log.en0)
    L, P = L_and_P(log.t, log.r, series.Nbar, series.Omega, gains.C, log.en,
                   zl, rule=rule)
    report.zeta_L = zl
    report.L = L
    report.P = P
    report.V1 = series.V1
    report.V = series.V1 + P
    report.min_P = float(P.min())
    series.P = P
    series.V = report.V
    return report


@dataclass
class SplitResiduals:
    """Per-sample agreement of the triangular splits with direct products."""

    rel_gain_split: np.ndarray
    rel_sign_split: np.ndarray
    last_entry: np.ndarray


def splitting_residuals(series, gains, en):
    """Check both triangular-split identities sample by sample.

    ``D (U - I) D K r`` against ``[Lambda + Phi, 0]`` and
    ``D U D C Sgn(e_n)`` against ``[Psi, 0] + Theta``.  Relative
    mismatch uses the direct-product norm (floored at the tiniest
    normal float); the last entry of the first product is returned
    unscaled because it is structurally zero.
    """
    K = series.t.size
    m = series.D.shape[1]
    eye = np.eye(m)
    Kd = gains.K_diag
    C = gains.C
    rel24 = np.empty(K)
    rel29 = np.empty(K)
    last24 = np.empty(K)
    floor = np.finfo(float).tiny
    for k in range(K):
        Dm = series.D[k]
        U = series.U[k]
        r = series.z[k, -m:]
        sgn = np.sign(en[k])
        direct24 = Dm * ((U - eye) @ (Dm * (Kd * r)))
        split24 = np.concatenate([series.Lam[k] + series.Phi[k], [0.0]])
        rel24[k] = (np.linalg.norm(direct24 - split24)
                    / max(np.linalg.norm(direct24), floor))
        last24[k] = abs(direct24[-1])
        direct29 = Dm * (U @ (Dm * (C * sgn)))
        split29 = np.concatenate([series.Psi[k], [0.0]]) + series.Theta[k]
        rel29[k] = (np.linalg.norm(direct29 - split29)
                    / max(np.linalg.norm(direct29), floor))
    return SplitResiduals(rel_gain_split=rel24, rel_sign_split=rel29,
                          last_entry=last24)
