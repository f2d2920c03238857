"""Robust tracking control law and gain-condition checkers.

The control input is continuous,

    tau = D K [e_n - e_n(t0) + alpha * int(e_n)] + D Pi,
    Pi' = C Sgn(e_n),   Pi(t0) = 0,

with everything on the right measurable: the controller never needs the
filtered error ``r`` or the plant model beyond the sign matrix D.  The
discontinuous sign term is integrated once before it reaches ``tau``, so
the input itself stays continuous.  ``sgn(0)`` is taken as 0, which keeps
``Pi'`` bounded at exact zero crossings.

Gain structure: ``K = (1 + k_p) I + diag{k_d_1, .., k_d_{m-1}, 0}``.
"""

from dataclasses import dataclass, field

import numpy as np

from .cascade import diagonal_entries


def compose_K(k_p, k_d):
    """Assemble the structured diagonal gain K as an m x m matrix.

    ``K[i,i] = 1 + k_p + k_d[i]`` for i < m-1 entries, ``K[m-1,m-1] = 1 + k_p``.
    """
    k_p = float(k_p)
    k_d = np.atleast_1d(np.asarray(k_d, dtype=float))
    if k_d.size == 0:
        k_d = k_d.reshape(0)
    if k_p <= 0.0:
        raise ValueError(f"k_p must be positive, got {k_p}")
    if np.any(k_d <= 0.0):
        raise ValueError("all k_d entries must be positive")
    m = k_d.size + 1
    diag = np.full(m, 1.0 + k_p)
    diag[: m - 1] += k_d
    return np.diag(diag)


@dataclass
class GainSet:
    """Controller gains for an m-channel plant.

    ``alpha``, ``C`` and ``D`` are diagonal matrices stored as their
    diagonal entries; ``D`` holds the plant's +-1 sign pattern.  ``C``
    entries may be zero (no disturbance rejection) but never negative.
    """

    alpha: np.ndarray
    k_p: float
    k_d: np.ndarray
    C: np.ndarray
    D: np.ndarray
    K_diag: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.k_d = np.asarray(self.k_d, dtype=float).reshape(-1)
        self.C = np.atleast_1d(np.asarray(self.C, dtype=float))
        self.D = np.atleast_1d(np.asarray(self.D, dtype=float))
        self.k_p = float(self.k_p)
        m = self.alpha.size
        if self.k_d.size != m - 1:
            raise ValueError(f"k_d must have {m - 1} entries, got {self.k_d.size}")
        if self.C.size != m or self.D.size != m:
            raise ValueError("alpha, C and D must share the channel count")
        if np.any(self.alpha <= 0.0):
            raise ValueError("alpha entries must be positive")
        if np.any(self.C < 0.0):
            raise ValueError("C entries must be non-negative")
        if np.any(np.abs(self.D) != 1.0):
            raise ValueError("D entries must be exactly +-1")
        self.K_diag = np.diag(compose_K(self.k_p, self.k_d)) if m > 1 else \
            np.diag(compose_K(self.k_p, np.empty(0)))

    @property
    def m(self):
        return self.alpha.size

    @property
    def K(self):
        """K as a full diagonal matrix."""
        return np.diag(self.K_diag)


@dataclass
class ControllerState:
    """Integrator state of the control law.

    ``en0`` is captured once at start and frozen; restart requires a
    fresh instance.
    """

    Pi: np.ndarray
    int_en: np.ndarray
    en0: np.ndarray

    def __post_init__(self):
        self.Pi = np.asarray(self.Pi, dtype=float)
        self.int_en = np.asarray(self.int_en, dtype=float)
        en0 = np.array(self.en0, dtype=float)
        en0.flags.writeable = False
        self.en0 = en0

    @classmethod
    def at_start(cls, en0):
        """Fresh state at t0: ``Pi = 0``, ``int_en = 0``."""
        en0 = np.asarray(en0, dtype=float)
        return cls(Pi=np.zeros_like(en0), int_en=np.zeros_like(en0), en0=en0)


def control_input(e_n, state, gains):
    """Evaluate ``tau`` from the current cascade tail and integrator state.

    Pure read: neither ``state`` nor ``gains`` is mutated.  At t0 (where
    ``e_n == en0`` and the integrators are zero) the result is exactly 0.
    """
    e_n = np.asarray(e_n, dtype=float)
    if e_n.shape != state.en0.shape:
        raise ValueError("e_n dimension does not match controller state")
    inner = e_n - state.en0 + gains.alpha * state.int_en
    return gains.D * (gains.K_diag * inner) + gains.D * state.Pi


def controller_state_derivative(e_n, gains):
    """Time derivatives ``(Pi', d/dt int_en) = (C Sgn(e_n), e_n)``."""
    e_n = np.asarray(e_n, dtype=float)
    return gains.C * np.sign(e_n), e_n.copy()


@dataclass
class GainCheck:
    """Outcome of a scalar gain condition."""

    passed: bool
    margin: float


def check_alpha(alpha):
    """Check the filtered-error gain condition ``lambda_min(alpha) >= 1/2``."""
    a = diagonal_entries(alpha, "alpha")
    margin = float(a.min()) - 0.5
    return GainCheck(passed=margin >= 0.0, margin=margin)


@dataclass
class BoundEstimates:
    """Disturbance-bound constants feeding the C gain conditions.

    ``zeta_Nbar[i]`` bounds the i-th reference-evaluated disturbance
    channel; ``zeta_Omega[i, j]`` (strictly upper triangular) bounds the
    reference coupling entries; ``zeta_Ubar`` additionally keeps the
    upper-triangular reference factor bounds for pointwise checks.
    ``gamma1``/``gamma2`` are the integral-inequality constants, supplied
    by the caller or estimated from a run.
    """

    zeta_Nbar: np.ndarray
    zeta_Omega: np.ndarray
    gamma2: float = 0.0
    gamma1: float = 0.0
    zeta_Ubar: np.ndarray = None

    def __post_init__(self):
        self.zeta_Nbar = np.atleast_1d(np.asarray(self.zeta_Nbar, dtype=float))
        m = self.zeta_Nbar.size
        self.zeta_Omega = np.asarray(self.zeta_Omega, dtype=float).reshape(m, m)
        self.gamma1 = float(self.gamma1)
        self.gamma2 = float(self.gamma2)
        if np.any(self.zeta_Nbar < 0.0) or np.any(self.zeta_Omega < 0.0):
            raise ValueError("bound constants must be non-negative")
        if self.gamma1 < 0.0 or self.gamma2 < 0.0:
            raise ValueError("gamma constants must be non-negative")
        if np.any(self.zeta_Omega[np.tril_indices(m)] != 0.0):
            raise ValueError("zeta_Omega must be strictly upper triangular")
        if self.zeta_Ubar is not None:
            self.zeta_Ubar = np.asarray(self.zeta_Ubar, dtype=float).reshape(m, m)

    @property
    def m(self):
        return self.zeta_Nbar.size


def minimal_C(bounds, alpha):
    """Smallest sign-gain vector satisfying the backward recursion.

    ``C_m = zeta_Nbar_m (1 + gamma2 / alpha_m)`` and, descending,
    ``C_i = (zeta_Nbar_i + sum_{j>i} zeta_Omega_{i,j} C_j)(1 + gamma2 / alpha_i)``.
    Any elementwise-larger C also satisfies the gain conditions.
    """
    a = diagonal_entries(alpha, "alpha")
    if np.any(a <= 0.0):
        raise ValueError("alpha entries must be positive")
    m = bounds.m
    if a.size != m:
        raise ValueError("alpha dimension does not match bounds")
    C = np.zeros(m)
    C[m - 1] = bounds.zeta_Nbar[m - 1] * (1.0 + bounds.gamma2 / a[m - 1])
    for i in range(m - 2, -1, -1):
        coupling = float(np.dot(bounds.zeta_Omega[i, i + 1:], C[i + 1:]))
        C[i] = (bounds.zeta_Nbar[i] + coupling) * (1.0 + bounds.gamma2 / a[i])
    return C


@dataclass
class CValidation:
    """Comparison of a user C against the minimal admissible gains."""

    C_min: np.ndarray
    margins: np.ndarray
    passed: bool


def validate_C(C, bounds, alpha):
    """Check a candidate ``C`` against ``minimal_C`` entrywise."""
    C = np.atleast_1d(np.asarray(C, dtype=float))
    cmin = minimal_C(bounds, alpha)
    margins = C - cmin
    return CValidation(C_min=cmin, margins=margins, passed=bool(np.all(margins >= 0.0)))


def zeta_L(bounds, C, en0):
    """Offset constant of the auxiliary energy function P.

    ``gamma1 * sum_{i<j} zeta_Omega_{i,j} C_j + gamma1 * sum_i zeta_Nbar_i
    + sum_i C_i |en0_i|``.
    """
    C = np.atleast_1d(np.asarray(C, dtype=float))
    en0 = np.atleast_1d(np.asarray(en0, dtype=float))
    coupling = float((bounds.zeta_Omega * C[None, :]).sum())
    return (bounds.gamma1 * coupling
            + bounds.gamma1 * float(bounds.zeta_Nbar.sum())
            + float(np.dot(C, np.abs(en0))))
