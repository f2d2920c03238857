"""Plant models and reference trajectories.

A plant is the true dynamics ``x^(n) = h(X) + g(X) tau`` with
``X = [x, x', ..., x^(n-1)]`` stacked channel-blocks first.  The
controller sees none of it except the sign matrix ``D_true``.

Shipped plants:

* ``two_link_as_plant``: planar two-link arm with input coupling.  The
  joint-space model is ``H(q) qdd + V(q, qd) qd = tau*`` with
  ``tau* = beta(q) [[1, 1], [0, 1]] tau`` and ``beta = det H``, so the
  input gain seen by the acceleration is ``g = beta H^{-1} [[1,1],[0,1]]``
  whose symmetric-positive part is ``beta H^{-1}``; all leading minors
  stay positive and ``D_true = I``.
* ``scalar_toy_plant``: ``x' = x^2 + (2 + sin x) tau``, a fast m = n = 1
  instance for integrator and bookkeeping tests.

All angles are radians internally; degree conversion happens only at the
configuration and CSV boundaries.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

_DEG = math.pi / 180.0

#: Inertia parameters (a1, a2, a3, a4) of the two-link benchmark arm.
TWO_LINK_PARAMS = (4.42, 0.97, 1.04, 0.6)

CORIOLIS_VARIANTS = ("paper", "corrected")


@dataclass
class PlantModel:
    """True plant ``x^(n) = h(X) + g(X) tau`` plus its shared sign matrix."""

    name: str
    m: int
    n: int
    h: Callable
    g: Callable
    D_true: np.ndarray

    def __post_init__(self):
        self.D_true = np.atleast_1d(np.asarray(self.D_true, dtype=float))
        if self.D_true.size != self.m or np.any(np.abs(self.D_true) != 1.0):
            raise ValueError("D_true must be m entries of exactly +-1")


@dataclass
class ReferenceTrajectory:
    """Reference ``x_r(t)`` with analytic derivatives through ``order``.

    ``stack(t, upto)`` returns an ``(upto + 1, m)`` array whose row k is
    the k-th time derivative at ``t``; closed forms only, no numerical
    differentiation.
    """

    name: str
    m: int
    order: int
    stack: Callable

    def derivative(self, k, t):
        """k-th derivative at time ``t`` as an (m,) vector."""
        if not 0 <= k <= self.order:
            raise ValueError(f"derivative order {k} outside 0..{self.order}")
        return self.stack(t, k)[k]

    @classmethod
    def from_derivatives(cls, name, m, funcs):
        """Build from one callable per derivative order (each t -> (m,))."""
        funcs = tuple(funcs)

        def stack(t, upto):
            if upto >= len(funcs):
                raise ValueError(f"derivative order {upto} not provided")
            return np.array([np.atleast_1d(np.asarray(f(t), dtype=float))
                             for f in funcs[: upto + 1]])

        return cls(name=name, m=m, order=len(funcs) - 1, stack=stack)


# ---------------------------------------------------------------------------
# Two-link manipulator
# ---------------------------------------------------------------------------

def two_link_matrices(q, qdot, params=TWO_LINK_PARAMS, coriolis_variant="paper"):
    """Inertia matrix H, velocity-coupling matrix V and ``beta = det H``.

    ``coriolis_variant`` selects the velocity-coupling scalar:
    ``"paper"`` uses ``h = a3 sin q2 - a4 sin q2`` verbatim, ``"corrected"``
    uses ``h = a3 sin q2 - a4 cos q2`` (the likely intended form).
    """
    a1, a2, a3, a4 = params
    if coriolis_variant not in CORIOLIS_VARIANTS:
        raise ValueError(f"unknown coriolis_variant {coriolis_variant!r}")
    q2 = q[1]
    c2 = math.cos(q2)
    s2 = math.sin(q2)
    H11 = a1 + 2.0 * a3 * c2 + 2.0 * a4 * s2
    H12 = a2 + a3 * c2 + a4 * s2
    H = np.array([[H11, H12], [H12, a2]])
    if coriolis_variant == "paper":
        hv = a3 * s2 - a4 * s2
    else:
        hv = a3 * s2 - a4 * c2
    qd1, qd2 = qdot[0], qdot[1]
    V = np.array([[-hv * qd2, -hv * (qd1 + qd2)], [-hv * qd1, 0.0]])
    beta = H11 * a2 - H12 * H12
    return H, V, beta


def two_link_accel(q, qdot, tau, params=TWO_LINK_PARAMS, coriolis_variant="paper"):
    """Joint accelerations of the two-link arm.

    Solves ``H qdd = -V qd + beta [[1,1],[0,1]] tau``.  H is globally
    invertible for the shipped parameters (``beta >= 1.9`` for all q2).
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    tau = np.asarray(tau, dtype=float)
    H, V, beta = two_link_matrices(q, qdot, params, coriolis_variant)
    tau_star = beta * np.array([tau[0] + tau[1], tau[1]])
    return np.linalg.solve(H, tau_star - V @ qdot)


def two_link_as_plant(params=TWO_LINK_PARAMS, coriolis_variant="paper"):
    """Two-link arm as ``qdd = h(X) + g(X) tau`` with m = n = 2.

    ``X = [q1, q2, qd1, qd2]``; ``g = beta H^{-1} [[1,1],[0,1]]`` has
    positive leading minors everywhere, hence ``D_true = I``.
    """
    a1, a2, a3, a4 = (float(p) for p in params)
    if coriolis_variant not in CORIOLIS_VARIANTS:
        raise ValueError(f"unknown coriolis_variant {coriolis_variant!r}")
    paper_h = coriolis_variant == "paper"

    def h(X):
        q2 = X[1]
        qd1 = X[2]
        qd2 = X[3]
        c2 = math.cos(q2)
        s2 = math.sin(q2)
        H11 = a1 + 2.0 * a3 * c2 + 2.0 * a4 * s2
        H12 = a2 + a3 * c2 + a4 * s2
        beta = H11 * a2 - H12 * H12
        hv = a3 * s2 - a4 * s2 if paper_h else a3 * s2 - a4 * c2
        # -H^{-1} V qd, with the 2x2 inverse written out
        v1 = -hv * (qd2 * qd1 + (qd1 + qd2) * qd2)
        v2 = -hv * qd1 * qd1
        return np.array([(a2 * v1 - H12 * v2) / -beta,
                         (-H12 * v1 + H11 * v2) / -beta])

    def g(X):
        q2 = X[1]
        c2 = math.cos(q2)
        s2 = math.sin(q2)
        H11 = a1 + 2.0 * a3 * c2 + 2.0 * a4 * s2
        H12 = a2 + a3 * c2 + a4 * s2
        # beta * H^{-1} = [[a2, -H12], [-H12, H11]]
        return np.array([[a2, a2 - H12], [-H12, H11 - H12]])

    return PlantModel(name="two_link", m=2, n=2, h=h, g=g,
                      D_true=np.ones(2))


def benchmark_reference():
    """Smoothly started sinusoid ``(1 - exp(-0.3 t^3)) [30, 45] sin t`` deg.

    Returned in radians with analytic derivatives through order 3.  The
    envelope factor reaches 1 to machine precision within a few seconds.
    """
    amp = np.array([30.0, 45.0]) * _DEG
    binom = ((1.0,), (1.0, 1.0), (1.0, 2.0, 1.0), (1.0, 3.0, 3.0, 1.0))

    def stack(t, upto):
        if upto > 3:
            raise ValueError(f"derivative order {upto} not provided")
        w = math.exp(-0.3 * t ** 3)
        env = (1.0 - w,
               0.9 * t * t * w,
               (1.8 * t - 0.81 * t ** 4) * w,
               (1.8 - 4.86 * t ** 3 + 0.729 * t ** 6) * w)
        st = math.sin(t)
        ct = math.cos(t)
        s = (st, ct, -st, -ct)
        out = np.empty((upto + 1, 2))
        for k in range(upto + 1):
            b = binom[k]
            val = 0.0
            for j in range(k + 1):
                val += b[j] * env[j] * s[k - j]
            out[k] = amp * val
        return out

    return ReferenceTrajectory(name="benchmark", m=2, order=3, stack=stack)


# ---------------------------------------------------------------------------
# Scalar toy plant
# ---------------------------------------------------------------------------

def scalar_toy_plant():
    """Minimal m = n = 1 plant ``x' = x^2 + (2 + sin x) tau``.

    The input gain stays inside [1, 3], so the leading minor never
    vanishes and ``D_true = (+1)``.
    """

    def h(X):
        return np.array([X[0] * X[0]])

    def g(X):
        return np.array([[2.0 + math.sin(X[0])]])

    return PlantModel(name="scalar_toy", m=1, n=1, h=h, g=g,
                      D_true=np.ones(1))


def toy_reference():
    """Unit sine reference for the scalar toy plant (derivatives to order 2)."""

    def stack(t, upto):
        if upto > 2:
            raise ValueError(f"derivative order {upto} not provided")
        vals = (math.sin(t), math.cos(t), -math.sin(t))
        return np.array(vals[: upto + 1]).reshape(upto + 1, 1)

    return ReferenceTrajectory(name="toy_sine", m=1, order=2, stack=stack)


def constant_reference(value, order, name="constant"):
    """Constant reference with zero derivatives (analysis helper)."""
    value = np.atleast_1d(np.asarray(value, dtype=float))
    m = value.size

    def stack(t, upto):
        out = np.zeros((upto + 1, m))
        out[0] = value
        return out

    return ReferenceTrajectory(name=name, m=m, order=order, stack=stack)
