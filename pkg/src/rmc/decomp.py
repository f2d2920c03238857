"""Input-gain matrix factorization g = S D U.

For a square matrix with non-zero leading principal minors, the unpivoted
triangular factorization ``g = L Dt Ut`` (L unit lower, Dt diagonal,
Ut unit upper) exists and is unique.  From it we assemble

    D = sign(Dt)          diagonal, entries exactly +-1
    S = L |Dt| L^T        symmetric positive definite by congruence
    U = D L^{-T} D Ut     unit upper triangular

which reconstructs ``S D U = L |Dt| L^T L^{-T} D Ut = L Dt Ut = g``.
Pivoting is never used: row exchanges would destroy the leading-minor
structure the factorization relies on.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import SingularMinorError

#: Relative floor below which a leading minor counts as zero.
MINOR_RTOL = 1e-12


@dataclass
class SduFactors:
    """Factors of ``g = S D U``.

    S is symmetric positive definite, D diagonal with entries exactly
    +-1, U unit upper triangular (unit diagonal, zero strict lower part).
    """

    S: np.ndarray
    D: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float)
        self.D = np.asarray(self.D, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        m = self.S.shape[0]
        d = np.diag(self.D)
        if np.any(np.abs(d) != 1.0) or np.any(self.D - np.diag(d) != 0.0):
            raise ValueError("D must be diagonal with entries exactly +-1")
        if np.any(np.diag(self.U) != 1.0):
            raise ValueError("U must have a unit diagonal")
        if np.any(np.tril(self.U, -1) != 0.0):
            raise ValueError("U must be upper triangular")
        if self.S.shape != (m, m) or self.U.shape != (m, m):
            raise ValueError("factor shapes disagree")

    def reconstruct(self):
        """Return the product ``S @ D @ U``."""
        return self.S @ self.D @ self.U


def _square(g):
    g = np.asarray(g, dtype=float)
    if g.ndim == 0:
        g = g.reshape(1, 1)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    return g


def leading_minors(g):
    """Determinants of the top-left k x k blocks, k = 1..m.

    Zeros are reported, not rejected.
    """
    g = _square(g)
    m = g.shape[0]
    out = np.empty(m)
    out[0] = g[0, 0]
    for k in range(2, m + 1):
        out[k - 1] = np.linalg.det(g[:k, :k])
    return out


def _checked_minors(g):
    """Leading minors with the scale-aware singularity gate applied."""
    minors = leading_minors(g)
    scale = np.linalg.norm(g, "fro")
    for k, d in enumerate(minors, start=1):
        if abs(d) < MINOR_RTOL * max(1.0, scale ** k):
            raise SingularMinorError(k, value=d)
    return minors


def _ldu_nopivot(g):
    """Unpivoted Doolittle factorization ``g = L diag(d) Ut``.

    Valid exactly when the leading minors are non-zero (callers gate on
    that first); the pivots satisfy ``d[k] = minor(k+1) / minor(k)``.
    """
    m = g.shape[0]
    U = g.copy()
    L = np.eye(m)
    for k in range(m):
        piv = U[k, k]
        for i in range(k + 1, m):
            L[i, k] = U[i, k] / piv
            U[i, k:] -= L[i, k] * U[k, k:]
            U[i, k] = 0.0
    d = np.diag(U).copy()
    Ut = U / d[:, None]
    np.fill_diagonal(Ut, 1.0)
    return L, d, Ut


def sdu_decompose(g):
    """Factor ``g`` into ``SduFactors`` (see module docstring).

    Raises
    ------
    SingularMinorError
        If any leading principal minor falls below the relative floor.
    """
    g = _square(g)
    _checked_minors(g)
    m = g.shape[0]
    L, d, Ut = _ldu_nopivot(g)
    dsign = np.sign(d)
    S = L @ np.diag(np.abs(d)) @ L.T
    S = 0.5 * (S + S.T)
    Linv_t = np.linalg.inv(L).T
    U = (dsign[:, None] * Linv_t * dsign[None, :]) @ Ut
    # The product is unit upper triangular analytically; pin the class
    # membership exactly against rounding.
    np.fill_diagonal(U, 1.0)
    U[np.tril_indices(m, -1)] = 0.0
    return SduFactors(S=S, D=np.diag(dsign), U=U)


def sign_matrix(g):
    """Diagonal +-1 matrix of successive leading-minor ratio signs.

    Returns the D factor of ``sdu_decompose`` without forming S or U:
    ``D[k,k] = sign(minor_k / minor_{k-1})`` with ``minor_0 = 1``.
    """
    g = _square(g)
    minors = _checked_minors(g)
    signs = np.sign(minors)
    d = signs.copy()
    d[1:] = signs[1:] * signs[:-1]
    return np.diag(d)
