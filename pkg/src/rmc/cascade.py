"""Tracking-error cascade.

The cascade starts from the output tracking error ``e1 = x_r - x`` and
chains auxiliary errors

    e2 = e1' + e1
    e_i = e_{i-1}' + e_{i-1} + e_{i-2}     (i >= 3)

so that every ``e_i`` is an integer combination of ``e1`` and its time
derivatives, ``e_i = sum_j a[i][j] * e1^(j)``.  The integer table ``a``
follows a Fibonacci-like recurrence and is kept exact; entries are
converted to float only where they multiply data.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CascadeCoefficients:
    """Integer coefficient table of the error cascade.

    ``rows[i - 1][j]`` holds ``a[i][j]``, the weight of the j-th derivative
    of ``e1`` inside ``e_i``.  Row ``i`` has exactly ``i`` entries.
    """

    n: int
    rows: tuple

    def row(self, i):
        """Return row ``a[i][:]`` (1-based) as a tuple of ints."""
        if not 1 <= i <= self.n:
            raise IndexError(f"row index {i} outside 1..{self.n}")
        return self.rows[i - 1]

    def row_floats(self, i):
        """Row ``i`` as a float64 vector, for numeric use."""
        return np.array(self.row(i), dtype=float)


def cascade_coefficients(n):
    """Build the coefficient table for a cascade of order ``n``.

    The recurrence is ``a[i][j] = a[i-1][j-1] + a[i-1][j] + a[i-2][j]``
    with out-of-range terms zero and seed ``a[1][0] = 1``.  The top
    coefficient ``a[i][i-1]`` is always 1.

    Parameters
    ----------
    n : int
        Cascade order (number of error signals), must be >= 1.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"cascade order must be >= 1, got {n}")
    rows = [(1,)]
    for i in range(2, n + 1):
        prev = rows[-1]
        prev2 = rows[-2] if i >= 3 else ()
        row = []
        for j in range(i):
            v = 0
            if 0 <= j - 1 < len(prev):
                v += prev[j - 1]
            if j < len(prev):
                v += prev[j]
            if j < len(prev2):
                v += prev2[j]
            row.append(v)
        rows.append(tuple(row))
    return CascadeCoefficients(n=n, rows=tuple(rows))


def _as_vector_list(vectors, name, n):
    out = [np.asarray(v, dtype=float) for v in vectors]
    if len(out) != n:
        raise ValueError(f"{name} must contain {n} vectors, got {len(out)}")
    m = out[0].shape
    for v in out:
        if v.shape != m:
            raise ValueError(f"{name} vectors have inconsistent shapes")
    return out


def compute_errors(x_derivs, xr_derivs, coeffs):
    """Evaluate ``e1 .. e_n`` from state and reference derivative stacks.

    Parameters
    ----------
    x_derivs, xr_derivs : sequence of n vectors
        ``x, x', ..., x^(n-1)`` and the matching reference derivatives.
    coeffs : CascadeCoefficients

    Returns
    -------
    list of ndarray
        ``[e1, ..., e_n]``, each with the shape of the input vectors.
    """
    n = coeffs.n
    xs = _as_vector_list(x_derivs, "x_derivs", n)
    rs = _as_vector_list(xr_derivs, "xr_derivs", n)
    if xs[0].shape != rs[0].shape:
        raise ValueError("x_derivs and xr_derivs vectors differ in shape")
    e1d = [r - x for r, x in zip(rs, xs)]
    errors = []
    for i in range(1, n + 1):
        row = coeffs.row(i)
        e_i = np.zeros_like(e1d[0])
        for j, a in enumerate(row):
            e_i = e_i + float(a) * e1d[j]
        errors.append(e_i)
    return errors


def combine_derivatives(e1_derivs, row_floats):
    """Weighted sum ``sum_j row[j] * e1_derivs[j]`` (hot-path helper)."""
    return np.einsum("j,j...->...", row_floats, np.asarray(e1_derivs))


def diagonal_entries(mat_or_vec, name="matrix"):
    """Diagonal entries of a diagonal gain, given as vector or full matrix."""
    a = np.asarray(mat_or_vec, dtype=float)
    if a.ndim == 0:
        return a.reshape(1)
    if a.ndim == 1:
        return a
    if a.ndim == 2 and a.shape[0] == a.shape[1]:
        off = a - np.diag(np.diag(a))
        if np.any(off != 0.0):
            raise ValueError(f"{name} must be diagonal")
        return np.diag(a).copy()
    raise ValueError(f"{name} has invalid shape {a.shape}")


def filtered_error(e_n, e_n_dot, alpha):
    """Filtered error ``r = e_n' + alpha e_n`` for diagonal positive alpha."""
    e_n = np.atleast_1d(np.asarray(e_n, dtype=float))
    e_n_dot = np.atleast_1d(np.asarray(e_n_dot, dtype=float))
    a = diagonal_entries(alpha, "alpha")
    if e_n.shape != e_n_dot.shape:
        raise ValueError("e_n and e_n_dot differ in shape")
    if a.shape != e_n.shape:
        raise ValueError("alpha dimension does not match e_n")
    if np.any(a <= 0.0):
        raise ValueError("alpha must have strictly positive diagonal entries")
    return e_n_dot + a * e_n
