"""Dense symmetric positive-definite kernels.

Thin wrappers over LAPACK (through scipy) with a scale-relative singularity
test.  All routines are pure; inputs are never modified.
"""

import numpy as np
import scipy.linalg as sla

from .errors import SingularError

PIVOT_FLOOR = 1e-12


def as_sym(a):
    """Return ``(a + a.T) / 2`` as a float64 array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def cholesky(s, symmetrize=True):
    """Lower Cholesky factor of ``s``.

    Raises SingularError when a pivot falls below ``PIVOT_FLOOR`` times the
    largest diagonal entry.
    """
    s = as_sym(s) if symmetrize else s
    top = float(np.max(np.diag(s)))
    if not np.isfinite(top) or top <= 0.0:
        raise SingularError("matrix has no positive diagonal entry")
    try:
        low = sla.cholesky(s, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularError(str(exc)) from None
    piv = np.diag(low) ** 2
    if not np.all(np.isfinite(piv)) or piv.min() <= PIVOT_FLOOR * top:
        raise SingularError(f"pivot {piv.min():.3e} below floor {PIVOT_FLOOR * top:.3e}")
    return low


def log_det_from_factor(low):
    return 2.0 * float(np.sum(np.log(np.diag(low))))


def log_det_pd(s):
    return log_det_from_factor(cholesky(s))


def solve_pd(s, b, factor=None):
    """Solve ``s @ x = b`` through the Cholesky factor (computed if not given)."""
    low = cholesky(s) if factor is None else factor
    return sla.cho_solve((low, True), np.asarray(b, dtype=np.float64), check_finite=False)


def trace_prod(a, b):
    """``trace(a @ b)`` without forming the product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.einsum("ij,ji->", a, b))


def whiten(low, rows):
    """Return ``rows @ inv(low).T`` for a lower factor ``low``.

    For ``G = low @ low.T`` the squared row norms of the result are
    ``r @ inv(G) @ r`` for each row ``r``.  Only the triangular factor is
    inverted (a GEMM is much faster than a many-column triangular solve).
    """
    inv_low = sla.solve_triangular(low, np.eye(low.shape[0]), lower=True, check_finite=False)
    return rows @ inv_low.T
