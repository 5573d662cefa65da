"""Shared sparse helpers: symmetric Dirichlet elimination and a guarded solve."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystemError


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, dofs: np.ndarray,
                    values: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Eliminate Dirichlet dofs symmetrically.

    Moves the known columns to the right-hand side, zeroes the rows and
    columns, and places 1 on the diagonal with the prescribed value in b,
    so the reduced system stays symmetric when A is.
    """
    n = A.shape[0]
    x = np.zeros(n)
    x[dofs] = values
    b2 = b - A @ x
    keep = np.ones(n)
    keep[dofs] = 0.0
    d_free = sp.diags(keep)
    d_fix = sp.diags(1.0 - keep)
    A2 = (d_free @ A @ d_free + d_fix).tocsr()
    b2 *= keep
    b2[dofs] = values
    return A2, b2


def solve_sparse(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    """Direct sparse solve; raises SingularSystemError instead of warning."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(sp.csc_matrix(A), b)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SingularSystemError(str(exc)) from None
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("linear solve produced non-finite values")
    return x
