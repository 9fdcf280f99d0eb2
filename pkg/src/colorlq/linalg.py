"""Small dense helpers: symmetrization, PD tests and Cholesky-based solves."""

from __future__ import annotations

import numpy as np
import scipy.linalg

# Cholesky diagonal threshold used to declare a matrix positive definite.
PD_TOL = 1e-12


def sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def min_eig(X: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(sym(X))[0])


def pd_factor(X: np.ndarray, tol: float = PD_TOL):
    """Cholesky factor of ``X`` or ``None`` when ``X`` is not positive definite."""
    try:
        c, lower = scipy.linalg.cho_factor(X, lower=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return None
    if np.min(np.diag(c)) <= tol:
        return None
    return c, lower


def pd_solve(factor, B: np.ndarray) -> np.ndarray:
    return scipy.linalg.cho_solve(factor, B)


def quad(X: np.ndarray, x: np.ndarray) -> float:
    """x' X x."""
    return float(x @ X @ x)
