"""Dense least-squares kernel.

Minimum-norm solves go through the singular value decomposition; the normal
equations are never formed here (tests use them as an oracle).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-12


@dataclass(frozen=True)
class LsqSolution:
    solution: np.ndarray
    effective_rank: int
    residual_norm: float
    singular_values: np.ndarray

    @property
    def condition_number(self) -> float:
        s = self.singular_values
        if s.size == 0 or s[-1] == 0.0:
            return float("inf")
        return float(s[0] / s[-1])


def as_matrix(a) -> np.ndarray:
    """Coerce to a finite 2-D float array (a column vector for 1-D input)."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def lstsq_min_norm(a, f, rank_tol: float = DEFAULT_RANK_TOL) -> LsqSolution:
    """Minimum-norm minimizer of ``||a x - f||^2``.

    Singular values below ``rank_tol * s_max`` are treated as zero.

    Parameters
    ----------
    a : array_like, shape (m, n)
    f : array_like, shape (m,)
    rank_tol : float
        Relative cutoff in (0, 1).

    Returns
    -------
    LsqSolution
    """
    a = as_matrix(a)
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.shape[0] != a.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix has {a.shape[0]} rows, rhs has shape {f.shape}"
        )
    if not np.all(np.isfinite(f)):
        raise ValueError("right-hand side contains non-finite entries")
    if not 0.0 < rank_tol < 1.0:
        raise ValueError(f"rank_tol must lie in (0, 1), got {rank_tol}")

    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cutoff = rank_tol * s[0] if s.size and s[0] > 0 else 0.0
    keep = s > cutoff
    rank = int(np.count_nonzero(keep))
    coeffs = (u[:, keep].T @ f) / s[keep]
    x = vt[keep].T @ coeffs
    res = float(np.linalg.norm(a @ x - f))
    return LsqSolution(solution=x, effective_rank=rank, residual_norm=res, singular_values=s)


def gram(a) -> np.ndarray:
    """Return ``a^T a``."""
    a = as_matrix(a)
    g = a.T @ a
    # exact symmetry regardless of BLAS summation order
    return 0.5 * (g + g.T)


def is_positive_definite(m, tol: float = DEFAULT_RANK_TOL) -> bool:
    """True iff the smallest eigenvalue exceeds ``tol`` times the largest."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > max(tol, 1e-12) * scale:
        raise ValueError("matrix is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    if w[-1] <= 0.0:
        return False
    return bool(w[0] > tol * w[-1])
