"""Rank-aware linear algebra on small dense matrices.

Regressors in this library are at most 12x3, so everything here goes
through a full SVD. Rank decisions are relative to the largest singular
value so that state-dependent scaling of a regressor does not change its
numerical rank.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

from fxtadapt.errors import AllZeroMatrix, DimensionMismatch

__all__ = [
    "RankTolerance",
    "SubspaceSplit",
    "DEFAULT_TOL",
    "min_nonzero_singular_value",
    "numerical_rank",
    "rowspace_basis",
    "nullspace_basis",
    "split_row_null",
    "nullspace_constant",
]


@dataclass(frozen=True)
class RankTolerance:
    """Singular values below ``rel_tol * sigma_max`` count as zero."""

    rel_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")


DEFAULT_TOL = RankTolerance()


@dataclass(frozen=True)
class SubspaceSplit:
    row_part: np.ndarray
    null_part: np.ndarray


def _tol(tol) -> RankTolerance:
    if tol is None:
        return DEFAULT_TOL
    if isinstance(tol, RankTolerance):
        return tol
    return RankTolerance(float(tol))


def _svd(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    return M, U, s, Vt


def numerical_rank(M, tol=None) -> int:
    tol = _tol(tol)
    s = np.linalg.svd(np.atleast_2d(np.asarray(M, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol.rel_tol * s[0]))


def min_nonzero_singular_value(M, tol=None) -> float:
    """Smallest singular value of ``M`` that is numerically nonzero.

    Raises
    ------
    AllZeroMatrix
        If ``M`` has no singular value above the threshold.
    """
    tol = _tol(tol)
    s = np.linalg.svd(np.atleast_2d(np.asarray(M, dtype=float)), compute_uv=False)
    if s.size == 0 or not np.isfinite(s[0]) or s[0] == 0.0:
        raise AllZeroMatrix("matrix has no nonzero singular value")
    nz = s[s > tol.rel_tol * s[0]]
    return float(nz[-1])


def rowspace_basis(M, tol=None) -> np.ndarray:
    """Orthonormal basis of row(M) as the columns of a (p, r) array."""
    tol = _tol(tol)
    M, _, s, Vt = _svd(M)
    r = 0 if s.size == 0 or s[0] == 0.0 else int(np.count_nonzero(s > tol.rel_tol * s[0]))
    return Vt[:r].T.copy()


def nullspace_basis(M, tol=None) -> np.ndarray:
    """Orthonormal basis of N(M) as the columns of a (p, p - r) array."""
    tol = _tol(tol)
    M, _, s, Vt = _svd(M)
    r = 0 if s.size == 0 or s[0] == 0.0 else int(np.count_nonzero(s > tol.rel_tol * s[0]))
    return Vt[r:].T.copy()


def split_row_null(M, w, tol=None) -> SubspaceSplit:
    """Orthogonal decomposition of ``w`` into rowspace and nullspace parts of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"w has length {w.shape[0]}, M has {M.shape[1]} columns")
    N = nullspace_basis(M, tol)
    null_part = N @ (N.T @ w)
    row_part = w - null_part
    return SubspaceSplit(row_part=row_part, null_part=null_part)


def nullspace_constant(M1, M2, tol=None, angle_tol: float = 1e-6) -> bool:
    """True iff N(M1) and N(M2) are the same subspace (principal angles < angle_tol)."""
    M1 = np.atleast_2d(np.asarray(M1, dtype=float))
    M2 = np.atleast_2d(np.asarray(M2, dtype=float))
    if M1.shape[1] != M2.shape[1]:
        raise DimensionMismatch(f"column counts differ: {M1.shape[1]} vs {M2.shape[1]}")
    N1 = nullspace_basis(M1, tol)
    N2 = nullspace_basis(M2, tol)
    if N1.shape[1] != N2.shape[1]:
        return False
    if N1.shape[1] == 0:
        return True
    return bool(np.max(subspace_angles(N1, N2)) < angle_tol)
