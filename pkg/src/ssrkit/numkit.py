"""Dense linear-algebra kernels and proximal operators.

Matrices are plain 2-D ``float64`` numpy arrays; :func:`as_matrix` is the one
place where shape and finiteness are checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SvdError(RuntimeError):
    """Raised when the SVD iteration fails to converge."""


class FactorizationError(ValueError):
    """Raised when a matrix expected to be SPD cannot be Cholesky-factored."""


class NonFiniteError(ValueError):
    """Raised when an input matrix holds NaN or infinite entries."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return `a` as a finite 2-D float64 array (copying only when needed)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name}: contains non-finite values")
    return m


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``g = u @ diag(s) @ v.T`` with ``r = min(m, n)``."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def svd(g) -> SvdResult:
    """Thin singular value decomposition, singular values nonincreasing."""
    g = as_matrix(g, "svd input")
    try:
        u, s, vt = np.linalg.svd(g, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD did not converge for a {g.shape[0]}x{g.shape[1]} matrix") from exc
    return SvdResult(u=u, s=s, v=vt.T)


def nuclear_norm(g) -> float:
    return float(np.sum(svd(g).s))


def svt(g, tau: float) -> np.ndarray:
    r"""Singular value thresholding.

    Proximal map of :math:`\tau\|\cdot\|_*`: every singular value is shrunk
    by `tau` and clipped at zero, singular vectors are kept.
    """
    if tau < 0:
        raise ValueError("svt threshold must be nonnegative")
    res = svd(g)
    shrunk = np.maximum(res.s - tau, 0.0)
    keep = shrunk > 0
    if not np.any(keep):
        return np.zeros_like(res.u @ res.v.T)
    return (res.u[:, keep] * shrunk[keep]) @ res.v[:, keep].T


def soft_threshold(m, tau: float) -> np.ndarray:
    """Elementwise ``sign(x) * max(0, |x| - tau)``."""
    if tau < 0:
        raise ValueError("soft threshold must be nonnegative")
    m = np.asarray(m, dtype=np.float64)
    return np.sign(m) * np.maximum(np.abs(m) - tau, 0.0)


def _cholesky(a: np.ndarray):
    a = as_matrix(a, "SPD matrix")
    if a.shape[0] != a.shape[1]:
        raise FactorizationError(f"matrix is not square: {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise FactorizationError("matrix is not symmetric")
    try:
        return scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"{a.shape[0]}x{a.shape[0]} matrix is not positive definite") from exc


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive definite `a`."""
    factor = _cholesky(a)
    b = as_matrix(b, "right-hand side")
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


class SumToOneSolver:
    r"""Minimize :math:`\tfrac12 x^\top A x - b^\top x` subject to :math:`1^\top x = 1`, column by column.

    Eliminating the equality multiplier gives the closed form

    .. math:: x = A^{-1}b - c\,(1^\top A^{-1} b - 1),\qquad c = A^{-1}1\,(1^\top A^{-1} 1)^{-1}

    `A` is factored once so the solver can be applied to many column blocks.
    """

    def __init__(self, a):
        self._factor = _cholesky(a)
        size = self._factor[0].shape[0]
        a_inv_ones = scipy.linalg.cho_solve(self._factor, np.ones((size, 1)), check_finite=False)
        self.c = a_inv_ones / np.sum(a_inv_ones)

    def __call__(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        x = scipy.linalg.cho_solve(self._factor, b, check_finite=False)
        x -= self.c * (np.sum(x, axis=0, keepdims=True) - 1.0)
        # one refinement pass; brings column sums to ~1 ulp
        x -= self.c * (np.sum(x, axis=0, keepdims=True) - 1.0)
        return x


def sum_to_one_solve(a, b) -> np.ndarray:
    return SumToOneSolver(a)(as_matrix(b, "right-hand side"))
