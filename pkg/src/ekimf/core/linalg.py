"""Small dense linear algebra: Cholesky factors and SPD helpers.

Everything here is sized for desk-scale problems (dimensions up to ~64);
no sparse paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..errors import NotPositiveDefinite

SYMMETRY_RTOL = 1e-12


def _check_symmetric(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.max(np.abs(m)), 1.0)
    if np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
        raise NotPositiveDefinite("matrix is not symmetric")


def cholesky(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Raises:
        NotPositiveDefinite: if ``m`` is not symmetric or a pivot is <= 0.
    """
    m = np.asarray(m, dtype=float)
    _check_symmetric(m)
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        low = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if np.any(np.diag(low) <= 0.0):
        raise NotPositiveDefinite("non-positive Cholesky pivot")
    return low


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """A symmetric positive definite matrix together with its Cholesky factor."""

    matrix: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, ndmin=2)
        m = 0.5 * (m + m.T) if _nearly_symmetric(m) else m
        low = cholesky(m)
        m.setflags(write=False)
        low.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "chol", low)

    @classmethod
    def identity(cls, d: int, variance: float = 1.0) -> "SpdMatrix":
        return cls(variance * np.eye(d))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs) -> np.ndarray:
        """``matrix^{-1} @ rhs``."""
        return scipy.linalg.cho_solve((self.chol, True), np.asarray(rhs, dtype=float))

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.dim))

    def inv_sqrt_apply(self, v) -> np.ndarray:
        """``L^{-1} v``; see :func:`spd_sqrt_apply`."""
        return scipy.linalg.solve_triangular(self.chol, np.asarray(v, dtype=float), lower=True)

    def inv_sqrt_t_apply(self, v) -> np.ndarray:
        """``L^{-T} v``; maps N(0, I) vectors to N(0, matrix^{-1})."""
        return scipy.linalg.solve_triangular(self.chol, np.asarray(v, dtype=float), lower=True, trans="T")

    def sqrt_apply(self, v) -> np.ndarray:
        """``L v``, the inverse of :meth:`inv_sqrt_apply`."""
        return self.chol @ np.asarray(v, dtype=float)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def _nearly_symmetric(m: np.ndarray) -> bool:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(np.max(np.abs(m)), 1.0)
    return bool(np.max(np.abs(m - m.T)) <= SYMMETRY_RTOL * scale)


def as_spd(m) -> SpdMatrix:
    return m if isinstance(m, SpdMatrix) else SpdMatrix(m)


def spd_sqrt_apply(cov, v) -> np.ndarray:
    """Apply the inverse square root of ``cov`` to ``v``.

    The root is fixed to the Cholesky one: with ``cov = L L^T`` this
    returns ``L^{-1} v``, so ``(L^{-1})^T L^{-1} = cov^{-1}`` and ``L^{-1}``
    whitens N(0, cov) vectors.  Noise with law N(0, cov^{-1}) is obtained
    from the transpose, ``L^{-T} z`` (:meth:`SpdMatrix.inv_sqrt_t_apply`).

    ``v`` may be a vector or a ``(d, n)`` array of column vectors.
    """
    return as_spd(cov).inv_sqrt_apply(v)


def sqrtm_psd(m) -> np.ndarray:
    """Symmetric square root of a symmetric positive semidefinite matrix."""
    m = np.asarray(m, dtype=float)
    w, q = np.linalg.eigh(0.5 * (m + m.T))
    w = np.clip(w, 0.0, None)
    return (q * np.sqrt(w)) @ q.T
