"""Weakly nonlinear forward maps ``G(u) = A u + m(u)`` and the data model.

The nonlinear part is built so that its range is Gamma^{-1}-orthogonal to
the range of ``A``::

    m(u) = amplitude * P @ b(u),   P = I - A (A^T Gamma^{-1} A)^{-1} A^T Gamma^{-1}
    b_k(u) = sin(omega_k . u + phase_k)

``b`` is bounded with bounded derivatives of every order, so both the
Jacobian and the second-derivative contraction needed by the residual
terms are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .core import SpdMatrix, as_spd
from .errors import RankDeficient

RANK_RTOL = 1e-10


def _normal_factor(A: np.ndarray, gamma: SpdMatrix):
    """Cholesky factor of ``A^T Gamma^{-1} A`` and ``Gamma^{-1} A``.

    Rank is judged on the whitened matrix ``L^{-1} A`` (smallest singular
    value at most ``RANK_RTOL`` times the largest), which is more reliable
    than waiting for the normal-equation Cholesky to break down.
    """
    if A.shape[1] > A.shape[0]:
        raise RankDeficient("A has more columns than rows")
    sv = np.linalg.svd(gamma.inv_sqrt_apply(A), compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise RankDeficient("A^T Gamma^{-1} A is numerically singular")
    gi_a = gamma.solve(A)
    try:
        c = scipy.linalg.cho_factor(A.T @ gi_a, lower=True)
    except np.linalg.LinAlgError:
        raise RankDeficient("A^T Gamma^{-1} A is not positive definite") from None
    return c, gi_a


def gamma_projector(A, gamma) -> np.ndarray:
    """Gamma^{-1}-orthogonal projector onto the complement of Range(A)."""
    A = np.asarray(A, dtype=float)
    c, gi_a = _normal_factor(A, as_spd(gamma))
    return np.eye(A.shape[0]) - A @ scipy.linalg.cho_solve(c, gi_a.T)


@dataclass(frozen=True, eq=False)
class NonlinearPart:
    """``amplitude * P @ sin(omega @ u + phase)``."""

    projector: np.ndarray
    omega: np.ndarray
    phase: np.ndarray
    amplitude: float = 0.0

    @classmethod
    def random(cls, A, gamma, amplitude: float, seed: int, scale: float = 1.0) -> "NonlinearPart":
        A = np.asarray(A, dtype=float)
        K, L = A.shape
        rng = np.random.default_rng(seed)
        omega = scale * rng.standard_normal((K, L))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=K)
        return cls(gamma_projector(A, gamma), omega, phase, float(amplitude))

    def base(self, u) -> np.ndarray:
        return np.sin(np.asarray(u) @ self.omega.T + self.phase)

    def __call__(self, u) -> np.ndarray:
        """m(u) for a vector or a ``(n, L)`` batch."""
        return self.amplitude * self.base(u) @ self.projector.T

    def jacobian(self, u) -> np.ndarray:
        """``(K, L)`` Jacobian of m at a single point."""
        c = np.cos(self.omega @ np.asarray(u, dtype=float) + self.phase)
        return self.amplitude * self.projector @ (c[:, None] * self.omega)

    def hessian_contract(self, u, w) -> np.ndarray:
        """``sum_k w_k * Hess(m_k)(u)``, an ``(L, L)`` symmetric matrix."""
        s = self.amplitude * (self.projector.T @ np.asarray(w, dtype=float))
        sn = np.sin(self.omega @ np.asarray(u, dtype=float) + self.phase)
        return -(self.omega.T * (s * sn)) @ self.omega

    def bound(self) -> float:
        """M with |m(u)| + |grad m(u)| <= M for every u."""
        K = self.omega.shape[0]
        pn = np.linalg.norm(self.projector, 2)
        return self.amplitude * pn * (np.sqrt(K) + np.linalg.norm(self.omega, 2))


@dataclass(frozen=True)
class Prior:
    mean: np.ndarray
    cov: SpdMatrix

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = as_spd(self.cov)
        if mean.size != cov.dim:
            raise ValueError("prior mean and covariance dimensions differ")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, u) -> np.ndarray:
        u = np.atleast_2d(u)
        z = self.cov.inv_sqrt_apply((u - self.mean).T)
        return -0.5 * np.sum(z * z, axis=0) - 0.5 * (self.dim * np.log(2 * np.pi) + self.cov.logdet())


def solve_u_dagger(A, gamma, y):
    """Weighted least-squares preimage ``u_dagger`` and residual ``r = y - A u_dagger``.

    ``r`` is Gamma^{-1}-orthogonal to Range(A).
    """
    A = np.asarray(A, dtype=float)
    gamma = as_spd(gamma)
    y = np.asarray(y, dtype=float)
    c, gi_a = _normal_factor(A, gamma)
    u_dag = scipy.linalg.cho_solve(c, gi_a.T @ y)
    return u_dag, y - A @ u_dag


@dataclass(frozen=True, eq=False)
class ForwardModel:
    """Forward map, noise covariance and data.

    ``u_dagger``, ``r`` and ``M`` are derived at construction.
    """

    A: np.ndarray
    gamma: SpdMatrix
    y: np.ndarray
    nonlinearity: Optional[NonlinearPart] = None
    u_dagger: np.ndarray = field(init=False, repr=False)
    r: np.ndarray = field(init=False, repr=False)
    M: float = field(init=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        gamma = as_spd(self.gamma)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        K, L = A.shape
        if gamma.dim != K or y.size != K:
            raise ValueError("A, Gamma and y dimensions disagree")
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0] or L > K:
            raise RankDeficient("A must have full column rank")
        u_dag, r = solve_u_dagger(A, gamma, y)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "u_dagger", u_dag)
        object.__setattr__(self, "r", r)
        m = self.nonlinearity
        object.__setattr__(self, "M", 0.0 if m is None else float(m.bound()))

    @property
    def dims(self) -> tuple[int, int]:
        """(L, K)."""
        return self.A.shape[1], self.A.shape[0]

    @property
    def is_linear(self) -> bool:
        return self.nonlinearity is None or self.nonlinearity.amplitude == 0.0

    def with_data(self, y) -> "ForwardModel":
        return ForwardModel(self.A, self.gamma, y, self.nonlinearity)

    def with_amplitude(self, amplitude: float) -> "ForwardModel":
        m = self.nonlinearity
        if m is None:
            raise ValueError("model has no nonlinear part to rescale")
        return ForwardModel(self.A, self.gamma, self.y,
                            NonlinearPart(m.projector, m.omega, m.phase, float(amplitude)))


def apply_forward(model: ForwardModel, u) -> np.ndarray:
    """G(u) for a single ``(L,)`` point or an ``(n, L)`` batch."""
    u = np.asarray(u, dtype=float)
    out = u @ model.A.T
    if not model.is_linear:
        out = out + model.nonlinearity(u)
    return out


def jacobian_forward(model: ForwardModel, u) -> np.ndarray:
    if model.is_linear:
        return model.A.copy()
    return model.A + model.nonlinearity.jacobian(u)


def hessian_contract(model: ForwardModel, u, w) -> np.ndarray:
    """``sum_k w_k Hess(G_k)(u)``; identically zero for a linear model."""
    L = model.dims[0]
    if model.is_linear:
        return np.zeros((L, L))
    return model.nonlinearity.hessian_contract(u, w)


def loss(model: ForwardModel, u) -> np.ndarray:
    """Phi(u; y) = 1/2 |y - G(u)|^2_Gamma; vectorized over a leading batch axis."""
    res = model.y - apply_forward(model, u)
    z = model.gamma.inv_sqrt_apply(np.atleast_2d(res).T)
    val = 0.5 * np.sum(z * z, axis=0)
    return val if np.ndim(u) > 1 else float(val[0])


def posterior_unnormalized(model: ForwardModel, prior: Prior, u, t: float):
    """``exp(-t Phi(u)) * prior_pdf(u)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    val = np.exp(-t * np.atleast_1d(loss(model, u)) + prior.logpdf(u))
    return val if np.ndim(u) > 1 else float(val[0])


def check_orthogonality(model: ForwardModel, probes) -> float:
    """Max |m(u)^T Gamma^{-1} A e_k| over probe points and columns."""
    if model.is_linear:
        return 0.0
    m = model.nonlinearity(np.atleast_2d(probes))
    return float(np.max(np.abs(m @ model.gamma.solve(model.A))))


def probe_points(prior: Prior, n: int = 1000, seed: int = 0) -> np.ndarray:
    """Reproducible probe set: ``n`` prior draws under a fixed seed."""
    from .core import NoiseStream, sample_gaussian

    return sample_gaussian(prior.mean, prior.cov, n, NoiseStream(seed).child("probes"), trial=0)
