"""Weights by which the interpolating density ``exp(-t Phi) mu_0 / Z(t)``
fails to solve the mean-field Fokker-Planck equation.

For ``mu_t`` with moments ``E_G``, ``Cov_{mu,G} = B`` and ``Cov_{G,G}``::

    L[mu] / mu = R1 + R2 + R3

    V(u)  = t J^T Gamma^{-1} (y - G) - C0^{-1} (u - u0)
    W(u)  = sum_k [Gamma^{-1}(y - G)]_k Hess G_k(u)
    D     = B Gamma^{-1} B^T
    R1    = 1/2 Tr(Cov_GG Gamma^{-1}) - Tr(B Gamma^{-1} J)
            + 1/2 Tr(D (t J^T Gamma^{-1} J + C0^{-1}))
    R2    = 1/2 |y - E_G|^2_Gamma - 1/2 |y - G|^2_Gamma
            + (y - G)^T Gamma^{-1} B^T V - 1/2 V^T D V
    R3    = -t/2 Tr(D W)

with ``J = dG/du`` (K x L).  All three vanish in sum for a linear model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..meanfield import FlowStats, flow_stats, gaussian_flow
from ..model import (ForwardModel, Prior, apply_forward, hessian_contract,
                     jacobian_forward, loss)


@dataclass(frozen=True)
class ResidualSample:
    t: float
    u: np.ndarray
    R1: float
    R2: float
    R3: float
    V: np.ndarray
    W: np.ndarray

    @property
    def total(self) -> float:
        return self.R1 + self.R2 + self.R3


def residual_terms(model: ForwardModel, prior: Prior, t: float, u, stats: FlowStats) -> ResidualSample:
    u = np.asarray(u, dtype=float).reshape(-1)
    gi = model.gamma.inverse()
    c0_inv = prior.cov.inverse()
    jac = jacobian_forward(model, u)
    res = model.y - apply_forward(model, u)
    w = gi @ res
    V = t * (jac.T @ w) - c0_inv @ (u - prior.mean)
    W = hessian_contract(model, u, w)
    B = stats.cov_rho_g
    D = B @ gi @ B.T
    R1 = (0.5 * np.trace(stats.cov_gg @ gi) - np.trace(B @ gi @ jac)
          + 0.5 * np.trace(D @ (t * jac.T @ gi @ jac + c0_inv)))
    dbar = model.y - stats.mean_g
    R2 = 0.5 * dbar @ gi @ dbar - 0.5 * res @ w + w @ (B.T @ V) - 0.5 * V @ D @ V
    R3 = -0.5 * t * np.trace(D @ W)
    return ResidualSample(float(t), u, float(R1), float(R2), float(R3), V, W)


class ImportanceMoments:
    """Self-normalized importance sampling of ``mu_t`` moments from prior draws.

    The draws, their forward values and their losses are computed once;
    each :meth:`at` call only reweights by ``exp(-t Phi)``.
    """

    def __init__(self, model: ForwardModel, prior: Prior, n_samples: int = 10**6, seed: int = 0):
        from ..core import NoiseStream, sample_gaussian

        self.u = sample_gaussian(prior.mean, prior.cov, n_samples, NoiseStream(seed).child("mu-stats"), 0)
        self.g = apply_forward(model, self.u)
        self.phi = loss(model, self.u)

    def at(self, t: float) -> FlowStats:
        logw = -t * self.phi
        return _weighted_stats(t, self.u, self.g, np.exp(logw - logw.max()))


def _weighted_stats(t, u, g, wts) -> FlowStats:
    wts = wts / wts.sum()
    mu = wts @ u
    mg = wts @ g
    du = u - mu
    dg = g - mg
    return FlowStats(float(t), (du * wts[:, None]).T @ du, (du * wts[:, None]).T @ dg, mu, mg,
                     (dg * wts[:, None]).T @ dg)


def mu_stats(model: ForwardModel, prior: Prior, t: float, method: str = "auto",
             n_samples: int = 10**6, grid_points: int = 801, seed: int = 0) -> FlowStats:
    """Moments of ``mu_t`` needed by :func:`residual_terms`.

    Methods:
        ``exact``: Gaussian closed form (linear models only).
        ``importance``: see :class:`ImportanceMoments`.
        ``grid``: tensor-grid quadrature of the unnormalized density over
            prior mean +- 10 standard deviations (L <= 2).
        ``auto``: exact when linear, else importance.
    """
    if method == "auto":
        method = "exact" if model.is_linear else "importance"
    if method == "exact":
        return flow_stats(gaussian_flow(prior, model, t), model, t)
    if method == "importance":
        return ImportanceMoments(model, prior, n_samples, seed).at(t)
    if method == "grid":
        if prior.dim > 2:
            raise ValueError("grid quadrature supports L <= 2")
        sd = np.sqrt(np.diag(prior.cov.matrix))
        axes = [np.linspace(m - 10 * s, m + 10 * s, grid_points) for m, s in zip(prior.mean, sd)]
        u = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        logw = -t * loss(model, u) + prior.logpdf(u)
        return _weighted_stats(t, u, apply_forward(model, u), np.exp(logw - logw.max()))
    raise ValueError(f"unknown method {method!r}")
