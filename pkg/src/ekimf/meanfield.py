"""Mean-field side: the Gaussian flow of the linear problem, the bridge
particle system driven by the flow's statistics, and the shared-noise
coupling between the bridge and the EKI particles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Ensemble, NoiseStream, SpdMatrix, as_spd, prefetched, sample_gaussian
from .eki import (EkiRunConfig, guarded_step, eki_sde_step, ensemble_stats,
                  initial_ensemble)
from .errors import NonlinearModel
from .model import ForwardModel, Prior, apply_forward


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    mean: np.ndarray
    cov: SpdMatrix

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = as_spd(self.cov)
        if mean.size != cov.dim:
            raise ValueError("mean and covariance dimensions differ")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_prior(cls, prior: Prior) -> "GaussianDensity":
        return cls(prior.mean, prior.cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def pdf(self, u) -> np.ndarray:
        """Density at each row of ``u`` (shape (n, L))."""
        u = np.atleast_2d(u)
        z = self.cov.inv_sqrt_apply((u - self.mean).T)
        lognorm = 0.5 * (self.dim * math.log(2 * math.pi) + self.cov.logdet())
        return np.exp(-0.5 * np.sum(z * z, axis=0) - lognorm)

    def score(self, u) -> np.ndarray:
        """grad log pdf, shape (n, L)."""
        u = np.atleast_2d(u)
        return -self.cov.solve((u - self.mean).T).T

    def sample(self, n: int, stream: NoiseStream, trial: int = 0, step: int = 0) -> np.ndarray:
        return sample_gaussian(self.mean, self.cov, n, stream, trial, step)


def _require_linear(model: ForwardModel):
    if not model.is_linear:
        raise NonlinearModel("closed-form Gaussian flow needs a linear forward map")


def gaussian_flow(prior: Prior, model: ForwardModel, t: float) -> GaussianDensity:
    """The normalized ``exp(-t Phi) mu_0`` for a linear model and Gaussian prior."""
    _require_linear(model)
    if t < 0:
        raise ValueError("t must be non-negative")
    c0_inv = prior.cov.inverse()
    gi_a = model.gamma.solve(model.A)
    precision = c0_inv + t * (model.A.T @ gi_a)
    precision = 0.5 * (precision + precision.T)
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (c0_inv @ prior.mean + t * (gi_a.T @ model.y))
    return GaussianDensity(mean, cov)


@dataclass(frozen=True)
class FlowStats:
    """Moments of the flow at time ``t``.

    ``cov_rho_g`` is Cov_{rho, G} (L x K); its transpose is Cov_{G, rho}.
    ``stderr`` holds the entrywise Monte Carlo standard error of
    ``cov_rho_g`` (zeros when exact).
    """

    t: float
    cov_rho: np.ndarray
    cov_rho_g: np.ndarray
    mean: np.ndarray
    mean_g: np.ndarray
    cov_gg: np.ndarray
    stderr: Optional[np.ndarray] = None

    @property
    def cov_g_rho(self) -> np.ndarray:
        return self.cov_rho_g.T


def flow_stats(flow: GaussianDensity, model: ForwardModel, t: float = float("nan"),
               n_samples: Optional[int] = None, stream: Optional[NoiseStream] = None) -> FlowStats:
    """Flow moments; exact for a linear model, Monte Carlo otherwise.

    Passing ``n_samples`` forces the Monte Carlo path even for a linear
    model (useful as a cross-check).
    """
    C = flow.cov.matrix
    if model.is_linear and n_samples is None:
        A = model.A
        return FlowStats(t, C.copy(), C @ A.T, flow.mean.copy(), A @ flow.mean, A @ C @ A.T,
                         np.zeros((C.shape[0], A.shape[0])))
    n = n_samples or 2**16
    stream = stream or NoiseStream(0)
    u = flow.sample(n, stream.child("flow-stats"))
    g = apply_forward(model, u)
    du = u - u.mean(axis=0)
    dg = g - g.mean(axis=0)
    prod = du[:, :, None] * dg[:, None, :]
    cov_ug = prod.mean(axis=0)
    stderr = prod.std(axis=0, ddof=1) / math.sqrt(n)
    return FlowStats(t, du.T @ du / n, cov_ug, u.mean(axis=0), g.mean(axis=0), dg.T @ dg / n, stderr)


def bridge_step(ens: Ensemble, stats: FlowStats, model: ForwardModel, h: float,
                stream: NoiseStream, step_id: int, trial: int = 0, noise: bool = True,
                particle_ids=None) -> Ensemble:
    """Euler-Maruyama step of the bridge particles.

    ``v <- v + Cov_{rho,G} Gamma^{-1} (y - G(v)) h + Cov_{rho,G} Gamma^{-1/2} dW``;
    increments are read at the same addresses as :func:`eki_sde_step`.
    ``particle_ids`` overrides the default addresses ``0..J-1``.
    """
    V = ens.particles
    J = V.shape[0]
    K = model.y.size
    w = model.gamma.solve((model.y - apply_forward(model, V)).T) * h
    if noise:
        ids = np.arange(J) if particle_ids is None else np.asarray(particle_ids)
        z = stream.normals(trial, ids, step_id, K)
        w = w + model.gamma.inv_sqrt_t_apply(z.T) * math.sqrt(h)
    return Ensemble(V + (stats.cov_rho_g @ w).T, ens.time + h)


class StatsTable:
    """Cov_{rho,G} sampled on a uniform time grid, looked up at the left endpoint."""

    def __init__(self, times, cov_rho_g, source: str = "", stderr: float = float("nan")):
        self.times = np.asarray(times, dtype=float)
        self.cov_rho_g = np.asarray(cov_rho_g, dtype=float)
        self.source = source
        self.stderr = stderr
        if self.cov_rho_g.ndim != 3 or self.cov_rho_g.shape[0] != self.times.size:
            raise ValueError("cov table must have shape (n_times, L, K)")

    def at(self, t: float) -> FlowStats:
        i = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        i = min(max(i, 0), self.times.size - 1)
        c = self.cov_rho_g[i]
        nan = np.full(c.shape[0], np.nan)
        return FlowStats(float(self.times[i]), np.full((c.shape[0],) * 2, np.nan), c, nan,
                         np.full(c.shape[1], np.nan), np.full((c.shape[1],) * 2, np.nan))

    def to_csv(self, path) -> None:
        _, L, K = self.cov_rho_g.shape
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", *[f"c{i}_{k}" for i in range(L) for k in range(K)]])
            for t, c in zip(self.times, self.cov_rho_g):
                wr.writerow([repr(float(t)), *map(repr, c.reshape(-1).tolist())])

    @classmethod
    def from_csv(cls, path, L: int, K: int) -> "StatsTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if len(header) != 1 + L * K:
            raise ValueError(f"expected {1 + L * K} columns, found {len(header)}")
        data = np.array([[float(x) for x in r] for r in body])
        return cls(data[:, 0], data[:, 1:].reshape(-1, L, K), source=str(path))


def reference_stats_table(model: ForwardModel, prior: Prior, h: float, T: float = 1.0,
                          J_ref: int = 2**16, stream: Optional[NoiseStream] = None,
                          trial: int = 0) -> StatsTable:
    """Self-consistent large-ensemble proxy for Cov_{rho_t, G}.

    One ensemble of ``J_ref`` particles evolves under its own empirical
    statistics; the statistics at every step start are tabulated.  The
    sampling error of each entry is O(J_ref^{-1/2}); ``stderr`` records
    ``J_ref**-0.5`` as the nominal floor.
    """
    stream = (stream or NoiseStream(0)).child("reference-table")
    cfg = EkiRunConfig(J_ref, h, T, "sde", trial)
    ens = initial_ensemble(prior, J_ref, stream, trial)
    stream = prefetched(stream)
    times, covs = [], []
    for k in range(cfg.n_steps + 1):
        st = ensemble_stats(ens, model)
        times.append(ens.time)
        covs.append(st.cup)
        if k == cfg.n_steps:
            break
        ens = guarded_step(eki_sde_step, ens, model, h, stream, k + 1, trial=trial, stats=st, step=k + 1)
    return StatsTable(times, covs, source=f"reference ensemble J={J_ref}", stderr=J_ref ** -0.5)


def linear_stats_provider(model: ForwardModel, prior: Prior) -> Callable[[float, Ensemble], FlowStats]:
    """Exact flow statistics, memoized on ``t`` so repeated runs reuse them."""
    cache: dict = {}

    def provider(t, _ens):
        t = float(t)
        if t not in cache:
            cache[t] = flow_stats(gaussian_flow(prior, model, t), model, t)
        return cache[t]
    return provider


@dataclass
class CoupledRun:
    u: list
    v: list
    errors: np.ndarray  # (1/J) sum_j |u^j - v^j|^2 at every step
    times: np.ndarray


def run_coupled(model: ForwardModel, prior: Prior, cfg: EkiRunConfig, stream: NoiseStream,
                stats_provider: Optional[Callable[[float, Ensemble], FlowStats]] = None,
                share_noise: bool = True, noise: bool = True,
                stride: Optional[int] = None) -> CoupledRun:
    """EKI particles and bridge particles from identical draws and increments.

    Args:
        stats_provider: ``(t, v_ensemble) -> FlowStats`` for the bridge
            drift.  Defaults to the exact Gaussian flow (linear models only);
            pass ``table.at`` wrapped in a lambda for a reference table.
        share_noise: if False the bridge reads its increments from an
            independent child stream (negative control).
        stride: trajectory storage as in :func:`run_eki`; the coupling
            error is always recorded at every step.
    """
    if stats_provider is None:
        _require_linear(model)
        stats_provider = linear_stats_provider(model, prior)
    u = initial_ensemble(prior, cfg.J, stream, cfg.trial)
    stream = prefetched(stream)
    v_stream = stream if share_noise else prefetched(stream.child("independent-bridge"))
    v = u
    us, vs = [u], [v]
    n = cfg.n_steps
    errors = np.empty(n + 1)
    errors[0] = 0.0
    for k in range(n):
        st_v = stats_provider(v.time, v)
        u = guarded_step(eki_sde_step, u, model, cfg.h, stream, k + 1, trial=cfg.trial, noise=noise, step=k + 1)
        v = guarded_step(bridge_step, v, st_v, model, cfg.h, v_stream, k + 1, trial=cfg.trial, noise=noise,
                     step=k + 1)
        d = u.particles - v.particles
        errors[k + 1] = float(np.mean(np.sum(d * d, axis=1)))
        if k + 1 == n or (stride is not None and (k + 1) % stride == 0):
            us.append(u)
            vs.append(v)
    times = np.arange(n + 1) * cfg.h
    return CoupledRun(us, vs, errors, times)


def run_bridge(model: ForwardModel, prior: Prior, cfg: EkiRunConfig, stream: NoiseStream,
               stats_provider: Optional[Callable[[float, Ensemble], FlowStats]] = None) -> Ensemble:
    """Bridge particles alone, returning the terminal ensemble."""
    if stats_provider is None:
        _require_linear(model)
        stats_provider = linear_stats_provider(model, prior)
    v = initial_ensemble(prior, cfg.J, stream, cfg.trial)
    steps = prefetched(stream)
    for k in range(cfg.n_steps):
        v = guarded_step(bridge_step, v, stats_provider(v.time, v), model, cfg.h, steps, k + 1,
                     trial=cfg.trial, step=k + 1)
    return v


def fp_residual(flow_path: Callable[[float], GaussianDensity], model: ForwardModel, points,
                t: float, dt: float = 1e-5) -> np.ndarray:
    """Pointwise Fokker-Planck residual of a Gaussian path at time ``t``.

    ``d_t rho + div((y - G)^T Gamma^{-1} Cov_{G,rho} rho)
    - 1/2 Tr(Cov_{rho,G} Gamma^{-1} Cov_{G,rho} Hess rho)``, with the
    coefficients taken from ``flow_path(t)`` itself, spatial derivatives
    exact and the time derivative a central difference.
    """
    _require_linear(model)
    u = np.atleast_2d(np.asarray(points, dtype=float))
    rho_t = flow_path(t)
    rho = rho_t.pdf(u)
    d_t = (flow_path(t + dt).pdf(u) - flow_path(t - dt).pdf(u)) / (2 * dt)
    A = model.A
    C = rho_t.cov.matrix
    cov_rho_g = C @ A.T
    gi = model.gamma.inverse()
    drift = ((model.y - u @ A.T) @ gi) @ cov_rho_g.T  # b(u) as rows, (n, L)
    div_drift = -np.trace(cov_rho_g @ gi @ A)
    score = rho_t.score(u)
    D = cov_rho_g @ gi @ cov_rho_g.T
    c_inv = rho_t.cov.inverse()
    # Hess rho / rho = score score^T - C^{-1}
    quad = np.einsum("ni,ij,nj->n", score, D, score) - np.trace(D @ c_inv)
    transport = rho * (div_drift + np.sum(drift * score, axis=1))
    return d_t + transport - 0.5 * rho * quad


def fp_residual_check(flow_path: Callable[[float], GaussianDensity], model: ForwardModel,
                      grid, times=(0.25, 0.5, 0.75), dt: float = 1e-5) -> float:
    """Max |residual| over ``grid`` x ``times`` divided by the max density there."""
    worst, scale = 0.0, 0.0
    for t in times:
        res = fp_residual(flow_path, model, grid, t, dt)
        worst = max(worst, float(np.max(np.abs(res))))
        scale = max(scale, float(np.max(flow_path(t).pdf(grid))))
    return worst / scale


def frozen_covariance_path(prior: Prior, model: ForwardModel) -> Callable[[float], GaussianDensity]:
    """Negative control: correct mean path but covariance held at the prior's."""
    return lambda t: GaussianDensity(gaussian_flow(prior, model, t).mean, prior.cov)
