"""Ensemble Kalman inversion: the perturbed-data discrete scheme and the
Euler-Maruyama scheme for the continuous-time particle system.

Both schemes freeze the ensemble statistics at the start of a step.  Noise
for particle ``j`` in the step from ``n`` to ``n + 1`` is read from the
stream at address ``(trial, j, n + 1)``; step id 0 is reserved for the
initial draw from the prior.

With ``Gamma = L L^T``, the discrete scheme perturbs the data with
``xi = L z / sqrt(h)`` (law N(0, Gamma / h)) and the SDE scheme uses
``L^{-T} z sqrt(h)`` (law N(0, Gamma^{-1} h)) for ``Gamma^{-1/2} dW``.  For
the same ``z`` the two increments agree to leading order in ``h``, which
makes side-by-side runs directly comparable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import scipy.linalg

from .core import Ensemble, NoiseStream, prefetched, sample_gaussian
from .errors import Diverged, SingularUpdate
from .model import ForwardModel, Prior, apply_forward

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class EnsembleStats:
    mean: np.ndarray
    forward_mean: np.ndarray
    cpp: np.ndarray
    cup: np.ndarray
    forward: np.ndarray  # G(u^j), shape (J, K); kept so steps do not re-evaluate it


def ensemble_stats(ens: Ensemble, model: ForwardModel) -> EnsembleStats:
    """Empirical means and covariances, normalized by 1/J."""
    U = ens.particles
    G = apply_forward(model, U)
    J = U.shape[0]
    u_bar = U.mean(axis=0)
    g_bar = G.mean(axis=0)
    du = U - u_bar
    dg = G - g_bar
    return EnsembleStats(u_bar, g_bar, dg.T @ dg / J, du.T @ dg / J, G)


@dataclass(frozen=True)
class EkiRunConfig:
    J: int
    h: float
    T: float = 1.0
    mode: Literal["discrete", "sde"] = "sde"
    trial: int = 0

    def __post_init__(self):
        if self.J < 2:
            raise ValueError("J must be at least 2")
        if not 0.0 < self.h <= 1.0:
            raise ValueError("step size must satisfy 0 < h <= 1")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        ratio = self.T / self.h
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"T/h = {ratio} is not an integer")
        if self.mode not in ("discrete", "sde"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))


def _normals(stream, trial, J, step_id, K):
    return stream.normals(trial, np.arange(J), step_id, K)


def eki_discrete_step(ens: Ensemble, model: ForwardModel, h: float, stream: NoiseStream,
                      step_id: int, trial: int = 0, noise: bool = True,
                      stats: Optional[EnsembleStats] = None) -> Ensemble:
    """One perturbed-data update ``u <- u + Cup (Cpp + Gamma/h)^{-1} (y + xi - G(u))``."""
    st = stats or ensemble_stats(ens, model)
    J, _ = ens.particles.shape
    K = model.y.size
    resid = (model.y - st.forward).T  # (K, J)
    if noise:
        z = _normals(stream, trial, J, step_id, K)
        resid = resid + model.gamma.sqrt_apply(z.T) / math.sqrt(h)
    S = st.cpp + model.gamma.matrix / h
    try:
        c = scipy.linalg.cho_factor(S, lower=True)
    except np.linalg.LinAlgError:
        raise SingularUpdate("Cpp + Gamma/h is not positive definite") from None
    incr = st.cup @ scipy.linalg.cho_solve(c, resid)
    return Ensemble(ens.particles + incr.T, ens.time + h)


def eki_sde_step(ens: Ensemble, model: ForwardModel, h: float, stream: NoiseStream,
                 step_id: int, trial: int = 0, noise: bool = True,
                 stats: Optional[EnsembleStats] = None) -> Ensemble:
    """Euler-Maruyama step of ``du = Cup Gamma^{-1}(y - G(u)) dt + Cup Gamma^{-1/2} dW``."""
    st = stats or ensemble_stats(ens, model)
    J, _ = ens.particles.shape
    K = model.y.size
    w = model.gamma.solve((model.y - st.forward).T) * h
    if noise:
        z = _normals(stream, trial, J, step_id, K)
        w = w + model.gamma.inv_sqrt_t_apply(z.T) * math.sqrt(h)
    return Ensemble(ens.particles + (st.cup @ w).T, ens.time + h)


STEPPERS = {"discrete": eki_discrete_step, "sde": eki_sde_step}


def initial_ensemble(prior: Prior, J: int, stream: NoiseStream, trial: int = 0) -> Ensemble:
    """Prior draws at addresses ``(trial, j, 0)``."""
    return Ensemble(sample_gaussian(prior.mean, prior.cov, J, stream, trial, step=0), 0.0)


def check_finite(ens: Ensemble, step: int) -> None:
    norms = np.linalg.norm(ens.particles, axis=1)
    worst = int(np.argmax(norms))
    if not norms[worst] <= DIVERGENCE_NORM:
        raise Diverged(f"particle {worst} reached norm {norms[worst]:.3g} at step {step}",
                       step=step, particle=worst)


def guarded_step(step_fn, ens, *args, step, **kw):
    try:
        new = step_fn(ens, *args, **kw)
    except ValueError as exc:  # non-finite particles rejected by Ensemble
        raise Diverged(f"non-finite particles at step {step}: {exc}", step=step) from None
    check_finite(new, step)
    return new


def run_eki(model: ForwardModel, prior: Prior, cfg: EkiRunConfig, stream: NoiseStream,
            stride: Optional[int] = 1, initial: Optional[Ensemble] = None,
            noise: bool = True) -> list[Ensemble]:
    """Run EKI from prior draws to ``T``.

    Args:
        stride: keep every ``stride``-th ensemble (the final one is always
            kept); ``None`` keeps only the initial and final ensembles.
        initial: override the prior draw (must have ``cfg.J`` particles).
        noise: if False, drop the perturbation / Brownian terms.

    Returns:
        list of ensembles; with ``stride=1`` it has ``N + 1`` entries.

    Raises:
        Diverged: a particle norm exceeded ``DIVERGENCE_NORM``.
    """
    step_fn = STEPPERS[cfg.mode]
    ens = initial if initial is not None else initial_ensemble(prior, cfg.J, stream, cfg.trial)
    if ens.size != cfg.J:
        raise ValueError("initial ensemble size differs from cfg.J")
    out = [ens]
    n = cfg.n_steps
    steps = prefetched(stream)
    for k in range(n):
        ens = guarded_step(step_fn, ens, model, cfg.h, steps, k + 1, trial=cfg.trial,
                       noise=noise, step=k + 1)
        if k + 1 == n or (stride is not None and (k + 1) % stride == 0):
            out.append(ens)
    return out


def write_trajectory_csv(trajectory, path, h: Optional[float] = None) -> None:
    """Per-step particle dump with columns ``step,t,particle,u0,...``.

    ``step`` is recovered from the ensemble time when ``h`` is given, else
    it is the position in ``trajectory``.
    """
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        L = trajectory[0].dim
        wr.writerow(["step", "t", "particle", *[f"u{i}" for i in range(L)]])
        for pos, ens in enumerate(trajectory):
            step = int(round(ens.time / h)) if h else pos
            for j, row in enumerate(ens.particles):
                wr.writerow([step, repr(ens.time), j, *map(repr, row.tolist())])
