"""Weak-convergence statistic, ensemble moment diagnostics and the
mean-zero sum moment check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


def weak_statistic(ensembles: Sequence, f: Callable[[np.ndarray], np.ndarray],
                   reference: float) -> float:
    """Root-mean-square over seeds of ``mean_j f(u^j) - E_rho f``.

    ``ensembles`` is a sequence of particle arrays (or Ensemble objects),
    one per seed; ``f`` maps an ``(J, L)`` array to ``(J,)`` values.
    """
    errs = []
    for ens in ensembles:
        pts = np.asarray(getattr(ens, "particles", ens), dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        errs.append(float(np.mean(f(pts))) - reference)
    errs = np.asarray(errs)
    return float(np.sqrt(np.mean(errs * errs)))


def sin_sum(u) -> np.ndarray:
    """f(u) = sum_i sin(u_i); Lipschitz constant sqrt(L)."""
    return np.sum(np.sin(np.atleast_2d(u)), axis=1)


def sin_sum_gaussian_mean(mean, cov) -> float:
    """E[sum_i sin(u_i)] under N(mean, cov): sum_i sin(m_i) exp(-C_ii / 2)."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    var = np.diag(np.asarray(getattr(cov, "matrix", cov), dtype=float))
    return float(np.sum(np.sin(mean) * np.exp(-0.5 * var)))


def moment_diagnostics(particles, flow=None, p_list: Sequence[int] = (2, 4),
                       u_dagger=None) -> dict:
    """Empirical moments of one ensemble.

    Keys: ``centered_p`` = mean |u^j - u_bar|^p, ``dagger_p`` = mean
    |u^j - u_dagger|^p (if ``u_dagger`` given), ``cov_trace``, and
    ``cov_error`` = spectral norm of ensemble minus flow covariance (if
    ``flow`` given).
    """
    pts = np.asarray(getattr(particles, "particles", particles), dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    for p in p_list:
        if p % 2 or p <= 0 or p > 8:
            raise ValueError("moment orders must be even and at most 8")
    J = pts.shape[0]
    centered = pts - pts.mean(axis=0)
    dist = np.linalg.norm(centered, axis=1)
    cov = centered.T @ centered / J
    out = {f"centered_{p}": float(np.mean(dist ** p)) for p in p_list}
    if u_dagger is not None:
        dd = np.linalg.norm(pts - np.asarray(u_dagger, dtype=float), axis=1)
        out.update({f"dagger_{p}": float(np.mean(dd ** p)) for p in p_list})
    out["cov_trace"] = float(np.trace(cov))
    if flow is not None:
        c = np.asarray(getattr(flow.cov, "matrix", flow.cov), dtype=float)
        out["cov_error"] = float(np.linalg.norm(cov - c, 2))
    return out


def covariance_error(particles, flow) -> float:
    """Spectral norm of (ensemble covariance - flow covariance)."""
    return moment_diagnostics(particles, flow, p_list=(2,))["cov_error"]


_DISTRIBUTIONS = {
    "uniform": (lambda rng, size: rng.uniform(-1.0, 1.0, size), {2: 1 / 3, 4: 1 / 5}),
    "rademacher": (lambda rng, size: rng.choice(np.array([-1.0, 1.0]), size), {2: 1.0, 4: 1.0}),
    "normal": (lambda rng, size: rng.standard_normal(size), {2: 1.0, 4: 3.0}),
}


@dataclass
class MomentTable:
    distribution: str
    p: int
    J: list
    ratio: list
    stderr: list
    limit: Optional[float] = None  # J -> infinity value of the ratio, when known
    meta: dict = field(default_factory=dict)

    @property
    def max_min_ratio(self) -> float:
        return float(max(self.ratio) / min(self.ratio))


def _limit_ratio(dist: str, p: int) -> Optional[float]:
    moments = _DISTRIBUTIONS[dist][1]
    if p == 2:
        return moments[2]
    if p == 4:
        return 3 * moments[2] ** 2
    return None


def sum_moment_scaling(distribution: str, p: int, J_list: Sequence[int],
                          replicates: int, seed: int = 0, chunk: int = 2**24) -> MomentTable:
    """Monte Carlo ``E|sum_{j<=J} x_j|^p / J^{p/2}`` for i.i.d. mean-zero ``x``.

    ``distribution`` is one of ``uniform`` (on [-1, 1]), ``rademacher`` or
    ``normal``.  Each J uses its own child generator so adding J values does
    not perturb existing rows.
    """
    if p % 2 or p <= 0:
        raise ValueError("p must be a positive even integer")
    if distribution not in _DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {distribution!r}")
    draw = _DISTRIBUTIONS[distribution][0]
    ratios, errs = [], []
    for J in J_list:
        rng = np.random.default_rng([seed, int(J), p])
        per = max(1, chunk // int(J))
        vals = []
        done = 0
        while done < replicates:
            m = min(per, replicates - done)
            s = draw(rng, (m, int(J))).sum(axis=1)
            vals.append(np.abs(s) ** p / float(J) ** (p / 2))
            done += m
        v = np.concatenate(vals)
        ratios.append(float(v.mean()))
        errs.append(float(v.std(ddof=1) / np.sqrt(v.size)))
    return MomentTable(distribution, p, [int(j) for j in J_list], ratios, errs,
                       _limit_ratio(distribution, p), {"replicates": replicates, "seed": seed})
