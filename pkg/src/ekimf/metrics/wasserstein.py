"""Wasserstein-2 distances between empirical and Gaussian measures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ..core import NoiseStream, as_spd, sqrtm_psd
from ..errors import EmptyInput, SizeMismatch, TooLarge

MAX_ASSIGNMENT = 4096


@dataclass(frozen=True)
class W2Result:
    value: float
    method: str
    note: str = ""

    def __float__(self):
        return self.value


def _as_points(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def w2_sorted_1d(a, b) -> W2Result:
    """Exact W2 between two equal-size 1-D empirical measures (monotone coupling)."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise EmptyInput("empty sample")
    if a.size != b.size:
        raise SizeMismatch(f"sizes differ: {a.size} vs {b.size}")
    d = np.sort(a) - np.sort(b)
    return W2Result(float(np.sqrt(np.mean(d * d))), "sorted-1d")


def w2_semidiscrete_1d(sample, quantile: Callable[[np.ndarray], np.ndarray],
                       order: int = 16) -> W2Result:
    """Exact W2 between an n-point empirical measure and a continuous law on R.

    With order statistics ``x_(i)`` and quantile function ``F^{-1}``::

        W2^2 = sum_i int_{(i-1)/n}^{i/n} (x_(i) - F^{-1}(q))^2 dq

    Interior cells use Gauss-Legendre of the given order.  The two end cells
    contain the quantile singularity at 0 and 1 and go to adaptive
    quadrature instead.
    """
    x = np.sort(np.asarray(sample, dtype=float).reshape(-1))
    n = x.size
    if n == 0:
        raise EmptyInput("empty sample")
    if order < 8:
        raise ValueError("quadrature order must be at least 8")

    def cell_quad(xi, lo, hi):
        val, _ = integrate.quad(lambda q: (xi - float(quantile(np.array([q]))[0])) ** 2,
                                lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)
        return val

    if n == 1:
        total = cell_quad(x[0], 0.0, 1.0)
    else:
        total = cell_quad(x[0], 0.0, 1.0 / n) + cell_quad(x[-1], 1.0 - 1.0 / n, 1.0)
        if n > 2:
            nodes, weights = np.polynomial.legendre.leggauss(order)
            lo = np.arange(1, n - 1) / n
            half = 0.5 / n
            q = lo[:, None] + half * (nodes[None, :] + 1.0)
            fq = quantile(q.reshape(-1)).reshape(q.shape)
            total += float(np.sum(half * weights[None, :] * (x[1:-1, None] - fq) ** 2))
    return W2Result(float(np.sqrt(max(total, 0.0))), "semidiscrete-1d")


def w2_assignment(a, b) -> W2Result:
    """Exact W2 between equal-size empirical measures in R^L.

    Optimal transport between two uniform n-point measures is a linear
    assignment on the squared-distance cost matrix.
    """
    a = _as_points(a)
    b = _as_points(b)
    if a.shape[0] == 0:
        raise EmptyInput("empty sample")
    if a.shape != b.shape:
        raise SizeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n > MAX_ASSIGNMENT:
        raise TooLarge(f"n={n} exceeds assignment limit {MAX_ASSIGNMENT}")
    cost = cdist(a, b, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return W2Result(float(np.sqrt(cost[rows, cols].sum() / n)), "assignment")


def w2_gaussian(g1, g2) -> W2Result:
    """Closed-form W2 between two Gaussians (objects with ``mean`` and ``cov``)."""
    c1 = as_spd(g1.cov).matrix
    c2 = as_spd(g2.cov).matrix
    dm = np.asarray(g1.mean, dtype=float) - np.asarray(g2.mean, dtype=float)
    r2 = sqrtm_psd(c2)
    cross = sqrtm_psd(r2 @ c1 @ r2)
    val = float(dm @ dm + np.trace(c1 + c2 - 2.0 * cross))
    return W2Result(float(np.sqrt(max(val, 0.0))), "gaussian-closed-form")


def w2_paired_reference(ensemble, reference_sampler: Callable[[int, int], np.ndarray],
                        repeats: int = 4) -> W2Result:
    """Average assignment W2 between ``ensemble`` and fresh same-size reference draws.

    ``reference_sampler(n, r)`` must return the r-th reference sample of
    size n.  The estimate is biased upward: a finite reference sample is
    itself at positive distance from the law it represents.
    """
    pts = _as_points(ensemble)
    vals = [w2_assignment(pts, reference_sampler(pts.shape[0], r)).value for r in range(repeats)]
    return W2Result(float(np.mean(vals)), "assignment",
                    note=f"empirical-empirical, {repeats} reference draws, upward biased")


def gaussian_reference_sampler(flow, stream: NoiseStream, trial: int):
    """Reference sampler for :func:`w2_paired_reference` from a Gaussian law."""
    ref = stream.child("w2-reference")

    def draw(n, r):
        return flow.sample(n, ref, trial=trial, step=r)
    return draw


def normal_quantile(mean: float, std: float):
    from scipy.special import ndtri

    return lambda q: mean + std * ndtri(q)


def w2_to_gaussian_1d(sample, mean: float, var: float, order: int = 16) -> W2Result:
    return w2_semidiscrete_1d(sample, normal_quantile(mean, float(np.sqrt(var))), order)

