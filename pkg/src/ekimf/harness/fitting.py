"""Log-log rate fits with seed-bootstrap uncertainty."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import DegenerateFit

STATISTICS: dict[str, Callable[[np.ndarray], float]] = {
    "mean": lambda v: float(np.mean(v)),
    "rms": lambda v: float(np.sqrt(np.mean(np.square(v)))),
}


@dataclass
class RateFit:
    slope: float
    intercept: float
    stderr: float
    J: list
    mean: list
    mean_stderr: list
    statistic: str = "mean"
    n_boot: int = 0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "statistic": self.statistic,
            "bootstrap_resamples": self.n_boot,
            "per_J": [{"J": j, "value": m, "stderr": s}
                      for j, m, s in zip(self.J, self.mean, self.mean_stderr)],
            **self.extra,
        }

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi


def ols_loglog(J, values) -> tuple[float, float]:
    """Slope and intercept of log(values) against log(J)."""
    x = np.log(np.asarray(J, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def _check(J, means):
    if len(set(J)) < 4:
        raise DegenerateFit("need at least 4 distinct ensemble sizes")
    bad = [j for j, m in zip(J, means) if not m > 0]
    if bad:
        raise DegenerateFit(f"non-positive metric at J={bad}")


def fit_points(points: Sequence[tuple]) -> RateFit:
    """Fit from ``(J, mean, stderr)`` triples; stderr of slope from weighted OLS.

    Without per-seed samples there is nothing to bootstrap, so the slope
    error is the OLS standard error with log-scale weights ``stderr/mean``.
    """
    J = [int(p[0]) for p in points]
    means = [float(p[1]) for p in points]
    errs = [float(p[2]) for p in points]
    _check(J, means)
    slope, intercept = ols_loglog(J, means)
    x = np.log(J)
    resid = np.log(means) - (slope * x + intercept)
    sxx = np.sum((x - x.mean()) ** 2)
    sigma2 = max(np.sum(resid ** 2) / max(len(J) - 2, 1),
                 float(np.mean((np.asarray(errs) / np.asarray(means)) ** 2)))
    return RateFit(slope, intercept, float(np.sqrt(sigma2 / sxx)), J, means, errs)


def fit_rate(J: Sequence[int], samples: Sequence[Sequence[float]], statistic: str = "mean",
             n_boot: int = 200, seed: int = 0) -> RateFit:
    """OLS on logs of a per-J statistic of per-seed samples.

    The slope standard error is the standard deviation of slopes refitted
    on ``n_boot`` bootstrap resamples of the seeds (independently per J).

    Raises:
        DegenerateFit: fewer than 4 distinct J, or a non-positive statistic.
    """
    stat = STATISTICS[statistic]
    arrays = [np.asarray(s, dtype=float) for s in samples]
    J = [int(j) for j in J]
    values = [stat(a) for a in arrays]
    _check(J, values)
    slope, intercept = ols_loglog(J, values)
    if statistic == "mean":
        errs = [float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0 for a in arrays]
    else:
        # delta method on sqrt(mean(x^2))
        errs = [float(np.std(a * a, ddof=1) / np.sqrt(a.size) / (2 * v)) if a.size > 1 and v > 0 else 0.0
                for a, v in zip(arrays, values)]
    rng = np.random.default_rng(seed)
    slopes = []
    for _ in range(n_boot):
        vals = [stat(a[rng.integers(0, a.size, a.size)]) for a in arrays]
        if min(vals) <= 0:
            continue
        slopes.append(ols_loglog(J, vals)[0])
    stderr = float(np.std(slopes, ddof=1)) if len(slopes) > 1 else 0.0
    return RateFit(slope, intercept, stderr, J, values, errs, statistic, n_boot)
