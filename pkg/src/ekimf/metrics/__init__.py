from .diagnostics import (MomentTable, sum_moment_scaling, covariance_error,
                          moment_diagnostics, sin_sum, sin_sum_gaussian_mean,
                          weak_statistic)
from .residuals import ImportanceMoments, ResidualSample, mu_stats, residual_terms
from .wasserstein import (W2Result, gaussian_reference_sampler, normal_quantile,
                          w2_assignment, w2_gaussian, w2_paired_reference,
                          w2_semidiscrete_1d, w2_sorted_1d, w2_to_gaussian_1d)

__all__ = [
    "ImportanceMoments", "MomentTable", "ResidualSample", "W2Result", "sum_moment_scaling",
    "covariance_error", "gaussian_reference_sampler", "moment_diagnostics",
    "mu_stats", "normal_quantile", "residual_terms", "sin_sum",
    "sin_sum_gaussian_mean", "w2_assignment", "w2_gaussian",
    "w2_paired_reference", "w2_semidiscrete_1d", "w2_sorted_1d",
    "w2_to_gaussian_1d", "weak_statistic",
]
