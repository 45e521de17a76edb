"""Built-in experiment configurations (mirrored as YAML under ``configs/``)."""

from __future__ import annotations

import copy

CANONICAL_1D = {
    "A": [[1.0]],
    "gamma": [[1.0]],
    "prior": {"mean": [0.0], "cov": [[1.0]]},
    "y": [1.0],
}

# L = K = 6, diagonal forward map, isotropic noise and prior
DIAGONAL_6D = {
    "A": [[1.0 if i == j else 0.0 for j in range(6)] for i in range(6)],
    "gamma": {"identity": 1.0},
    "prior": {"mean": [0.0] * 6, "cov": {"identity": 1.0}},
    "y": [1.0, 0.5, 1.5, 0.8, 1.2, 2.0],
}

# L = 2, K = 4: room for a nonlinear part orthogonal to Range(A)
RESIDUAL_2D = {
    "A": [[1.0, 0.2], [0.3, 0.8], [0.5, -0.4], [-0.2, 0.6]],
    "gamma": [[1.0, 0.1, 0.0, 0.0], [0.1, 0.5, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0], [0.0, 0.0, 0.0, 1.0]],
    "prior": {"mean": [0.2, -0.1], "cov": [[1.0, 0.3], [0.3, 1.5]]},
    "y": [0.7, 0.4, -0.3, 1.1],
    "nonlinearity": {"amplitude": 0.0, "seed": 11},
}

PRESETS = {
    "rates": {
        "experiment": "rates-1d",
        "problem": CANONICAL_1D,
        "solver": {"mode": "sde", "h": 1e-3, "T": 1.0, "J": [32, 64, 128, 256, 512, 1024],
                   "seeds": 32, "master_seed": 20201},
        "metric": {"w2": "semidiscrete", "quadrature_order": 16, "bootstrap": 200},
        "check": {"slope": [-0.62, -0.38]},
    },
    "rates-6d": {
        "experiment": "rates-6d",
        "problem": DIAGONAL_6D,
        "solver": {"mode": "sde", "h": 1e-3, "T": 1.0, "J": [32, 64, 128, 256],
                   "seeds": 32, "master_seed": 20202},
        "metric": {"w2": "assignment", "reference_repeats": 4, "bootstrap": 200},
        "check": {"slope": [-0.48, -0.18]},
    },
    "posterior-check": {
        "experiment": "posterior-1d",
        "problem": CANONICAL_1D,
        "solver": {"mode": "sde", "h": 1e-3, "T": 1.0, "J": [4096], "seeds": 50, "master_seed": 20203},
        "metric": {"gap_h": [0.1, 0.01, 0.001], "gap_J": 256, "gap_seeds": 8},
        "check": {"mean_tol": 0.05, "var_tol": 0.05},
    },
    "coupling": {
        "experiment": "coupling-1d",
        "problem": CANONICAL_1D,
        "solver": {"mode": "sde", "h": 1e-3, "T": 1.0, "J": [16, 32, 64, 128, 256, 512],
                   "seeds": 32, "master_seed": 20204},
        "metric": {"share_noise": True, "bootstrap": 200},
        "check": {"slope": [-1.15, -0.75]},
    },
    "weak": {
        "experiment": "weak-6d",
        "problem": DIAGONAL_6D,
        "solver": {"mode": "sde", "h": 1e-3, "T": 1.0, "J": [64, 128, 256, 512, 1024, 2048],
                   "seeds": 32, "master_seed": 20205},
        "metric": {"test_function": "sin_sum", "bootstrap": 200},
        "check": {"slope": [-0.65, -0.35]},
    },
    "residuals": {
        "experiment": "residuals-2d",
        "problem": RESIDUAL_2D,
        "solver": {"master_seed": 20206},
        "metric": {"probes": 100, "amplitudes": [0.0, 0.1, 0.2, 0.4], "importance_samples": 1000000},
        "check": {"linear_tol": 1e-8},
    },
    "cov-error": {
        "experiment": "cov-error-1d",
        "problem": CANONICAL_1D,
        "solver": {"mode": "sde", "h": 1e-3, "T": 1.0, "J": [64, 128, 256, 512, 1024, 2048, 4096],
                   "seeds": 64, "master_seed": 20207},
        "metric": {"bootstrap": 200},
        "check": {"slope": [-0.65, -0.35]},
    },
    "moments": {
        "experiment": "moments-uniform",
        "problem": CANONICAL_1D,
        "solver": {"J": [16, 32, 64, 128, 256, 512, 1024, 2048, 4096], "master_seed": 20208},
        "metric": {"distribution": "uniform", "p": 4, "replicates": 100000},
        "check": {"limit_rtol": 0.2, "max_min_ratio": 3.0},
    },
}

# which runner each preset uses
PRESET_KIND = {
    "rates": "rates", "rates-6d": "rates", "posterior-check": "posterior-check",
    "coupling": "coupling", "weak": "weak", "residuals": "residuals",
    "cov-error": "cov-error", "moments": "moments",
}


def preset(name: str) -> dict:
    return copy.deepcopy(PRESETS[name])
