"""Experiment configuration: YAML (or JSON) files mapped onto dataclasses.

Grammar (all keys optional unless noted; unknown keys are errors)::

    experiment: <id>                 # used in results.csv and seed derivation
    problem:
      A: [[...], ...]                # required, row-major K x L
      gamma: [[...]] | {identity: s2}
      prior: {mean: [...], cov: [[...]] | {identity: s2}}
      y: [...]                       # explicit data, or
      data: {u_true: [...], noise_seed: <int>}   # y = A u_true + N(0, Gamma) draw
      nonlinearity: {amplitude: <float>, seed: <int>, scale: <float>}
    solver:
      mode: sde | discrete
      h: <float>
      T: <float>
      J: [<int>, ...]                # ascending
      seeds: <int>
      master_seed: <int>
    metric:
      w2: semidiscrete | assignment
      reference_repeats: <int>
      test_function: sin_sum | constant
      bootstrap: <int>
      ...                            # experiment-specific extras, see presets
    check: {<name>: [lo, hi] | <float>}
    output: <dir>
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from ..core import NoiseStream, SpdMatrix, sample_gaussian
from ..errors import ConfigError
from ..model import ForwardModel, NonlinearPart, Prior

_TOP = {"experiment", "problem", "solver", "metric", "check", "output"}
_PROBLEM = {"A", "gamma", "prior", "y", "data", "nonlinearity"}
_SOLVER = {"mode", "h", "T", "J", "seeds", "master_seed"}


def _matrix(spec, dim: int, what: str) -> np.ndarray:
    if isinstance(spec, dict):
        if set(spec) != {"identity"}:
            raise ConfigError(f"{what}: expected {{identity: variance}} or an array")
        return float(spec["identity"]) * np.eye(dim)
    m = np.array(spec, dtype=float, ndmin=2)
    if m.shape != (dim, dim):
        raise ConfigError(f"{what}: expected shape {(dim, dim)}, got {m.shape}")
    return m


@dataclass
class ProblemSpec:
    A: np.ndarray
    gamma: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    y: Optional[np.ndarray] = None
    u_true: Optional[np.ndarray] = None
    noise_seed: int = 0
    amplitude: float = 0.0
    nonlinearity_seed: int = 0
    nonlinearity_scale: float = 1.0
    has_nonlinearity: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        extra = set(d) - _PROBLEM
        if extra:
            raise ConfigError(f"unknown problem keys: {sorted(extra)}")
        if "A" not in d:
            raise ConfigError("problem.A is required")
        A = np.array(d["A"], dtype=float, ndmin=2)
        K, L = A.shape
        gamma = _matrix(d.get("gamma", {"identity": 1.0}), K, "problem.gamma")
        prior = d.get("prior", {})
        mean = np.array(prior.get("mean", [0.0] * L), dtype=float).reshape(-1)
        if mean.size != L:
            raise ConfigError("problem.prior.mean has the wrong length")
        cov = _matrix(prior.get("cov", {"identity": 1.0}), L, "problem.prior.cov")
        if ("y" in d) == ("data" in d):
            raise ConfigError("give exactly one of problem.y and problem.data")
        spec = cls(A, gamma, mean, cov)
        if "y" in d:
            spec.y = np.array(d["y"], dtype=float).reshape(-1)
            if spec.y.size != K:
                raise ConfigError("problem.y has the wrong length")
        else:
            data = d["data"]
            spec.u_true = np.array(data["u_true"], dtype=float).reshape(-1)
            spec.noise_seed = int(data.get("noise_seed", 0))
        nl = d.get("nonlinearity")
        if nl is not None:
            spec.has_nonlinearity = True
            spec.amplitude = float(nl.get("amplitude", 0.0))
            spec.nonlinearity_seed = int(nl.get("seed", 0))
            spec.nonlinearity_scale = float(nl.get("scale", 1.0))
        return spec

    def data(self) -> np.ndarray:
        if self.y is not None:
            return self.y
        noise = sample_gaussian(np.zeros(self.A.shape[0]), self.gamma, 1,
                                NoiseStream(self.noise_seed).child("data"), trial=0)[0]
        return self.A @ self.u_true + noise

    def build(self, amplitude: Optional[float] = None) -> tuple[ForwardModel, Prior]:
        amp = self.amplitude if amplitude is None else float(amplitude)
        gamma = SpdMatrix(self.gamma)
        nl = None
        if self.has_nonlinearity or amplitude is not None:
            nl = NonlinearPart.random(self.A, gamma, amp, self.nonlinearity_seed, self.nonlinearity_scale)
        return ForwardModel(self.A, gamma, self.data(), nl), Prior(self.prior_mean, self.prior_cov)


@dataclass
class SolverSpec:
    mode: str = "sde"
    h: float = 1e-3
    T: float = 1.0
    J: list = field(default_factory=lambda: [64])
    seeds: int = 8
    master_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SolverSpec":
        extra = set(d) - _SOLVER
        if extra:
            raise ConfigError(f"unknown solver keys: {sorted(extra)}")
        s = cls(**{k: v for k, v in d.items()})
        s.J = [int(j) for j in (s.J if isinstance(s.J, (list, tuple)) else [s.J])]
        s.h, s.T, s.seeds, s.master_seed = float(s.h), float(s.T), int(s.seeds), int(s.master_seed)
        if s.J != sorted(set(s.J)):
            raise ConfigError("solver.J must be strictly ascending")
        if s.mode not in ("sde", "discrete"):
            raise ConfigError(f"solver.mode {s.mode!r} not in (sde, discrete)")
        return s


@dataclass
class ExperimentConfig:
    experiment: str
    problem: ProblemSpec
    solver: SolverSpec
    metric: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)
    output: Optional[str] = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        extra = set(d) - _TOP
        if extra:
            raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
        if "problem" not in d:
            raise ConfigError("config needs a problem section")
        return cls(
            experiment=str(d.get("experiment", "experiment")),
            problem=ProblemSpec.from_dict(d["problem"]),
            solver=SolverSpec.from_dict(d.get("solver", {})),
            metric=dict(d.get("metric", {})),
            check=dict(d.get("check", {})),
            output=d.get("output"),
            raw=copy.deepcopy(d),
        )

    def validate_for_rates(self) -> None:
        if len(self.solver.J) < 4:
            raise ConfigError("rate fits need at least 4 ensemble sizes")
        if self.solver.seeds < 8:
            raise ConfigError("rate fits need at least 8 seeds")

    def with_overrides(self, **solver) -> "ExperimentConfig":
        d = copy.deepcopy(self.raw)
        d.setdefault("solver", {}).update(solver)
        return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(d)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.raw, indent=2, sort_keys=True)
