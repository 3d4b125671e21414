"""Experiment configuration: a single JSON document, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .asymptotic_solver import SolverOptions
from .deflation import PowerIterOptions


class ConfigError(ValueError):
    pass


def _take(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown} (allowed: {sorted(allowed)})")
    return cls(**data)


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    steps: int

    def values(self):
        if self.steps < 1:
            raise ConfigError("grid steps must be >= 1")
        vals = np.linspace(self.start, self.stop, self.steps)
        if self.steps > 1 and not np.all(np.diff(vals) > 0):
            raise ConfigError("beta1 grid must be strictly increasing")
        return [float(v) for v in vals]


@dataclass(frozen=True)
class ModelConfig:
    n: int = 100
    d: int = 3
    beta: tuple = (1.0, 5.0)
    gram: tuple = None
    alpha: float = None  # rank-2 shorthand for gram
    noise_scale: float = 1.0
    beta1_grid: Grid = None

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.gram is None:
            r = len(self.beta)
            if self.alpha is None:
                gram = np.eye(r)
            elif r == 2:
                gram = np.array([[1.0, self.alpha], [self.alpha, 1.0]])
            else:
                raise ConfigError("'alpha' shorthand needs exactly two weights")
            object.__setattr__(self, "gram", tuple(map(tuple, gram.tolist())))
        else:
            gram = tuple(tuple(map(float, row)) for row in self.gram)
            # alpha alongside gram is tolerated only when redundant (dataclasses.replace)
            if self.alpha is not None and (len(gram) != 2 or gram[0][1] != float(self.alpha)):
                raise ConfigError("give either 'gram' or 'alpha', not both")
            object.__setattr__(self, "gram", gram)
        if isinstance(self.beta1_grid, dict):
            object.__setattr__(self, "beta1_grid", _take(Grid, self.beta1_grid, "model.beta1_grid"))

    @property
    def r(self):
        return len(self.beta)

    def beta1_values(self):
        if self.beta1_grid is None:
            return [self.beta[0]]
        return self.beta1_grid.values()


@dataclass(frozen=True)
class SpectrumConfig:
    seeds: int = 10
    spiked: bool = False
    margin: float = 0.02


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    formats: tuple = ("csv", "json", "svg")

    def __post_init__(self):
        fmts = tuple(self.formats)
        bad = set(fmts) - {"csv", "json", "svg"}
        if bad:
            raise ConfigError(f"unsupported output formats {sorted(bad)}")
        object.__setattr__(self, "formats", fmts)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    trials: int = 20
    base_seed: int = 0
    power_iter: PowerIterOptions = field(default_factory=PowerIterOptions)
    solver: SolverOptions = field(default_factory=SolverOptions)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        sections = {
            "model": ModelConfig,
            "power_iter": PowerIterOptions,
            "solver": SolverOptions,
            "outputs": OutputConfig,
            "spectrum": SpectrumConfig,
        }
        kw = {}
        for key, value in data.items():
            if key in sections:
                if key == "power_iter" and "seed" in value:
                    raise ConfigError("power_iter.seed is derived from base_seed; remove it")
                kw[key] = _take(sections[key], value, key)
            else:
                kw[key] = value
        try:
            return _take(cls, kw, "config")
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def output_dir(self) -> Path:
        return Path(self.outputs.directory)


def paper_config(**overrides) -> ExperimentConfig:
    """Rank-2, order-3 sweep of the first weight at fixed second weight 5, alpha = 0.4."""
    model = ModelConfig(n=100, d=3, beta=(1.0, 5.0), alpha=0.4,
                        beta1_grid=Grid(1.0, 10.0, 10))
    base = dict(model=model, trials=20, base_seed=0,
                power_iter=PowerIterOptions(max_iters=5000))
    base.update(overrides)
    return ExperimentConfig(**base)
