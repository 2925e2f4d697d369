"""Experiment configuration: one JSON document, unknown keys rejected."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..problems import make_problem
from ..solver import SolverConfig, schedule_from_dict

TOP_KEYS = {"problem", "solver", "x0", "replications", "seed", "seeds", "horizons", "analysis",
            "output_dir", "workers"}
SOLVER_KEYS = {"eta", "K", "gamma", "lam", "schedule", "store", "batch_cap", "checkpoint_ratio",
               "residual_samples", "value_samples", "checkpoints", "monitor_compact", "monitor_descent",
               "probe_iterations"}
ANALYSIS_KEYS = {"rate_fit", "as_tail", "epsilon_targets", "as_ratio", "bootstrap_resamples"}


def _reject_unknown(d, allowed, where):
    extra = set(d) - allowed
    if extra:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(extra)}")


@dataclass
class ExperimentConfig:
    problem: dict
    solver: dict
    x0: list | None = None
    replications: int = 1
    seed: int = 0
    seeds: list | None = None
    horizons: list | None = None
    analysis: dict = field(default_factory=dict)
    output_dir: str = "runs/experiment"
    workers: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigurationError("config must be a JSON object")
        _reject_unknown(d, TOP_KEYS, "config")
        for key in ("problem", "solver"):
            if key not in d:
                raise ConfigurationError(f"config is missing {key!r}")
        _reject_unknown(d["solver"], SOLVER_KEYS, "solver")
        _reject_unknown(d.get("analysis", {}), ANALYSIS_KEYS, "analysis")
        cfg = cls(
            problem=dict(d["problem"]),
            solver=dict(d["solver"]),
            x0=d.get("x0"),
            replications=int(d.get("replications", 1)),
            seed=int(d.get("seed", 0)),
            seeds=list(d["seeds"]) if d.get("seeds") is not None else None,
            horizons=list(d["horizons"]) if d.get("horizons") is not None else None,
            analysis=dict(d.get("analysis", {})),
            output_dir=str(d.get("output_dir", "runs/experiment")),
            workers=int(d.get("workers", 1)),
            raw=json.loads(json.dumps(d)),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)

    def validate(self):
        if self.replications < 1:
            raise ConfigurationError("replications must be at least 1")
        if self.seeds is not None and len(self.seeds) != self.replications:
            raise ConfigurationError("seeds list length must equal replications")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.horizons is None and "K" not in self.solver:
            raise ConfigurationError("give solver.K or a horizons list")
        if self.horizons is not None and len(self.horizons) == 0:
            raise ConfigurationError("horizons list is empty")
        problem = self.make_problem()
        for K in self.horizon_list():
            self.solver_config(K, 0).resolved_gamma(problem, problem.blocks)
        self.initial_point(problem)

    def with_overrides(self, seed=None, replications=None, output_dir=None):
        d = json.loads(json.dumps(self.raw))
        if seed is not None:
            d["seed"] = int(seed)
            d.pop("seeds", None)
        if replications is not None:
            d["replications"] = int(replications)
            if d.get("seeds") is not None and len(d["seeds"]) != int(replications):
                d.pop("seeds")
        if output_dir is not None:
            d["output_dir"] = str(output_dir)
        return ExperimentConfig.from_dict(d)

    def make_problem(self):
        return make_problem(self.problem)

    def horizon_list(self):
        return [int(k) for k in self.horizons] if self.horizons is not None else [int(self.solver["K"])]

    def replication_seeds(self):
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [self.seed + r for r in range(self.replications)]

    def solver_config(self, K, seed):
        d = dict(self.solver)
        d["K"] = K
        d["seed"] = seed
        if "schedule" in d:
            d["schedule"] = schedule_from_dict(d["schedule"])
        if "probe_iterations" in d:
            d["probe_iterations"] = tuple(d["probe_iterations"])
        try:
            return SolverConfig(**d)
        except TypeError as exc:
            raise ConfigurationError(f"bad solver settings: {exc}") from None

    def initial_point(self, problem):
        """Configured x0, or the corner radius*(1, ..., 1) projected onto X."""
        if self.x0 is None:
            x0 = np.full(problem.n, problem.radius)
        else:
            x0 = np.asarray(self.x0, dtype=float).reshape(-1)
            if x0.size != problem.n:
                raise ConfigurationError(f"x0 has {x0.size} entries, problem has n={problem.n}")
        return problem.feasible.project(x0)

    def config_hash(self):
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def output_path(self):
        return Path(self.output_dir)
