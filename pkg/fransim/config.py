"""
Simulation configuration: one frozen section per concern, defaults from `config_base`.

A configuration file is plain Python assigning one dict per section, for example

    power = {"V": 3e10}
    experiment = {"horizon": 2000, "seeds": [1, 2, 3]}

Omitted keys keep their defaults.  Unknown sections and keys are errors.
"""

import dataclasses
import logging
import runpy
import types
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Tuple, Union

import numpy as np

from . import config_base
from .baselines import PsoParams
from .errors import ConfigError
from .netmodel import STRATEGIES, ComputeBudget, PowerParams, RateParams, SolverParams
from .qlearn import LearnerParams
from .topology import ChannelLaw, TopologyConfig
from .utils import parse_override

log = logging.getLogger(__name__)

POLICIES = ("qlearn", "all_to_rrhs", "pl_first", "pso", "exhaustive")


@dataclass(frozen=True)
class ComputeConfig:
    per_fap: float = config_base.FAP_CPU
    pool_factor: float = config_base.BBU_POOL_FACTOR
    mu0: float = config_base.MU0
    mu1: float = config_base.MU1
    c_cons: float = config_base.C_CONS

    def __post_init__(self):
        if self.per_fap < 0 or self.pool_factor < 0:
            raise ValueError("Computing budgets must be non-negative")

    def budget(self, num_fap: int) -> ComputeBudget:
        return ComputeBudget.uniform(
            self.per_fap, num_fap, self.pool_factor, mu0=self.mu0, mu1=self.mu1, c_cons=self.c_cons
        )

    def total(self, num_fap: int) -> float:
        return self.per_fap * (num_fap + self.pool_factor)

    def with_total(self, total: float, num_fap: int) -> "ComputeConfig":
        """Spreads a total budget over the F-APs and the BBU pool, keeping the pool factor."""
        return dataclasses.replace(self, per_fap=total / (num_fap + self.pool_factor))


@dataclass(frozen=True)
class TrafficConfig:
    # one value for every traditional UE, or one per UE
    mean_arrival: Union[float, Tuple[float, ...]] = config_base.MEAN_ARRIVAL

    def __post_init__(self):
        if np.any(np.asarray(self.mean_arrival, dtype=float) < 0):
            raise ValueError(f"Invalid mean arrival {self.mean_arrival}: must be non-negative")

    def arrivals(self, num_tue: int) -> np.ndarray:
        lam = np.asarray(self.mean_arrival, dtype=float)
        if lam.ndim == 0:
            return np.full(num_tue, float(lam))
        if len(lam) != num_tue:
            raise ConfigError(f"{len(lam)} mean arrivals given for {num_tue} traditional UEs")
        return lam


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: str = config_base.STRATEGY
    policy: str = config_base.POLICY
    horizon: int = config_base.HORIZON
    seeds: Tuple[int, ...] = config_base.SEEDS
    workers: int = config_base.WORKERS
    out_dir: str = config_base.OUT_DIR
    export_tables: bool = False
    v_grid: Tuple[float, ...] = config_base.V_GRID
    lambda_grid: Tuple[float, ...] = config_base.LAMBDA_GRID
    budget_grid: Tuple[float, ...] = config_base.BUDGET_GRID
    k1_grid: Tuple[int, ...] = config_base.K1_GRID
    tau_grid: Tuple[Any, ...] = config_base.TAU_GRID

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"Unknown strategy '{self.strategy}'; expected one of {STRATEGIES}")
        if self.policy not in POLICIES:
            raise ValueError(f"Unknown policy '{self.policy}'; expected one of {POLICIES}")
        if self.horizon < 1:
            raise ValueError(f"Invalid horizon {self.horizon}: must be at least 1")
        if not self.seeds or any(s < 0 for s in self.seeds):
            raise ValueError(f"Invalid seeds {self.seeds}: need at least one non-negative seed")
        if self.workers < 1:
            raise ValueError(f"Invalid worker count {self.workers}")
        for name in ("v_grid", "lambda_grid", "budget_grid", "k1_grid", "tau_grid"):
            if not getattr(self, name):
                raise ValueError(f"Grid {name} must not be empty")
        for tau in self.tau_grid:
            if tau != "log" and not (isinstance(tau, (int, float)) and tau > 0):
                raise ValueError(f"Invalid temperature grid entry {tau!r}")


SECTIONS = {
    "topology": TopologyConfig,
    "channel": ChannelLaw,
    "rate": RateParams,
    "power": PowerParams,
    "compute": ComputeConfig,
    "traffic": TrafficConfig,
    "learner": LearnerParams,
    "pso": PsoParams,
    "solver": SolverParams,
    "experiment": ExperimentConfig,
}


@dataclass(frozen=True)
class SimConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    channel: ChannelLaw = field(default_factory=ChannelLaw)
    rate: RateParams = field(default_factory=RateParams)
    power: PowerParams = field(default_factory=PowerParams)
    compute: ComputeConfig = field(default_factory=ComputeConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    learner: LearnerParams = field(default_factory=LearnerParams)
    pso: PsoParams = field(default_factory=PsoParams)
    solver: SolverParams = field(default_factory=SolverParams)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    @classmethod
    def from_sections(cls, sections: Dict[str, Dict[str, Any]]) -> "SimConfig":
        return cls().updated(sections)

    @classmethod
    def load(cls, path=None, overrides: Iterable[str] = ()) -> "SimConfig":
        """
        Reads an optional configuration file and applies `section.key=value` overrides on top.
        Raises ConfigError for invalid contents; OSError propagates for an unreadable file.
        """
        sections: Dict[str, Dict[str, Any]] = {}
        if path is not None:
            sections = read_config_file(path)
        for text in overrides:
            try:
                section, key, value = parse_override(text)
            except ValueError as e:
                raise ConfigError(str(e))
            sections.setdefault(section, {})[key] = value
        return cls.from_sections(sections)

    def updated(self, sections: Dict[str, Dict[str, Any]]) -> "SimConfig":
        """A copy with the given section values replaced, validated."""
        changes = {}
        for name, values in sections.items():
            if name not in SECTIONS:
                raise ConfigError(f"Unknown configuration section '{name}'")
            if not isinstance(values, dict):
                raise ConfigError(f"Section '{name}' must be a dict, not {type(values).__name__}")
            current = getattr(self, name)
            known = {f.name: f for f in dataclasses.fields(current)}
            for key in values:
                if key not in known:
                    raise ConfigError(f"Unknown configuration key '{name}.{key}'")
            coerced = {key: _coerce(getattr(current, key), value) for key, value in values.items()}
            try:
                changes[name] = dataclasses.replace(current, **coerced)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Invalid '{name}' section: {e}")
        return dataclasses.replace(self, **changes)

    def describe(self):
        """`section.key = value` lines for every resolved setting."""
        lines = []
        for name in SECTIONS:
            section = getattr(self, name)
            for f in dataclasses.fields(section):
                lines.append(f"{name}.{f.name} = {getattr(section, f.name)!r}")
        return lines


def _coerce(default, value):
    if isinstance(value, list):
        return tuple(value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def read_config_file(path) -> Dict[str, Dict[str, Any]]:
    try:
        namespace = runpy.run_path(str(path))
    except (SyntaxError, NameError, TypeError, ValueError) as e:
        raise ConfigError(f"Could not evaluate configuration file {path}: {e}")
    sections = {}
    for name, value in namespace.items():
        if name.startswith("_") or isinstance(value, (types.ModuleType, types.FunctionType)):
            continue
        if name not in SECTIONS:
            raise ConfigError(f"{path}: unknown configuration section '{name}'")
        sections[name] = value
    log.debug(f"Loaded configuration sections {sorted(sections)} from {path}")
    return sections
