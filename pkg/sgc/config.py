"""
Run Configuration
=================

A RunConfig is read from a YAML file with the sections below; every key is
optional and unknown keys are rejected. Command-line flags override the file.

    seed: 0                   # master seed for problem data and optimizers
    optimizer:                # SgcConfig fields
      eta: 0.01
      c: 4
      s_c: 4
      kappa: 8
    problem:
      kind: logistic-regression
      dims: 256
      n_samples: 512
    train:
      optimizer: mesgc
      steps: 1000
      batch_size: 0           # 0 = full batch
    sweep:
      kind: train             # train | phase
      param: kappa            # c | s_c | kappa | k
      values: [6, 7, 8]
      seeds: [0, 1, 2, 3, 4]
      workers: 1
    output:
      dir: out

See configs/example.yaml for a complete file.

"""
import dataclasses
from dataclasses import dataclass, field

import yaml

# mypy
from typing import Any, Dict, List, Optional, Union

from .errors import ConfigError, InputError
from .optimizer import OPTIMIZERS, SgcConfig
from .problems import KINDS

SWEEP_PARAMS = ("c", "s_c", "kappa", "k")
SWEEP_KINDS = ("train", "phase")


class UnknownKeysError(ConfigError):
    MESSAGE = "Section '{}' has unknown keys: {}"


def _section(cls, values: Optional[Dict[str, Any]], name: str):
    if values is None:
        return cls()
    if not isinstance(values, dict):
        raise ConfigError("section '{}' must be a mapping".format(name))
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise UnknownKeysError(name, unknown)
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError("section '{}': {}".format(name, exc)) from exc


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "quadratic"
    dims: Union[int, List[int]] = 64
    n_samples: int = 200
    hidden: int = 8
    l2: float = 0.0
    energy_profile: str = "uniform"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError("problem.kind must be one of {}".format(KINDS))
        if self.energy_profile not in ("uniform", "skewed"):
            raise ConfigError("problem.energy_profile must be uniform or skewed")
        if self.l2 < 0:
            raise ConfigError("problem.l2 must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adamw"
    steps: int = 200
    batch_size: int = 0

    def __post_init__(self) -> None:
        if self.optimizer.lower() not in OPTIMIZERS:
            raise ConfigError("train.optimizer must be one of {}".format(sorted(OPTIMIZERS)))
        if self.steps < 1 or self.batch_size < 0:
            raise ConfigError("train.steps must be >= 1 and train.batch_size >= 0")


@dataclass(frozen=True)
class SweepConfig:
    kind: str = "train"
    param: str = "kappa"
    values: List[int] = field(default_factory=lambda: [6, 7, 8])
    seeds: List[int] = field(default_factory=lambda: [0])
    workers: int = 1
    trials: int = 500
    d: int = 512
    s: int = 16

    def __post_init__(self) -> None:
        if self.kind not in SWEEP_KINDS:
            raise ConfigError("sweep.kind must be one of {}".format(SWEEP_KINDS))
        if self.param not in SWEEP_PARAMS:
            raise ConfigError("sweep.param must be one of {}".format(SWEEP_PARAMS))
        if self.kind == "phase" and self.param != "kappa":
            raise ConfigError("phase sweeps run over kappa")
        if not self.values or not self.seeds:
            raise ConfigError("sweep.values and sweep.seeds must be non-empty")
        if self.workers < 1 or self.trials < 1 or self.d < 1 or self.s < 1:
            raise ConfigError("sweep.workers, trials, d and s must be >= 1")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    optimizer: SgcConfig = field(default_factory=SgcConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, values: Optional[Dict[str, Any]]) -> "RunConfig":
        values = dict(values or {})
        sections = ("seed", "optimizer", "problem", "train", "sweep", "output")
        unknown = sorted(set(values) - set(sections))
        if unknown:
            raise UnknownKeysError("<root>", unknown)
        seed = values.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        optimizer = values.get("optimizer") or {}
        if not isinstance(optimizer, dict):
            raise ConfigError("section 'optimizer' must be a mapping")
        optimizer = SgcConfig.from_dict(dict(optimizer, seed=seed))
        return cls(
            seed=seed,
            optimizer=optimizer,
            problem=_section(ProblemConfig, values.get("problem"), "problem"),
            train=_section(TrainConfig, values.get("train"), "train"),
            sweep=_section(SweepConfig, values.get("sweep"), "sweep"),
            output=_section(OutputConfig, values.get("output"), "output"),
        )

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None) -> "RunConfig":
        config = self
        if seed is not None:
            config = dataclasses.replace(
                config, seed=seed, optimizer=config.optimizer.replace(seed=seed)
            )
        if out is not None:
            config = dataclasses.replace(config, output=OutputConfig(out))
        return config

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def header(self) -> Dict[str, Any]:
        """The resolved run parameters as CSV header entries.

        The output section is left out: where a run writes does not change
        what it writes.

        """
        header = self.to_dict()
        del header["output"]
        return header


def load_config(path: Optional[str] = None, seed: Optional[int] = None,
                out: Optional[str] = None) -> RunConfig:
    values = None
    if path is not None:
        try:
            with open(path) as f:
                values = yaml.safe_load(f)
        except OSError as exc:
            raise InputError("cannot read config {}: {}".format(path, exc)) from exc
        except yaml.YAMLError as exc:
            raise ConfigError("{} is not valid YAML: {}".format(path, exc)) from exc
    return RunConfig.from_dict(values).with_overrides(seed, out)
