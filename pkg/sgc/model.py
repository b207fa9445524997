"""
Training Runs
=============

Core Objects: Model, TrainingModel, TrainReport.

A TrainingModel owns a problem, its flat parameter vector, a GroupScheduler
holding one optimizer per parameter group, and a DataCollector. Each step
evaluates the loss and gradient at the current parameters, lets the scheduler
step every group, and collects the metrics.

"""
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

# mypy
from typing import Any, Dict, List, Optional

from .datacollection import DataCollector
from .errors import ConfigError, InputError, InvalidGradientError, SgcError, TrainingStepError
from .optimizer import SgcConfig, can_compress, make_optimizer
from .problems import Problem
from .schedule import GroupScheduler, ParameterGroup
from .tensor import Rng

logger = logging.getLogger(__name__)


class Model:
    """Base class for step-driven runs."""

    def __init__(self, seed: Optional[int] = None) -> None:
        """Create a new run.

        Attributes:
            schedule: scheduler object
            running: a bool indicating if the run should continue
            rng: the run's random stream

        """
        self.rng = Rng(seed or 0)
        self.running = True
        self.schedule = None

    def run_model(self) -> None:
        """Run until the end condition is reached."""
        while self.running:
            self.step()

    def step(self) -> None:
        pass


class TrainingModel(Model):
    """Train a problem with one optimizer per parameter group.

    Groups an SGC-family method cannot chunk (size not divisible by c, or
    chunks shorter than kappa * s_c) are stepped with AdamW instead.

    Args:
        problem: the objective.
        optimizer: one of "sgd", "adamw", "sgc", "mesgc", "cesgc".
        cfg: optimizer hyper-parameters; cfg.seed seeds every group.
        steps: number of steps to run.
        batch_size: samples per step; None or 0 means full batch.

    """

    def __init__(self, problem: Problem, optimizer: str, cfg: SgcConfig, steps: int,
                 batch_size: Optional[int] = None) -> None:
        super().__init__(seed=cfg.seed)
        if steps < 1:
            raise ConfigError("steps must be >= 1, got {}".format(steps))
        self.problem = problem
        self.optimizer = optimizer.lower()
        self.cfg = cfg
        self.max_steps = steps
        self.batch_size = batch_size or 0
        self.params = problem.initial_params()
        self.loss = float("nan")
        self.grad = np.zeros(problem.dim)
        self._order = (
            self.rng.permutation(problem.n_samples) if self.batch_size and problem.n_samples else None
        )

        self.schedule = GroupScheduler(self)
        for group_id, spec in enumerate(problem.groups):
            name = self.optimizer
            if not can_compress(name, spec.size, cfg, spec.shape):
                logger.info(
                    "group %s (%d entries) does not fit the %s chunking; stepping it with adamw",
                    spec.name, spec.size, name,
                )
                name = "adamw"
            optimizer_ = make_optimizer(name, spec.size, cfg, group_id, spec.shape)
            self.schedule.add(ParameterGroup(group_id, self, spec, optimizer_))

        self.datacollector = DataCollector(
            model_reporters={"loss": "loss", "accuracy": _accuracy, "recovered": _recovered},
            group_reporters={"method": "method", "recovered": "recovered"},
        )

    def _batch(self):
        if self._order is None:
            return None
        n = self.problem.n_samples
        start = (self.schedule.steps * self.batch_size) % n
        return self._order[np.arange(start, start + self.batch_size) % n]

    def step(self) -> None:
        step = self.schedule.steps + 1
        try:
            self.loss, self.grad = self.problem.loss_and_grad(self.params, self._batch())
            if not np.isfinite(self.loss):
                raise InvalidGradientError("loss is {}".format(self.loss))
            self.schedule.step()
        except SgcError as exc:
            raise TrainingStepError(step, exc) from exc
        self.datacollector.collect(self)
        if self.schedule.steps >= self.max_steps:
            self.running = False

    def report(self) -> "TrainReport":
        metrics = self.datacollector.get_model_vars_dataframe()
        return TrainReport(
            losses=metrics["loss"].to_numpy(),
            final_params=self.params.copy(),
            steps=self.schedule.steps,
            config_echo=self.cfg,
            final_loss=self.problem.loss(self.params),
            final_accuracy=self.problem.accuracy(self.params),
            metrics=metrics,
            state_size=self.schedule.state_size(),
        )


def _accuracy(model: TrainingModel) -> Optional[float]:
    return model.problem.accuracy(model.params)


def _recovered(model: TrainingModel) -> int:
    return sum(group.recovered for group in model.schedule.groups)


@dataclass
class TrainReport:
    """Result of a training run.

    Attributes:
        losses: loss at the parameters each step started from.
        final_params: parameters after the last step.
        steps: steps taken.
        config_echo: the optimizer config the run used.
        final_loss: full-batch loss at final_params.
        final_accuracy: accuracy at final_params for classifiers.
        metrics: every collected per-step metric.
        state_size: stored moment entries across all groups.

    """

    losses: np.ndarray
    final_params: np.ndarray
    steps: int
    config_echo: SgcConfig
    final_loss: float = float("nan")
    final_accuracy: Optional[float] = None
    metrics: Optional[pd.DataFrame] = field(default=None, repr=False)
    state_size: int = 0

    def summary(self) -> Dict[str, Any]:
        return {
            "steps": self.steps,
            "final_loss": self.final_loss,
            "final_accuracy": self.final_accuracy,
            "state_size": self.state_size,
        }

    def to_csv(self, path, header: Optional[Dict[str, Any]] = None) -> None:
        """Write ``step,loss`` rows after a commented config header."""
        frame = pd.DataFrame(
            {"step": np.arange(1, self.steps + 1), "loss": self.losses}
        )
        write_csv(path, frame, header or {"optimizer": self.config_echo.to_dict()})


def header_lines(header: Dict[str, Any]) -> List[str]:
    return ["# {}: {}".format(key, json.dumps(value, sort_keys=True)) for key, value in header.items()]


def write_csv(path, frame: pd.DataFrame, header: Dict[str, Any]) -> None:
    """Write frame as CSV preceded by ``# key: json`` header lines."""
    try:
        with open(path, "w", newline="") as f:
            for line in header_lines(header):
                f.write(line + "\n")
            frame.to_csv(f, index=False, float_format="%.12e", na_rep="")
    except OSError as exc:
        raise InputError("cannot write {}: {}".format(path, exc)) from exc


def train(problem: Problem, optimizer: str, cfg: SgcConfig, steps: int,
          batch_size: Optional[int] = None) -> TrainReport:
    """Run a TrainingModel to completion and return its report."""
    model = TrainingModel(problem, optimizer, cfg, steps, batch_size)
    logger.info(
        "training %s on %s (%d parameters, %d groups) for %d steps",
        optimizer, problem.kind, problem.dim, model.schedule.get_group_count(), steps,
    )
    model.run_model()
    report = model.report()
    logger.info("finished: final loss %.6e", report.final_loss)
    return report
