"""
Batchrunner
===========

Parameter sweeps over one SgcConfig integer (c, s_c, kappa or k) and a list
of seeds.

A train sweep trains the configured problem once per (value, seed) and
records the final metrics. A phase sweep estimates the OMP exact-recovery
rate for each kappa from random sparse instances.

The output is a long-form CSV, one row per (value, seed), sorted by value and
then seed and preceded by the resolved config as comment lines. Runs whose
row is already present in the output file are skipped, so an interrupted
sweep resumes where it stopped and ends with the same file as an
uninterrupted one. A failed run becomes a row with the error in the
``error`` column; the sweep carries on.

"""
import copy
import logging
import os
from itertools import product
from multiprocessing import Pool

import numpy as np
import pandas as pd
from tqdm import tqdm

# mypy
from typing import Any, Dict, Iterator, List, Optional, Set, Tuple

from .config import RunConfig
from .errors import ConfigError, InputError, SgcError
from .model import header_lines, train, write_csv
from .omp import recovery_success_rate
from .problems import make_problem

logger = logging.getLogger(__name__)

TRAIN_COLUMNS = {
    "param": str,
    "value": "Int64",
    "seed": "Int64",
    "c": "Int64",
    "s_c": "Int64",
    "kappa": "Int64",
    "k": "Int64",
    "final_loss": float,
    "final_accuracy": float,
    "state_size": "Int64",
    "error": str,
}

PHASE_COLUMNS = {
    "param": str,
    "value": "Int64",
    "seed": "Int64",
    "d": "Int64",
    "s": "Int64",
    "k": "Int64",
    "trials": "Int64",
    "success_rate": float,
    "error": str,
}

# Failures recorded as rows instead of aborting the sweep.
RUN_ERRORS = (SgcError, ArithmeticError, ValueError, np.linalg.LinAlgError)


class ParameterError(ConfigError):
    MESSAGE = (
        "Sweep values must be positive integers. "
        "These values are not: {}"
    )

    def __init__(self, bad_values):
        super().__init__(bad_values)
        self.bad_values = bad_values


class ParameterProduct:
    """Iterate over every combination of the named value lists, as dicts."""

    def __init__(self, variable_parameters: Dict[str, List[Any]]) -> None:
        self.param_names, self.param_lists = zip(
            *(copy.deepcopy(variable_parameters)).items()
        )
        self._product = product(*self.param_lists)

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        return self

    def __next__(self) -> Dict[str, Any]:
        return dict(zip(self.param_names, next(self._product)))


def _error_tag(exc: BaseException) -> str:
    return "{}: {}".format(type(exc).__name__, " ".join(str(exc).split()))


def sweep_config(config: RunConfig, param: str, value: int, seed: int):
    """The optimizer config of one train sweep point.

    For param == "k", s_c = k / (kappa * c), which must divide exactly.

    """
    cfg = config.optimizer.replace(seed=seed)
    if param != "k":
        return cfg.replace(**{param: value})
    per_chunk = cfg.kappa * cfg.c
    if value % per_chunk:
        raise ConfigError(
            "k={} is not a multiple of kappa * c = {}".format(value, per_chunk)
        )
    return cfg.replace(s_c=value // per_chunk)


def run_train_point(config: RunConfig, param: str, value: int, seed: int) -> Dict[str, Any]:
    """Train once at one grid point; errors are returned in the row."""
    row = {"param": param, "value": value, "seed": seed}
    try:
        cfg = sweep_config(config, param, value, seed)
        row.update(c=cfg.c, s_c=cfg.s_c, kappa=cfg.kappa, k=cfg.k)
        problem_config = config.problem
        problem = make_problem(
            problem_config.kind,
            problem_config.dims,
            n_samples=problem_config.n_samples,
            seed=seed,
            hidden=problem_config.hidden,
            l2=problem_config.l2,
            energy_profile=problem_config.energy_profile,
        )
        report = train(problem, config.train.optimizer, cfg, config.train.steps,
                       config.train.batch_size)
    except RUN_ERRORS as exc:
        row["error"] = _error_tag(exc)
        return row
    row.update(
        final_loss=report.final_loss,
        final_accuracy=report.final_accuracy,
        state_size=report.state_size,
        error="",
    )
    return row


def run_phase_point(config: RunConfig, param: str, value: int, seed: int) -> Dict[str, Any]:
    """Estimate the exact-recovery rate at kappa = value."""
    sweep = config.sweep
    row = {"param": param, "value": value, "seed": seed, "d": sweep.d, "s": sweep.s,
           "k": value * sweep.s, "trials": sweep.trials}
    try:
        row["success_rate"] = recovery_success_rate(sweep.d, sweep.s, value, sweep.trials, seed)
    except RUN_ERRORS as exc:
        row["error"] = _error_tag(exc)
        return row
    row["error"] = ""
    return row


class SweepRunner:
    """Run a sweep described by a RunConfig and keep its CSV up to date.

    Args:
        config: the resolved run configuration; config.sweep holds the grid.
        path: output CSV. Rows already in it are not run again.
        display_progress: show a tqdm progress bar.

    """

    def __init__(self, config: RunConfig, path: Optional[str] = None,
                 display_progress: bool = True) -> None:
        self.config = config
        self.sweep = config.sweep
        bad = [v for v in self.sweep.values if not isinstance(v, int) or v < 1]
        if bad:
            raise ParameterError(bad)
        self.path = path
        self.display_progress = display_progress
        self.columns = PHASE_COLUMNS if self.sweep.kind == "phase" else TRAIN_COLUMNS
        self.header = config.header()
        self.rows: List[Dict[str, Any]] = []

    def _make_run_args(self) -> List[Tuple[RunConfig, str, int, int]]:
        """Every (config, param, value, seed) of the grid, in output order."""
        grid = ParameterProduct(
            {"value": sorted(set(self.sweep.values)), "seed": sorted(set(self.sweep.seeds))}
        )
        return [(self.config, self.sweep.param, point["value"], point["seed"]) for point in grid]

    def _run_wrapper(self, run_args):
        runner = run_phase_point if self.sweep.kind == "phase" else run_train_point
        return runner(*run_args)

    def load_existing(self) -> pd.DataFrame:
        """Rows already written to self.path by a sweep with the same config."""
        empty = self._normalise(pd.DataFrame(columns=list(self.columns)))
        if self.path is None or not os.path.exists(self.path):
            return empty
        try:
            with open(self.path) as f:
                lines = f.read().splitlines()
        except OSError as exc:
            raise InputError("cannot read {}: {}".format(self.path, exc)) from exc
        header = [line for line in lines if line.startswith("#")]
        if header != header_lines(self.header):
            raise ConfigError(
                "{} was written by a different sweep configuration".format(self.path)
            )
        if len(lines) <= len(header):
            return empty
        try:
            frame = pd.read_csv(self.path, skiprows=len(header), dtype={"param": str, "error": str})
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise InputError("cannot parse {}: {}".format(self.path, exc)) from exc
        if list(frame.columns) != list(self.columns):
            raise InputError("{} does not have the sweep columns".format(self.path))
        return self._normalise(frame)

    def _normalise(self, frame: pd.DataFrame) -> pd.DataFrame:
        frame = frame.reindex(columns=list(self.columns))
        for column, dtype in self.columns.items():
            if dtype is str:
                frame[column] = frame[column].fillna("").astype(str)
            else:
                frame[column] = frame[column].astype(dtype)
        return frame.sort_values(["value", "seed"], kind="mergesort").reset_index(drop=True)

    @staticmethod
    def _completed(frame: pd.DataFrame) -> Set[Tuple[int, int]]:
        return {(int(v), int(s)) for v, s in zip(frame["value"], frame["seed"])}

    def get_results_dataframe(self, existing: Optional[pd.DataFrame] = None) -> pd.DataFrame:
        new = pd.DataFrame.from_records(self.rows, columns=list(self.columns))
        frames = [f for f in (existing, self._normalise(new)) if f is not None and len(f)]
        if not frames:
            return self._normalise(new)
        return self._normalise(pd.concat(frames, ignore_index=True))

    def _record(self, row: Dict[str, Any], existing: pd.DataFrame) -> None:
        self.rows.append(row)
        if row.get("error"):
            logger.warning(
                "sweep %s=%s seed %s failed: %s", row["param"], row["value"], row["seed"], row["error"]
            )
        if self.path is not None:
            write_csv(self.path, self.get_results_dataframe(existing), self.header)

    def run_all(self) -> pd.DataFrame:
        """Run every grid point not yet in the output file."""
        existing = self.load_existing()
        done = self._completed(existing)
        run_args = [args for args in self._make_run_args() if (args[2], args[3]) not in done]
        logger.info(
            "%s sweep over %s: %d runs, %d already done",
            self.sweep.kind, self.sweep.param, len(run_args), len(done),
        )
        self.rows = []

        with tqdm(total=len(run_args), disable=not self.display_progress) as pbar:
            if self.sweep.workers > 1 and len(run_args) > 1:
                with Pool(self.sweep.workers) as pool:
                    for row in pool.imap_unordered(self._run_wrapper, run_args):
                        self._record(row, existing)
                        pbar.update()
            else:
                for args in run_args:
                    self._record(self._run_wrapper(args), existing)
                    pbar.update()

        results = self.get_results_dataframe(existing)
        if self.path is not None:
            write_csv(self.path, results, self.header)
        return results


def run_sweep(config: RunConfig, path: Optional[str] = None,
              display_progress: bool = False) -> pd.DataFrame:
    return SweepRunner(config, path, display_progress).run_all()
