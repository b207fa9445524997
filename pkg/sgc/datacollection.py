"""
Data Collection
===============

Per-step metrics of a training run, at two levels:

    * run level: one value per step (loss, accuracy, recovered entries).
    * group level: one record per parameter group per step (method,
      recovered entries).

Reporters are given as a mapping from a metric name to either the name of an
attribute or a callable taking the model (run level) or the group (group
level). collect() is called once per step, after the groups have moved.

    get_model_vars_dataframe: indexed by step, starting at 1.
    get_group_vars_dataframe: indexed by (Step, GroupID).

"""
from operator import attrgetter

import pandas as pd

# mypy
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

Reporter = Union[str, Callable[[Any], Any]]


def _as_callable(reporter: Reporter) -> Callable[[Any], Any]:
    if isinstance(reporter, str):
        return attrgetter(reporter)
    return reporter


class DataCollector:
    """Collects run-level and group-level metrics once per step.

    Args:
        model_reporters: metric name -> attribute name or callable(model).
        group_reporters: metric name -> attribute name or callable(group).

    Callables must be module-level functions if the collector is pickled.

    """

    def __init__(self, model_reporters: Optional[Dict[str, Reporter]] = None,
                 group_reporters: Optional[Dict[str, Reporter]] = None) -> None:
        self.model_reporters = {
            name: _as_callable(r) for name, r in (model_reporters or {}).items()
        }
        self.group_reporters = {
            name: _as_callable(r) for name, r in (group_reporters or {}).items()
        }
        self.model_vars: Dict[str, List[Any]] = {name: [] for name in self.model_reporters}
        self._group_records: List[Tuple[Any, ...]] = []

    def collect(self, model) -> None:
        """Record every reporter for the step the model has just finished."""
        for name, reporter in self.model_reporters.items():
            self.model_vars[name].append(reporter(model))
        if not self.group_reporters:
            return
        step = model.schedule.steps
        for group in model.schedule.groups:
            values = tuple(reporter(group) for reporter in self.group_reporters.values())
            self._group_records.append((step, group.unique_id) + values)

    def get_model_vars_dataframe(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.model_vars)
        frame.index = pd.RangeIndex(1, len(frame) + 1, name="step")
        return frame

    def get_group_vars_dataframe(self) -> pd.DataFrame:
        frame = pd.DataFrame.from_records(
            self._group_records, columns=["Step", "GroupID"] + list(self.group_reporters)
        )
        return frame.set_index(["Step", "GroupID"])
