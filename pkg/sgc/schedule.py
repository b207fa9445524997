"""
Parameter Group Scheduling
==========================

Objects for stepping the parameter groups of a training run. A run splits its
flat parameter vector into groups, each owning one optimizer and one state.
The scheduler activates the groups once per step.

Activation is simultaneous: every group first computes its update direction
from the gradient of the current parameters (step), then every group applies
its update (advance). No group sees another group's update within a step, so
the result does not depend on activation order.

Key concepts:
    Step: one optimizer step of every group.

    Group seed: each group's optimizer draws its random streams from the
    master seed and the group's unique id, never from a shared stream, so
    adding, removing or reordering groups does not change any other group's
    trajectory.
"""

from collections import OrderedDict

import numpy as np

# mypy
from typing import Dict, List, Optional

from .errors import ConfigError
from .optimizer import Optimizer, StepOutput, apply_update_
from .problems import GroupSpec


class ParameterGroup:
    """One slice of the parameter vector and the optimizer that steps it."""

    def __init__(self, unique_id: int, model, spec: GroupSpec, optimizer: Optimizer) -> None:
        self.unique_id = unique_id
        self.model = model
        self.spec = spec
        self.optimizer = optimizer
        self.output: Optional[StepOutput] = None

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def method(self) -> str:
        return self.optimizer.name

    @property
    def recovered(self) -> int:
        return 0 if self.output is None else self.output.recovered_support_size

    def step(self) -> None:
        """Compute this group's update direction from the model's gradient."""
        self.output = self.optimizer.step(self.model.grad[self.spec.slice])

    def advance(self) -> None:
        """Apply the update computed in step() to the model's parameters."""
        cfg = self.optimizer.cfg
        view = self.model.params[self.spec.slice]
        apply_update_(view, self.output.n, cfg.eta, cfg.weight_decay)


class GroupScheduler:
    """Simultaneous activation of parameter groups, in the order added."""

    def __init__(self, model) -> None:
        self.model = model
        self.steps = 0
        self._groups: Dict[int, ParameterGroup] = OrderedDict()

    def add(self, group: ParameterGroup) -> None:
        if group.unique_id in self._groups:
            raise ConfigError("group {!r} added twice".format(group.unique_id))
        self._groups[group.unique_id] = group

    def step(self) -> None:
        groups = self.groups
        for group in groups:
            group.step()
        for group in groups:
            group.advance()
        self.steps += 1

    def get_group_count(self) -> int:
        return len(self._groups)

    @property
    def groups(self) -> List[ParameterGroup]:
        return list(self._groups.values())

    def state_size(self) -> int:
        """Moment entries stored across all groups."""
        return int(np.sum([group.optimizer.state_size for group in self.groups]))
