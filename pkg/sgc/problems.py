"""
Problems
========

Small differentiable objectives with hand-derived gradients, used as the
substrate for training runs.

    quadratic: 1/2 ||w - w*||^2 with a known optimum w*.
    linear-regression: mean squared error of a noisy linear model.
    logistic-regression: logistic loss on linearly separable data, margin
        at least 0.1 with respect to the unit-norm separator.
    mlp2: one tanh hidden layer fitted to the outputs of a random network
        of the same architecture.

Every problem exposes its flat parameter vector as a list of named parameter
groups, each with the matrix shape a low-rank method reads it as.

"""
import logging
from dataclasses import dataclass

import numpy as np

# mypy
from typing import List, Optional, Sequence, Tuple, Union

from .errors import ConfigError, InvalidDimensionError
from .tensor import Rng, as_vector, square_shape

logger = logging.getLogger(__name__)

MARGIN = 0.1
Batch = Optional[Union[slice, Sequence[int], np.ndarray]]


@dataclass(frozen=True)
class GroupSpec:
    """A named contiguous slice of the parameter vector."""

    name: str
    offset: int
    shape: Tuple[int, int]

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


def _feature_scales(d: int, energy_profile: str) -> np.ndarray:
    if energy_profile == "uniform":
        return np.ones(d)
    if energy_profile == "skewed":
        # two decades of decay from the first coordinate to the last
        return 10.0 ** (-2.0 * np.arange(d) / d)
    raise ConfigError("unknown energy profile {!r}".format(energy_profile))


class Problem:
    """Base class for problems.

    Attributes:
        kind: problem name.
        dim: number of parameters.
        groups: parameter groups covering [0, dim).
        X, y: dataset (None for the quadratic).
        rng: the stream the problem was generated from.

    """

    kind = "base"

    def __init__(self, dim: int, rng: Rng, groups: Optional[List[GroupSpec]] = None) -> None:
        self.dim = dim
        self.rng = rng
        self.groups = groups or [GroupSpec("w", 0, square_shape(dim))]
        self.X: Optional[np.ndarray] = None
        self.y: Optional[np.ndarray] = None

    @property
    def n_samples(self) -> int:
        return 0 if self.X is None else self.X.shape[0]

    def initial_params(self) -> np.ndarray:
        return np.zeros(self.dim)

    def _rows(self, batch: Batch) -> Tuple[np.ndarray, np.ndarray]:
        if batch is None:
            return self.X, self.y
        return self.X[batch], self.y[batch]

    def _check(self, w) -> np.ndarray:
        w = as_vector(w, "parameters")
        if w.shape[0] != self.dim:
            raise InvalidDimensionError(
                "{} expects {} parameters, got {}".format(self.kind, self.dim, w.shape[0])
            )
        return w

    def loss_and_grad(self, w, batch: Batch = None) -> Tuple[float, np.ndarray]:
        raise NotImplementedError

    def loss(self, w, batch: Batch = None) -> float:
        return self.loss_and_grad(w, batch)[0]

    def accuracy(self, w) -> Optional[float]:
        return None


class Quadratic(Problem):
    kind = "quadratic"

    def __init__(self, shape: Tuple[int, int], rng: Rng) -> None:
        dim = shape[0] * shape[1]
        super().__init__(dim, rng, [GroupSpec("w", 0, tuple(shape))])
        self.optimum = rng.normal(dim)

    def loss_and_grad(self, w, batch=None):
        diff = self._check(w) - self.optimum
        return 0.5 * float(diff @ diff), diff


class LinearRegression(Problem):
    kind = "linear-regression"

    def __init__(self, dim: int, n_samples: int, rng: Rng, l2: float = 0.0,
                 energy_profile: str = "uniform", noise: float = 0.01) -> None:
        super().__init__(dim, rng)
        self.l2 = l2
        self.X = rng.normal((n_samples, dim)) * _feature_scales(dim, energy_profile)
        self.coef = rng.normal(dim)
        self.y = self.X @ self.coef + noise * rng.normal(n_samples)

    def loss_and_grad(self, w, batch=None):
        w = self._check(w)
        X, y = self._rows(batch)
        residual = X @ w - y
        n = X.shape[0]
        loss = 0.5 * float(residual @ residual) / n + 0.5 * self.l2 * float(w @ w)
        grad = X.T @ residual / n + self.l2 * w
        return loss, grad


class LogisticRegression(Problem):
    kind = "logistic-regression"

    def __init__(self, dim: int, n_samples: int, rng: Rng, l2: float = 0.0,
                 energy_profile: str = "uniform") -> None:
        super().__init__(dim, rng)
        self.l2 = l2
        separator = rng.normal(dim)
        separator /= np.linalg.norm(separator)
        X = rng.normal((n_samples, dim)) * _feature_scales(dim, energy_profile)
        margins = X @ separator
        labels = np.where(margins >= 0, 1.0, -1.0)
        # push samples inside the margin band out to exactly the margin
        close = np.abs(margins) < MARGIN
        X[close] += np.outer(labels[close] * MARGIN - margins[close], separator)
        self.separator = separator
        self.X = X
        self.y = labels

    def loss_and_grad(self, w, batch=None):
        w = self._check(w)
        X, y = self._rows(batch)
        z = y * (X @ w)
        n = X.shape[0]
        loss = float(np.mean(np.logaddexp(0.0, -z))) + 0.5 * self.l2 * float(w @ w)
        weights = np.exp(-np.logaddexp(0.0, z))  # sigmoid(-z)
        grad = -X.T @ (y * weights) / n + self.l2 * w
        return loss, grad

    def accuracy(self, w):
        w = self._check(w)
        predictions = np.where(self.X @ w >= 0, 1.0, -1.0)
        return float(np.mean(predictions == self.y))


class MLP2(Problem):
    """Regression with one tanh hidden layer.

    Parameters are laid out as W1 (hidden x inputs), b1 (hidden), w2 (hidden),
    b2 (1).

    """

    kind = "mlp2"

    def __init__(self, inputs: int, hidden: int, n_samples: int, rng: Rng) -> None:
        self.inputs = inputs
        self.hidden = hidden
        groups = [
            GroupSpec("W1", 0, (hidden, inputs)),
            GroupSpec("b1", hidden * inputs, square_shape(hidden)),
            GroupSpec("w2", hidden * inputs + hidden, square_shape(hidden)),
            GroupSpec("b2", hidden * inputs + 2 * hidden, (1, 1)),
        ]
        super().__init__(hidden * inputs + 2 * hidden + 1, rng, groups)
        self.X = rng.normal((n_samples, inputs))
        target = self._init(rng.spawn(1), scale=1.0)
        self.y = self._forward(target, self.X)[0]

    def _unpack(self, w):
        h, p = self.hidden, self.inputs
        W1 = w[: h * p].reshape(h, p)
        b1 = w[h * p : h * p + h]
        w2 = w[h * p + h : h * p + 2 * h]
        b2 = w[-1]
        return W1, b1, w2, b2

    def _init(self, rng: Rng, scale: float) -> np.ndarray:
        w = np.zeros(self.dim)
        h, p = self.hidden, self.inputs
        w[: h * p] = scale * rng.normal(h * p) / np.sqrt(p)
        w[h * p + h : h * p + 2 * h] = scale * rng.normal(h) / np.sqrt(h)
        return w

    def _forward(self, w, X):
        W1, b1, w2, b2 = self._unpack(w)
        H = np.tanh(X @ W1.T + b1)
        return H @ w2 + b2, H

    def initial_params(self):
        return self._init(self.rng.spawn(2), scale=0.1)

    def loss_and_grad(self, w, batch=None):
        w = self._check(w)
        X, y = self._rows(batch)
        n = X.shape[0]
        out, H = self._forward(w, X)
        error = out - y
        loss = 0.5 * float(error @ error) / n
        _, _, w2, _ = self._unpack(w)
        dZ = np.outer(error, w2) * (1.0 - H * H) / n
        grad = np.concatenate(
            [(dZ.T @ X).ravel(), dZ.sum(axis=0), H.T @ error / n, [error.sum() / n]]
        )
        return loss, grad


KINDS = ("quadratic", "linear-regression", "logistic-regression", "mlp2")


def make_problem(kind: str, dims: Union[int, Sequence[int]], n_samples: int = 200,
                 seed: int = 0, hidden: int = 8, l2: float = 0.0,
                 energy_profile: str = "uniform") -> Problem:
    """Build a deterministic synthetic problem.

    Args:
        kind: one of KINDS.
        dims: parameter count; for the quadratic an (m, n) pair is also
            accepted, for mlp2 it is the input dimension.
        n_samples: dataset size (ignored by the quadratic).
        seed: master seed.
        hidden: mlp2 hidden width.
        l2: ridge penalty for the regression problems.
        energy_profile: "uniform" or "skewed" feature scales.

    """
    if isinstance(dims, (tuple, list)):
        if len(dims) != 2 or kind != "quadratic":
            raise ConfigError("matrix dims are only supported by the quadratic")
        shape = (int(dims[0]), int(dims[1]))
    else:
        shape = square_shape(int(dims)) if int(dims) >= 1 else (0, 0)
    if shape[0] < 1 or shape[1] < 1 or n_samples < 1:
        raise InvalidDimensionError("dims and n_samples must be >= 1")
    dim = shape[0] * shape[1]
    rng = Rng(seed, (0xDA7A,))

    if kind == "quadratic":
        problem = Quadratic(shape, rng)
    elif kind == "linear-regression":
        problem = LinearRegression(dim, n_samples, rng, l2, energy_profile)
    elif kind == "logistic-regression":
        problem = LogisticRegression(dim, n_samples, rng, l2, energy_profile)
    elif kind == "mlp2":
        if hidden < 1:
            raise InvalidDimensionError("hidden width must be >= 1")
        problem = MLP2(dim, hidden, n_samples, rng)
    else:
        raise ConfigError("unknown problem kind {!r}; choose from {}".format(kind, KINDS))
    logger.debug("built %s problem with %d parameters", kind, problem.dim)
    return problem


def gradient_check(problem: Problem, w, h_scale: float = 1e-5) -> float:
    """Relative error of the analytic gradient against central differences.

    Uses steps h_i = h_scale * (1 + |w_i|) and returns
    ||g_fd - g|| / max(||g||, 1e-12).

    """
    w = problem._check(w).copy()
    _, grad = problem.loss_and_grad(w)
    approx = np.zeros_like(w)
    for i in range(w.shape[0]):
        h = h_scale * (1.0 + abs(w[i]))
        saved = w[i]
        w[i] = saved + h
        plus = problem.loss(w)
        w[i] = saved - h
        minus = problem.loss(w)
        w[i] = saved
        approx[i] = (plus - minus) / (2.0 * h)
    return float(np.linalg.norm(approx - grad) / max(np.linalg.norm(grad), 1e-12))
