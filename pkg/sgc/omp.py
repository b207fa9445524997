"""
Orthogonal Matching Pursuit
===========================

Sparse recovery of x from y = A x.

omp_naive: the textbook form. Each iteration picks the column most correlated
    with the residual (correlations normalised by column norm), then re-solves
    least squares on every selected column. Kept as the correctness oracle.
omp_cholesky: the inverse Cholesky factorisation form. It maintains the
    correlations p = Aᵀr, the factor F with (A_Λ F)ᵀ(A_Λ F) = I and the
    matrix B = G_{:,Λ} F, so each iteration costs one Gram column instead of a
    fresh least-squares solve.
joint_recover: recovers two measurement vectors that share a support. The
    support comes from one OMP run on the first vector; the second is fitted
    by least squares on the same columns.

Already-selected columns are never selected again. Both variants stop early
when the residual norm drops to tol, which defaults to 1e-10 * ||y||.

"""
import logging
from dataclasses import dataclass, field

import numpy as np

# mypy
from typing import Optional, Tuple

from .errors import (
    CholeskyBreakdownError,
    DegenerateMatrixError,
    DegenerateSupportError,
    InvalidDimensionError,
    InvalidSparsityError,
)
from .tensor import Rng, SparseVector, as_matrix, as_vector, gaussian_matrix

logger = logging.getLogger(__name__)

DEFAULT_RELATIVE_TOL = 1e-10
DEFAULT_GRAM_BUDGET = 2 ** 24


@dataclass(frozen=True)
class RecoveryResult:
    """Outcome of one recovery.

    Attributes:
        estimate: the recovered sparse vector.
        support: selected indices in selection order.
        residual_norm: ||y - A estimate||.
        iterations: number of selections made.
        residual_history: residual norm before each selection and at the end.

    """

    estimate: SparseVector
    support: np.ndarray
    residual_norm: float
    iterations: int
    residual_history: Tuple[float, ...] = field(default=())


class GramCache:
    """Gram matrix AᵀA of a measurement matrix and its column norms.

    With precompute=False the Gram columns are computed from A when asked for,
    trading runtime for the d x d storage. Read-only after construction.

    """

    def __init__(self, A: np.ndarray, precompute: Optional[bool] = None,
                 budget: int = DEFAULT_GRAM_BUDGET) -> None:
        self.A = as_matrix(A, "measurement matrix")
        d = self.A.shape[1]
        if precompute is None:
            precompute = d * d <= budget
        self.gram = self.A.T @ self.A if precompute else None
        if self.gram is not None:
            self.gram = (self.gram + self.gram.T) / 2.0
            self.column_norms = np.sqrt(np.diag(self.gram))
        else:
            self.column_norms = np.sqrt(np.einsum("ij,ij->j", self.A, self.A))

    @property
    def precomputed(self) -> bool:
        return self.gram is not None

    def column(self, i: int) -> np.ndarray:
        if self.gram is not None:
            return self.gram[:, i]
        return self.A.T @ self.A[:, i]

    def diagonal(self, i: int) -> float:
        if self.gram is not None:
            return float(self.gram[i, i])
        return float(self.column_norms[i] ** 2)


def _check(A: np.ndarray, y: np.ndarray, s: int) -> Tuple[np.ndarray, np.ndarray]:
    A = as_matrix(A, "measurement matrix")
    y = as_vector(y, "measurements")
    k, d = A.shape
    if y.shape[0] != k:
        raise InvalidDimensionError(
            "measurement vector length {} does not match {} matrix rows".format(y.shape[0], k)
        )
    if not 0 <= s <= min(k, d):
        raise InvalidSparsityError("s={} outside [0, {}]".format(s, min(k, d)))
    return A, y


def _resolve_tol(y: np.ndarray, tol: Optional[float]) -> float:
    if tol is None:
        return DEFAULT_RELATIVE_TOL * float(np.linalg.norm(y))
    return float(tol)


def _select(scores: np.ndarray, selected: np.ndarray, norms: np.ndarray) -> int:
    scores = scores.copy()
    scores[selected] = -np.inf
    index = int(np.argmax(scores))
    if norms[index] == 0:
        raise DegenerateMatrixError(index)
    return index


def _scores(correlations: np.ndarray, norms: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.abs(correlations) / norms
    scores[norms == 0] = 0.0
    return scores


def _result(A, y, dim, order, coefficients, history) -> RecoveryResult:
    order = np.asarray(order, dtype=np.int64)
    coefficients = np.asarray(coefficients, dtype=np.float64)
    residual = y - A[:, order] @ coefficients if order.size else y
    residual_norm = float(np.linalg.norm(residual))
    estimate = SparseVector.from_entries(dim, order, coefficients)
    return RecoveryResult(
        estimate, order, residual_norm, int(order.size), tuple(history) + (residual_norm,)
    )


def omp_naive(A, y, s: int, tol: Optional[float] = None) -> RecoveryResult:
    """Reference OMP: least squares on the selected columns every iteration."""
    A, y = _check(A, y, s)
    tol = _resolve_tol(y, tol)
    norms = np.linalg.norm(A, axis=0)

    order = []
    coefficients = np.zeros(0)
    residual = y.copy()
    history = []
    for _ in range(s):
        residual_norm = float(np.linalg.norm(residual))
        if residual_norm <= tol:
            break
        history.append(residual_norm)
        index = _select(_scores(A.T @ residual, norms), np.array(order, dtype=np.int64), norms)
        order.append(index)
        columns = A[:, order]
        coefficients, _, rank, _ = np.linalg.lstsq(columns, y, rcond=None)
        if rank < len(order):
            raise DegenerateSupportError(order)
        residual = y - columns @ coefficients
    return _result(A, y, A.shape[1], order, coefficients, history)


def _omp_cholesky(A, gram: GramCache, y, s: int, tol: float):
    """Inverse Cholesky OMP; also returns the final factor F."""
    k, d = A.shape
    p = A.T @ y
    norms = gram.column_norms
    F = np.zeros((s, s))
    B = np.zeros((d, s))
    a = np.zeros(s)
    order = []
    history = []

    n = 0
    while n < s:
        if n:
            estimate = F[:n, :n] @ a[:n]
            residual_norm = float(np.linalg.norm(y - A[:, order] @ estimate))
        else:
            residual_norm = float(np.linalg.norm(y))
        if residual_norm <= tol:
            break
        history.append(residual_norm)

        index = _select(_scores(p, norms), np.array(order, dtype=np.int64), norms)
        c = B[index, :n].copy()
        g = gram.diagonal(index)
        pivot = g - float(c @ c)
        if pivot <= np.finfo(float).eps * g:
            raise CholeskyBreakdownError(n + 1, pivot)
        gamma = 1.0 / np.sqrt(pivot)

        a[n] = gamma * p[index]
        B[:, n] = gamma * (gram.column(index) - B[:, :n] @ c)
        F[:n, n] = -gamma * (F[:n, :n] @ c)
        F[n, n] = gamma
        p = p - B[:, n] * a[n]
        order.append(index)
        n += 1

    F = F[:n, :n]
    return order, F @ a[:n], F, history


def omp_cholesky(A, gram: Optional[GramCache], y, s: int,
                 tol: Optional[float] = None) -> RecoveryResult:
    """OMP by inverse Cholesky factorisation.

    Args:
        A: k x d measurement matrix.
        gram: Gram cache built from the same A (built on the fly if None).
        y: length-k measurements.
        s: maximum number of selections.
        tol: early-stop residual norm; None means 1e-10 * ||y||.

    Raises:
        CholeskyBreakdownError: the pivot g_λλ - cᵀc is not positive.

    """
    A, y = _check(A, y, s)
    if gram is None:
        gram = GramCache(A)
    order, coefficients, _, history = _omp_cholesky(A, gram, y, s, _resolve_tol(y, tol))
    return _result(A, y, A.shape[1], order, coefficients, history)


def joint_recover(A, gram: Optional[GramCache], m, v, s: int,
                  tol: Optional[float] = None) -> Tuple[RecoveryResult, RecoveryResult]:
    """Recover m by OMP and v by least squares on the support found for m."""
    A, m = _check(A, m, s)
    _, v = _check(A, v, s)
    if gram is None:
        gram = GramCache(A)
    order, coefficients, F, history = _omp_cholesky(A, gram, m, s, _resolve_tol(m, tol))
    first = _result(A, m, A.shape[1], order, coefficients, history)
    if np.array_equal(m, v):
        return first, first

    if order:
        # F Fᵀ is the inverse of the Gram block of the selected columns
        v_coefficients = F @ (F.T @ (A[:, order].T @ v))
        if not np.all(np.isfinite(v_coefficients)):
            raise DegenerateSupportError(order)
    else:
        v_coefficients = np.zeros(0)
    second = _result(A, v, A.shape[1], order, v_coefficients, ())
    return first, second


def sparse_instance(d: int, s: int, k: int, rng) -> Tuple[np.ndarray, SparseVector, np.ndarray]:
    """A Gaussian k x d matrix, an s-sparse x with normal values, and y = A x."""
    A = gaussian_matrix(k, d, rng)
    support = np.sort(rng.permutation(d)[:s])
    x = SparseVector(d, support, rng.normal(s))
    return A, x, A[:, x.support] @ x.values


def exact_recovery(result: RecoveryResult, x: SparseVector, atol: float = 1e-6) -> bool:
    """Whether result found exactly the support of x and its values within atol."""
    if not np.array_equal(result.estimate.support, x.support):
        return False
    return bool(np.max(np.abs(result.estimate.values - x.values), initial=0.0) <= atol)


def recovery_success_rate(d: int, s: int, kappa: int, trials: int, seed: int = 0,
                          variant: str = "cholesky") -> float:
    """Fraction of trials in which OMP recovers a random s-sparse vector exactly
    from kappa * s Gaussian measurements."""
    successes = 0
    for trial in range(trials):
        rng = Rng(seed, (d, s, kappa, trial))
        A, x, y = sparse_instance(d, s, kappa * s, rng)
        if variant == "cholesky":
            result = omp_cholesky(A, GramCache(A, precompute=False), y, s)
        else:
            result = omp_naive(A, y, s)
        successes += exact_recovery(result, x)
    return successes / trials


def recover(A, y, s: int, tol: Optional[float] = None,
            variant: str = "cholesky") -> RecoveryResult:
    if variant == "naive":
        return omp_naive(A, y, s, tol)
    if variant == "cholesky":
        return omp_cholesky(A, None, y, s, tol)
    raise ValueError("unknown OMP variant {!r}".format(variant))
