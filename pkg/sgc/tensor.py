"""
Tensor Core
===========

Dense linear algebra used by the compression optimizers.

Vectors are one-dimensional float64 numpy arrays and matrices are
two-dimensional, C-contiguous (row-major) float64 arrays. The module adds what
numpy does not give directly:

    Rng: a seeded, portable random stream (PCG64 bit generator, ziggurat
        normal variates) that can be re-derived per parameter group.
    SparseVector: support indices plus values of an s-sparse vector.
    gaussian_matrix: k x d measurement matrices with N(0, 1/k) entries.
    matvec / sparse_matvec: products with dimension checks; the sparse form
        only touches the columns in the support.
    truncated_svd: top-r singular triplets by block power iteration.
    chunk_views: c equal contiguous views of a vector.

"""
from dataclasses import dataclass

import numpy as np

# mypy
from typing import List, Optional, Sequence, Tuple, Union

from .errors import (
    ConvergenceError,
    InvalidChunkingError,
    InvalidDimensionError,
    InvalidRankError,
)

SeedKey = Union[int, Sequence[int]]


class Rng:
    """Seeded random stream.

    Wraps numpy's Generator over the PCG64 bit generator. Normal variates use
    numpy's ziggurat method. A stream is fully determined by the master seed and
    the spawn key, so identical (seed, key) pairs give identical streams on
    every platform.

    """

    def __init__(self, seed: int = 0, key: Tuple[int, ...] = ()) -> None:
        if seed < 0:
            raise InvalidDimensionError("seed must be non-negative, got {}".format(seed))
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def spawn(self, *key: int) -> "Rng":
        """Return an independent stream derived from the same master seed."""
        return Rng(self.seed, self.key + tuple(key))

    def normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self) -> str:
        return "Rng(seed={}, key={})".format(self.seed, self.key)


@dataclass(frozen=True)
class SparseVector:
    """An s-sparse vector of length dim.

    Attributes:
        dim: length of the dense vector.
        support: strictly increasing indices of the nonzero entries.
        values: values at the support indices.

    """

    dim: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        support = np.asarray(self.support, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if support.ndim != 1 or support.shape != values.shape:
            raise InvalidDimensionError(
                "support and values must be 1-D of equal length"
            )
        if support.size:
            if support[0] < 0 or support[-1] >= self.dim:
                raise InvalidDimensionError(
                    "support index out of range for dim {}".format(self.dim)
                )
            if np.any(np.diff(support) <= 0):
                raise InvalidDimensionError("support must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InvalidDimensionError("sparse values must be finite")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def nnz(self) -> int:
        return int(self.support.size)

    @classmethod
    def empty(cls, dim: int) -> "SparseVector":
        return cls(dim, np.zeros(0, dtype=np.int64), np.zeros(0))

    @classmethod
    def from_entries(cls, dim: int, indices, values) -> "SparseVector":
        """Build from unordered entries, sorting by index."""
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        order = np.argsort(indices, kind="stable")
        return cls(dim, indices[order], values[order])

    def densify(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.support] = self.values
        return dense


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Validate and return v as a non-empty 1-D float64 vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise InvalidDimensionError(
            "{} must be 1-D with at least one entry, got shape {}".format(name, v.shape)
        )
    return v


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise InvalidDimensionError(
            "{} must be 2-D and non-empty, got shape {}".format(name, M.shape)
        )
    return M


def gaussian_matrix(k: int, d: int, rng: Rng) -> np.ndarray:
    """Sample a k x d measurement matrix with i.i.d. N(0, 1/k) entries."""
    if k < 1 or d < 1:
        raise InvalidDimensionError(
            "measurement matrix needs k >= 1 and d >= 1, got {}x{}".format(k, d)
        )
    return np.ascontiguousarray(rng.normal((k, d)) / np.sqrt(k))


def matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    if M.ndim != 2 or v.ndim != 1 or M.shape[1] != v.shape[0]:
        raise InvalidDimensionError(
            "cannot multiply {} matrix by length-{} vector".format(M.shape, v.shape[-1])
        )
    return M @ v


def sparse_matvec(M: np.ndarray, x: SparseVector) -> np.ndarray:
    """M @ x.densify(), reading only the columns of M in the support of x."""
    if M.ndim != 2 or M.shape[1] != x.dim:
        raise InvalidDimensionError(
            "cannot multiply {} matrix by length-{} sparse vector".format(M.shape, x.dim)
        )
    if x.nnz == 0:
        return np.zeros(M.shape[0])
    return M[:, x.support] @ x.values


@dataclass(frozen=True)
class SvdResult:
    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray
    iterations: int = 0

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def truncated_svd(
    M: np.ndarray,
    r: int,
    max_iters: int = 200,
    tol: float = 1e-10,
    rng: Optional[Rng] = None,
    oversample: int = 4,
) -> SvdResult:
    """Top-r singular triplets of M by block power (subspace) iteration.

    Each iteration applies M Mᵀ to an orthonormal block, re-orthonormalises it
    with QR and extracts Ritz values from the small projected matrix QᵀM. The
    block carries `oversample` extra columns to speed up separation of the r-th
    singular value. Iteration stops when the change of the top-r singular
    values, relative to the leading one, falls below tol.

    Args:
        M: m x n matrix.
        r: number of triplets, 1 <= r <= min(m, n).
        max_iters: iteration cap.
        tol: change of the top-r singular values at convergence, relative
            to the leading singular value.
        rng: stream for the random starting block (seed 0 if None).
        oversample: extra block columns.

    Raises:
        InvalidRankError: r out of range.
        ConvergenceError: no convergence within max_iters.

    """
    M = as_matrix(M)
    m, n = M.shape
    if not 1 <= r <= min(m, n):
        raise InvalidRankError("rank {} outside [1, {}]".format(r, min(m, n)))
    if rng is None:
        rng = Rng(0)

    block = min(r + oversample, min(m, n))
    Q, _ = np.linalg.qr(rng.normal((m, block)))
    previous = None
    change = np.inf
    for iteration in range(1, max_iters + 1):
        Q, _ = np.linalg.qr(M @ (M.T @ Q))
        small_u, sigma, small_vt = np.linalg.svd(Q.T @ M, full_matrices=False)
        top = sigma[:r]
        if previous is not None:
            # relative to the leading value so numerically zero tails converge
            change = float(np.max(np.abs(top - previous)) / top[0]) if top[0] > 0 else 0.0
            if change <= tol:
                U = Q @ small_u[:, :r]
                return SvdResult(
                    np.ascontiguousarray(U),
                    top.copy(),
                    np.ascontiguousarray(small_vt[:r].T),
                    iteration,
                )
        previous = top
    raise ConvergenceError(max_iters, change)


def chunk_views(v: np.ndarray, c: int) -> List[np.ndarray]:
    """Split v into c contiguous views of equal length d / c."""
    if c < 1 or v.shape[0] % c != 0:
        raise InvalidChunkingError(
            "{} chunks do not divide length {}".format(c, v.shape[0])
        )
    size = v.shape[0] // c
    return [v[i * size : (i + 1) * size] for i in range(c)]


def square_shape(d: int) -> Tuple[int, int]:
    """The most square (m, n) with m * n = d and m <= n."""
    m = int(np.floor(np.sqrt(d)))
    while d % m:
        m -= 1
    return m, d // m
