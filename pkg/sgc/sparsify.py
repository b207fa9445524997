"""
Sparsification
==============

Magnitude top-s sparsification, its chunk-based form, and the worst-case
bound on the error chunking introduces.

Ties between equal magnitudes are broken by the lowest index (within a chunk
for the chunked form). Exact zeros are pruned from the emitted support, so a
result may hold fewer than s entries; recovery budgets are computed from the
requested sparsity, never from the pruned count.

"""
import numpy as np

from .errors import InvalidChunkingError, InvalidSparsityError
from .tensor import SparseVector, as_vector, chunk_views

__all__ = [
    "SparseVector",
    "sparsify_top_s",
    "square_support",
    "chunked_sparsify",
    "chunking_error_bound",
    "chunking_error",
]


def _top_indices(v: np.ndarray, s: int) -> np.ndarray:
    # stable sort on -|v| keeps the lowest index first among equal magnitudes
    order = np.argsort(-np.abs(v), kind="stable")[:s]
    order.sort()
    return order[v[order] != 0]


def sparsify_top_s(v, s: int) -> SparseVector:
    """Keep the s largest-magnitude entries of v."""
    v = as_vector(v)
    if not 1 <= s <= v.shape[0]:
        raise InvalidSparsityError("s={} outside [1, {}]".format(s, v.shape[0]))
    support = _top_indices(v, s)
    return SparseVector(v.shape[0], support, v[support])


def square_support(g: SparseVector) -> SparseVector:
    """Element-wise square on the same support."""
    return SparseVector(g.dim, g.support, g.values ** 2)


def chunked_sparsify(v, c: int, s_c: int) -> SparseVector:
    """Apply an s_c-sparsification to each of c equal chunks of v."""
    v = as_vector(v)
    if c < 1 or v.shape[0] % c:
        raise InvalidChunkingError("{} chunks do not divide length {}".format(c, v.shape[0]))
    size = v.shape[0] // c
    if not 1 <= s_c <= size:
        raise InvalidChunkingError("s_c={} outside [1, {}]".format(s_c, size))

    supports = [
        offset * size + _top_indices(chunk, s_c)
        for offset, chunk in enumerate(chunk_views(v, c))
    ]
    support = np.concatenate(supports)
    return SparseVector(v.shape[0], support, v[support])


def chunking_error_bound(d: int, s: int, g_max: float) -> float:
    """Worst-case bound 2 (1 - s/d) g_max on the expected chunking error."""
    if not 1 <= s <= d:
        raise InvalidSparsityError("s={} outside [1, {}]".format(s, d))
    return 2.0 * (1.0 - s / d) * g_max


def chunking_error(v, c: int, s_c: int) -> float:
    """Squared distance between chunked and global sparsification of v."""
    v = as_vector(v)
    chunked = chunked_sparsify(v, c, s_c).densify()
    global_ = sparsify_top_s(v, c * s_c).densify()
    return float(np.sum((chunked - global_) ** 2))
