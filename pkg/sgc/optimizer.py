"""
Compression Optimizers
======================

AdamW and its sparse-gradient-compression variants.

Every optimizer keeps its first and second moments in an SgcState and
returns the update direction N_t of one step in a StepOutput; weights are
moved separately by apply_update, W <- W - eta * N.

adamw_step: baseline AdamW, moments of length d.
sgc_step: the gradient is top-s sparsified, projected by a Gaussian k x d
    matrix A (k = kappa * s), the compressed moments are updated and the
    bias-corrected moments are recovered by OMP on a shared support. A
    recovered entry with a non-positive second moment, or with |m̂| above
    RATIO_SLACK * moment_ratio_bound * sqrt(v̂), gets no update.
mesgc_step: the gradient is split into c equal chunks, each s_c-sparsified
    and projected by the same (kappa * s_c) x (d / c) matrix. Moments have
    length kappa * c * s_c whatever d is.
cesgc_step: a matrix gradient is first reduced by B (the top-r left singular
    vectors of the gradient, refreshed every svd_refresh_T steps), then
    stepped by mesgc_step in the reduced space and mapped back with Bᵀ.
sgca_resample: every resample_T steps a fresh A' is drawn and the compressed
    moments are re-aligned to it, M <- A' OMP_A(M), V <- A' OMP_A(V).

The optimizer classes wrap the step functions behind a common step(grad)
interface so a scheduler can drive one optimizer per parameter group.

"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

# mypy
from typing import Any, Dict, Optional, Tuple

from .errors import (
    ConfigError,
    InvalidChunkingError,
    InvalidDimensionError,
    InvalidGradientError,
    InvalidRankError,
)
from .omp import DEFAULT_GRAM_BUDGET, GramCache, joint_recover
from .sparsify import chunked_sparsify, sparsify_top_s
from .tensor import Rng, as_matrix, as_vector, gaussian_matrix, square_shape, truncated_svd

logger = logging.getLogger(__name__)

PROJECTIONS = ("gaussian", "identity")

# Headroom over moment_ratio_bound before a recovered entry is discarded.
RATIO_SLACK = 2.0


@dataclass(frozen=True)
class SgcConfig:
    """Hyper-parameters shared by every optimizer.

    Attributes:
        beta1, beta2: moment decay rates in [0, 1).
        epsilon: denominator offset.
        alpha: scaling factor of the SGC update direction.
        eta: learning rate.
        s_c: sparsity per chunk.
        c: number of chunks.
        kappa: measurements per unit of sparsity.
        rank_r: rank of the CESGC pre-projection.
        svd_refresh_T: steps between CESGC SVD refreshes.
        resample_T: steps between projection resamples (0 disables).
        seed: master seed.
        weight_decay: decoupled weight decay applied by apply_update.
        recovery_budget_multiplier: OMP budget per chunk is s_c times this.
        omp_tol: OMP early-stop residual; None means 1e-10 * ||y||.
        gram_budget: largest Gram matrix (in entries) kept in memory.
        projection: "gaussian", or "identity" for the lossless limit.
        svd_max_iters, svd_tol: truncated SVD iteration controls.

    """

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    alpha: float = 1.0
    eta: float = 1e-3
    s_c: int = 1
    c: int = 1
    kappa: int = 8
    rank_r: int = 1
    svd_refresh_T: int = 200
    resample_T: int = 0
    seed: int = 0
    weight_decay: float = 0.0
    recovery_budget_multiplier: float = 1.0
    omp_tol: Optional[float] = None
    gram_budget: int = DEFAULT_GRAM_BUDGET
    projection: str = "gaussian"
    svd_max_iters: int = 200
    svd_tol: float = 1e-10

    def __post_init__(self) -> None:
        checks = {
            "beta1": 0 <= self.beta1 < 1,
            "beta2": 0 <= self.beta2 < 1,
            "epsilon": self.epsilon > 0,
            "alpha": self.alpha > 0,
            "eta": self.eta > 0,
            "s_c": self.s_c >= 1,
            "c": self.c >= 1,
            "kappa": self.kappa >= 1,
            "rank_r": self.rank_r >= 1,
            "svd_refresh_T": self.svd_refresh_T >= 1,
            "resample_T": self.resample_T >= 0,
            "seed": self.seed >= 0,
            "weight_decay": self.weight_decay >= 0,
            "recovery_budget_multiplier": self.recovery_budget_multiplier > 0,
            "omp_tol": self.omp_tol is None or self.omp_tol >= 0,
            "gram_budget": self.gram_budget >= 0,
            "projection": self.projection in PROJECTIONS,
            "svd_max_iters": self.svd_max_iters >= 1,
            "svd_tol": self.svd_tol > 0,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise ConfigError("out-of-range optimizer fields {}".format(bad))

    @property
    def k_chunk(self) -> int:
        """Measurements per chunk, kappa * s_c."""
        return self.kappa * self.s_c

    @property
    def k(self) -> int:
        """Length of each compressed moment, kappa * c * s_c."""
        return self.kappa * self.c * self.s_c

    @property
    def s(self) -> int:
        return self.c * self.s_c

    @property
    def recovery_budget(self) -> int:
        return max(1, int(round(self.s_c * self.recovery_budget_multiplier)))

    def chunk_length(self, d: int) -> int:
        """Validate that d can be compressed with this config; return d / c."""
        if d % self.c:
            raise InvalidChunkingError("{} chunks do not divide length {}".format(self.c, d))
        size = d // self.c
        if self.k_chunk > size:
            raise ConfigError(
                "kappa * s_c = {} exceeds chunk length {}".format(self.k_chunk, size)
            )
        if self.projection == "identity" and self.k_chunk != size:
            raise ConfigError(
                "identity projection needs kappa * s_c = chunk length {}".format(size)
            )
        return size

    def replace(self, **changes: Any) -> "SgcConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "SgcConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise ConfigError("unknown optimizer keys {}".format(unknown))
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class SgcState:
    """Mutable optimizer state of one parameter group.

    Attributes:
        m, v: first and second moments (compressed for the SGC family).
        step_t: steps taken.
        A: shared chunk measurement matrix (SGC family only).
        B: CESGC pre-projection, r x m.
        rng: stream for SVD starting blocks.
        group_id: parameter group the state belongs to.
        resample_count: projection resamples so far; with the seed and group
            id it determines A.
        gram: Gram cache of A.

    """

    m: np.ndarray
    v: np.ndarray
    step_t: int = 0
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    rng: Rng = field(default_factory=Rng)
    group_id: int = 0
    resample_count: int = 0
    gram: Optional[GramCache] = field(default=None, repr=False)


@dataclass(frozen=True)
class StepOutput:
    n: np.ndarray
    recovered_support_size: int = 0
    residual_norms: Tuple[float, float] = (0.0, 0.0)


def projection_matrix(cfg: SgcConfig, rows: int, cols: int, group_id: int = 0,
                      resample_count: int = 0) -> np.ndarray:
    """The chunk measurement matrix for (seed, group, resample count)."""
    if cfg.projection == "identity":
        if rows != cols:
            raise InvalidDimensionError("identity projection must be square")
        return np.eye(rows)
    return gaussian_matrix(rows, cols, Rng(cfg.seed, (group_id, resample_count)))


def adamw_state(d: int, cfg: SgcConfig, group_id: int = 0) -> SgcState:
    if d < 1:
        raise InvalidDimensionError("parameter dimension must be positive")
    return SgcState(np.zeros(d), np.zeros(d), rng=Rng(cfg.seed, (group_id,)), group_id=group_id)


def sgc_state(d: int, cfg: SgcConfig, group_id: int = 0) -> SgcState:
    """Zero compressed moments and the shared chunk matrix for a length-d group."""
    size = cfg.chunk_length(d)
    A = projection_matrix(cfg, cfg.k_chunk, size, group_id, 0)
    return SgcState(
        np.zeros(cfg.k),
        np.zeros(cfg.k),
        A=A,
        rng=Rng(cfg.seed, (group_id,)),
        group_id=group_id,
        gram=GramCache(A, budget=cfg.gram_budget),
    )


def cesgc_state(shape: Tuple[int, int], cfg: SgcConfig, group_id: int = 0) -> SgcState:
    m, n = shape
    if not 1 <= cfg.rank_r <= m:
        raise InvalidRankError("rank {} outside [1, {}]".format(cfg.rank_r, m))
    return sgc_state(cfg.rank_r * n, cfg, group_id)


def _check_gradient(g, length: int) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] != length:
        raise InvalidDimensionError(
            "gradient shape {} does not match state dimension {}".format(g.shape, length)
        )
    if not np.all(np.isfinite(g)):
        raise InvalidGradientError(np.flatnonzero(~np.isfinite(g))[:8].tolist())
    return g


def adamw_step(g, state: SgcState, cfg: SgcConfig) -> StepOutput:
    """One AdamW step; state is updated in place."""
    g = _check_gradient(g, state.m.shape[0])
    state.step_t += 1
    t = state.step_t
    state.m *= cfg.beta1
    state.m += (1 - cfg.beta1) * g
    state.v *= cfg.beta2
    state.v += (1 - cfg.beta2) * g * g
    m_hat = state.m / (1 - cfg.beta1 ** t)
    v_hat = state.v / (1 - cfg.beta2 ** t)
    n = m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return StepOutput(n, int(np.count_nonzero(n)))


def _chunk_support(support: np.ndarray, values: np.ndarray, size: int, index: int):
    lo = np.searchsorted(support, index * size)
    hi = np.searchsorted(support, (index + 1) * size)
    return support[lo:hi] - index * size, values[lo:hi]


def moment_ratio_bound(cfg: SgcConfig, t: int) -> float:
    """Largest |m̂| / sqrt(v̂) any gradient sequence can give after t steps.

    m̂ and v̂ are weighted sums of the same gradients, so by Cauchy-Schwarz
    m̂² <= v̂ * sum(a_i² / b_i) with a_i, b_i the bias-corrected weights.
    The bound is 1 at t = 1 and infinite when beta2 = 0.

    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if cfg.beta2 == 0:
        return math.inf
    ratio = cfg.beta1 ** 2 / cfg.beta2
    with np.errstate(over="ignore"):
        if ratio == 1:
            series = float(t)
        else:
            series = float((1 - np.power(ratio, t)) / (1 - ratio))
    scale = (1 - cfg.beta1) ** 2 * (1 - cfg.beta2 ** t)
    scale /= (1 - cfg.beta1 ** t) ** 2 * (1 - cfg.beta2)
    return math.sqrt(scale * series)


def _compressed_step(g, state: SgcState, cfg: SgcConfig) -> StepOutput:
    d = g.shape[0]
    size = cfg.chunk_length(d)
    kc = cfg.k_chunk
    if state.m.shape[0] != cfg.k or state.A is None or state.A.shape != (kc, size):
        raise InvalidDimensionError(
            "state holds {} moments and A {}, expected {} and {}".format(
                state.m.shape[0], None if state.A is None else state.A.shape, cfg.k, (kc, size)
            )
        )
    if state.gram is None:
        state.gram = GramCache(state.A, budget=cfg.gram_budget)

    if cfg.c == 1:
        sparse = sparsify_top_s(g, cfg.s_c)
    else:
        sparse = chunked_sparsify(g, cfg.c, cfg.s_c)

    p = np.zeros(cfg.k)
    q = np.zeros(cfg.k)
    for i in range(cfg.c):
        support, values = _chunk_support(sparse.support, sparse.values, size, i)
        if support.size:
            columns = state.A[:, support]
            p[i * kc : (i + 1) * kc] = columns @ values
            q[i * kc : (i + 1) * kc] = columns @ (values * values)

    state.step_t += 1
    t = state.step_t
    state.m *= cfg.beta1
    state.m += (1 - cfg.beta1) * p
    state.v *= cfg.beta2
    state.v += (1 - cfg.beta2) * q
    m_hat = state.m / (1 - cfg.beta1 ** t)
    v_hat = state.v / (1 - cfg.beta2 ** t)

    budget = min(cfg.recovery_budget, kc)
    limit = RATIO_SLACK * moment_ratio_bound(cfg, t)
    n = np.zeros(d)
    recovered = 0
    dropped = 0
    residual_m = 0.0
    residual_v = 0.0
    for i in range(cfg.c):
        chunk = slice(i * kc, (i + 1) * kc)
        first, second = joint_recover(
            state.A, state.gram, m_hat[chunk], v_hat[chunk], budget, cfg.omp_tol
        )
        support = first.estimate.support
        x_m = first.estimate.values
        root = np.sqrt(np.maximum(second.estimate.values, 0.0))
        # entries whose recovered moments no gradient history could produce
        # are recovery error and move nothing
        consistent = (root > 0) & (np.abs(x_m) <= limit * root)
        n[i * size + support] = np.where(
            consistent, cfg.alpha * x_m / (root + cfg.epsilon), 0.0
        )
        recovered += first.iterations
        dropped += int(np.count_nonzero(~consistent & (x_m != 0)))
        residual_m += first.residual_norm ** 2
        residual_v += second.residual_norm ** 2

    if not np.all(np.isfinite(n)):
        raise InvalidGradientError("non-finite update direction at step {}".format(t))
    logger.debug(
        "step %d: group %d recovered %d entries, dropped %d (residuals %.3e, %.3e)",
        t, state.group_id, recovered, dropped, math.sqrt(residual_m), math.sqrt(residual_v),
    )
    output = StepOutput(n, recovered, (math.sqrt(residual_m), math.sqrt(residual_v)))

    if cfg.resample_T > 0 and t % cfg.resample_T == 0:
        sgca_resample(state, cfg)
    return output


def sgc_step(g, state: SgcState, cfg: SgcConfig) -> StepOutput:
    """One SGC step on an unchunked gradient (c = 1)."""
    if cfg.c != 1:
        raise ConfigError("sgc_step needs c = 1, got c = {}".format(cfg.c))
    g = _check_gradient(g, as_vector(g, "gradient").shape[0])
    return _compressed_step(g, state, cfg)


def mesgc_step(g, state: SgcState, cfg: SgcConfig) -> StepOutput:
    """One memory-efficient SGC step: c chunks sharing one measurement matrix."""
    g = _check_gradient(g, as_vector(g, "gradient").shape[0])
    return _compressed_step(g, state, cfg)


def cesgc_step(g_matrix, state: SgcState, cfg: SgcConfig) -> StepOutput:
    """One compute-efficient SGC step on an m x n gradient.

    B is recomputed at the first step and then every svd_refresh_T steps, as
    the transpose of the first rank_r left singular vectors of the gradient.
    The reduced gradient B G (r x n) is stepped by mesgc_step and the result
    is mapped back with Bᵀ.

    """
    G = as_matrix(g_matrix, "gradient")
    rows, cols = G.shape
    if not 1 <= cfg.rank_r <= rows:
        raise InvalidRankError("rank {} outside [1, {}]".format(cfg.rank_r, rows))
    if not np.all(np.isfinite(G)):
        raise InvalidGradientError("non-finite matrix gradient")

    t = state.step_t + 1
    if state.B is None or (t - 1) % cfg.svd_refresh_T == 0:
        svd = truncated_svd(
            G, cfg.rank_r, cfg.svd_max_iters, cfg.svd_tol, rng=state.rng.spawn(t)
        )
        state.B = np.ascontiguousarray(svd.left_vectors.T)
        logger.info("step %d: refreshed projection B for group %d", t, state.group_id)
    elif state.B.shape != (cfg.rank_r, rows):
        raise InvalidDimensionError(
            "projection B is {}, gradient has {} rows".format(state.B.shape, rows)
        )

    reduced = mesgc_step((state.B @ G).ravel(), state, cfg)
    n = state.B.T @ reduced.n.reshape(cfg.rank_r, cols)
    return StepOutput(n.ravel(), reduced.recovered_support_size, reduced.residual_norms)


def sgca_resample(state: SgcState, cfg: SgcConfig) -> SgcState:
    """Draw a fresh measurement matrix and re-align the compressed moments."""
    kc = cfg.k_chunk
    rows, size = state.A.shape
    count = state.resample_count + 1
    A_new = projection_matrix(cfg, rows, size, state.group_id, count)
    budget = min(cfg.recovery_budget, kc)
    for i in range(cfg.c):
        chunk = slice(i * kc, (i + 1) * kc)
        first, second = joint_recover(
            state.A, state.gram, state.m[chunk], state.v[chunk], budget, cfg.omp_tol
        )
        state.m[chunk] = A_new @ first.estimate.densify()
        state.v[chunk] = A_new @ second.estimate.densify()
    state.A = A_new
    state.gram = GramCache(A_new, budget=cfg.gram_budget)
    state.resample_count = count
    logger.info(
        "step %d: resampled projection for group %d (%d so far)",
        state.step_t, state.group_id, count,
    )
    return state


def apply_update(w, n, eta: float, weight_decay: float = 0.0) -> np.ndarray:
    """Return w - eta * (n + weight_decay * w)."""
    w = np.asarray(w, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if w.shape != n.shape:
        raise InvalidDimensionError("weights {} and update {} differ".format(w.shape, n.shape))
    if weight_decay:
        return w - eta * (n + weight_decay * w)
    return w - eta * n


def apply_update_(w: np.ndarray, n, eta: float, weight_decay: float = 0.0) -> np.ndarray:
    """In-place form of apply_update."""
    if w.shape != np.shape(n):
        raise InvalidDimensionError("weights {} and update {} differ".format(w.shape, np.shape(n)))
    if weight_decay:
        w *= 1 - eta * weight_decay
    w -= eta * np.asarray(n)
    return w


class Optimizer:
    """An optimizer for one parameter group.

    Subclasses set `name` and implement `_init_state` and `_step`. The group
    is a flat vector of length dim, read as a shape[0] x shape[1] matrix where
    a method needs one.

    """

    name = "base"

    def __init__(self, dim: int, cfg: SgcConfig, group_id: int = 0,
                 shape: Optional[Tuple[int, int]] = None) -> None:
        if shape is None:
            shape = square_shape(dim)
        if shape[0] * shape[1] != dim:
            raise InvalidDimensionError("shape {} does not hold {} entries".format(shape, dim))
        self.dim = dim
        self.shape = tuple(shape)
        self.cfg = cfg
        self.group_id = group_id
        self.state = self._init_state()

    def _init_state(self) -> SgcState:
        return adamw_state(self.dim, self.cfg, self.group_id)

    def _step(self, grad: np.ndarray) -> StepOutput:
        raise NotImplementedError

    def step(self, grad) -> StepOutput:
        return self._step(np.asarray(grad, dtype=np.float64))

    @property
    def state_size(self) -> int:
        """Number of stored moment entries."""
        return int(self.state.m.size + self.state.v.size)


class SGD(Optimizer):
    name = "sgd"

    def _init_state(self) -> SgcState:
        return SgcState(np.zeros(0), np.zeros(0), group_id=self.group_id)

    def _step(self, grad):
        grad = _check_gradient(grad, self.dim)
        self.state.step_t += 1
        return StepOutput(grad.copy(), int(np.count_nonzero(grad)))


class AdamW(Optimizer):
    name = "adamw"

    def _step(self, grad):
        return adamw_step(grad, self.state, self.cfg)


class SGC(Optimizer):
    name = "sgc"

    def __init__(self, dim, cfg, group_id=0, shape=None):
        if cfg.c != 1:
            raise ConfigError("SGC is unchunked; use MESGC for c = {}".format(cfg.c))
        super().__init__(dim, cfg, group_id, shape)

    def _init_state(self):
        return sgc_state(self.dim, self.cfg, self.group_id)

    def _step(self, grad):
        return sgc_step(grad, self.state, self.cfg)


class MESGC(Optimizer):
    name = "mesgc"

    def _init_state(self):
        return sgc_state(self.dim, self.cfg, self.group_id)

    def _step(self, grad):
        return mesgc_step(grad, self.state, self.cfg)


class CESGC(Optimizer):
    name = "cesgc"

    def _init_state(self):
        return cesgc_state(self.shape, self.cfg, self.group_id)

    def _step(self, grad):
        grad = _check_gradient(grad, self.dim)
        return cesgc_step(grad.reshape(self.shape), self.state, self.cfg)


OPTIMIZERS = {cls.name: cls for cls in (SGD, AdamW, SGC, MESGC, CESGC)}


def make_optimizer(name: str, dim: int, cfg: SgcConfig, group_id: int = 0,
                   shape: Optional[Tuple[int, int]] = None) -> Optimizer:
    try:
        cls = OPTIMIZERS[name.lower()]
    except KeyError:
        raise ConfigError(
            "unknown optimizer {!r}; choose from {}".format(name, sorted(OPTIMIZERS))
        ) from None
    return cls(dim, cfg, group_id, shape)


def can_compress(name: str, dim: int, cfg: SgcConfig,
                 shape: Optional[Tuple[int, int]] = None) -> bool:
    """Whether a group of this size fits the chunking of an SGC-family method."""
    name = name.lower()
    if name not in ("sgc", "mesgc", "cesgc"):
        return True
    if name == "cesgc":
        rows, cols = shape if shape is not None else square_shape(dim)
        if cfg.rank_r > rows:
            return False
        dim = cfg.rank_r * cols
    if dim % cfg.c:
        return False
    size = dim // cfg.c
    if cfg.projection == "identity":
        return cfg.k_chunk == size
    return cfg.k_chunk <= size
