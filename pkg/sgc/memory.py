"""
Memory Model
============

Closed-form counts of weights, optimizer states and projection storage per
layer for the SGC family, low-rank gradient projection (GaLore), low-rank
adapters (LoRA) and full fine-tuning.

Counts are numbers of scalar entries. For an m x n layer (d = m n):

    method   weights        states           projection
    MESGC    d              2 k              0
    CESGC    d              2 k              r m
    GaLore   d              2 r n            r m
    LoRA     d + r (m + n)  2 r (m + n)      0
    FullFT   d              2 d              0

with k = kappa c s_c. For square layers (m = n = √d) this is the usual
comparison table: GaLore 2 r √d states and r √d projection, LoRA
d + 2 r √d weights and 4 r √d states.

Granularity is the smallest change in state count reachable by moving the
method's free integer (s_c for the SGC family, r for GaLore and LoRA) by one.
It is reported per state vector and for both moments together.

"""
from dataclasses import dataclass

# mypy
from typing import Iterable, List, Optional, Tuple

import pandas as pd

from .errors import ConfigError, InputError

METHODS = ("MESGC", "CESGC", "GaLore", "LoRA", "FullFT")
SGC_FAMILY = ("MESGC", "CESGC")


@dataclass(frozen=True)
class LayerShape:
    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise ConfigError("layer shape must be positive, got {}x{}".format(self.m, self.n))

    @property
    def d(self) -> int:
        return self.m * self.n

    @classmethod
    def square(cls, side: int) -> "LayerShape":
        return cls(side, side)


@dataclass(frozen=True)
class MethodSpec:
    method: str
    rank_r: Optional[int] = None
    s_c: Optional[int] = None
    c: Optional[int] = None
    kappa: Optional[int] = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError("unknown method {!r}; choose from {}".format(self.method, METHODS))
        required = []
        if self.method in SGC_FAMILY:
            required += ["s_c", "c", "kappa"]
        if self.method in ("CESGC", "GaLore", "LoRA"):
            required.append("rank_r")
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ConfigError("{} needs {}".format(self.method, missing))
        bad = [name for name in required if getattr(self, name) < 1]
        if bad:
            raise ConfigError("{} fields must be >= 1: {}".format(self.method, bad))

    @property
    def k(self) -> int:
        return self.kappa * self.c * self.s_c

    def with_free_integer(self, value: int) -> "MethodSpec":
        """The same spec with its free integer (s_c or r) set to value."""
        if self.method in SGC_FAMILY:
            return MethodSpec(self.method, self.rank_r, value, self.c, self.kappa)
        if self.method in ("GaLore", "LoRA"):
            return MethodSpec(self.method, value, self.s_c, self.c, self.kappa)
        return self


@dataclass(frozen=True)
class MemoryReport:
    weights: int
    optimizer_states: int
    projection_storage: int
    min_states: int
    granularity_per_state_dim: int
    granularity_total_states: int

    def bytes(self, element_width: int = 4) -> int:
        """Bytes for weights, states and projection at element_width bytes each."""
        return (self.weights + self.optimizer_states + self.projection_storage) * element_width


def _states(shape: LayerShape, spec: MethodSpec) -> int:
    if spec.method in SGC_FAMILY:
        return 2 * spec.k
    if spec.method == "GaLore":
        return 2 * spec.rank_r * shape.n
    if spec.method == "LoRA":
        return 2 * spec.rank_r * (shape.m + shape.n)
    return 2 * shape.d


def granularity(shape: LayerShape, spec: MethodSpec) -> Tuple[int, int]:
    """(per state vector, both moments) increment per unit of the free integer."""
    if spec.method in SGC_FAMILY:
        per_state = spec.kappa * spec.c
    elif spec.method == "GaLore":
        per_state = shape.n
    elif spec.method == "LoRA":
        per_state = shape.m + shape.n
    else:
        per_state = 0
    return per_state, 2 * per_state


def projection_overhead(shape: LayerShape, spec: MethodSpec, include_A: bool = False) -> int:
    """Projection storage; with include_A, the chunk measurement matrix k (d / c).

    The comparison table leaves A out of the SGC rows; include_A makes that
    storage explicit.

    """
    if include_A:
        if spec.method not in SGC_FAMILY:
            raise ConfigError("include_A applies to the SGC family only")
        if shape.d % spec.c:
            raise ConfigError("{} chunks do not divide d = {}".format(spec.c, shape.d))
        return spec.k * (shape.d // spec.c)
    if spec.method in ("CESGC", "GaLore"):
        return spec.rank_r * shape.m
    return 0


def account(shape: LayerShape, spec: MethodSpec) -> MemoryReport:
    weights = shape.d
    if spec.method == "LoRA":
        weights += spec.rank_r * (shape.m + shape.n)
    per_state, total = granularity(shape, spec)
    return MemoryReport(
        weights=weights,
        optimizer_states=_states(shape, spec),
        projection_storage=projection_overhead(shape, spec),
        min_states=_states(shape, spec.with_free_integer(1)),
        granularity_per_state_dim=per_state,
        granularity_total_states=total,
    )


def read_manifest(path) -> List[LayerShape]:
    """Read a layer manifest: one ``m n`` pair per line, # comments allowed."""
    shapes = []
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as exc:
        raise InputError("cannot read manifest {}: {}".format(path, exc)) from exc
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            m, n = (int(x) for x in fields)
        except ValueError:
            raise InputError("{}:{}: expected 'm n', got {!r}".format(path, number, line)) from None
        shapes.append(LayerShape(m, n))
    if not shapes:
        raise InputError("manifest {} lists no layers".format(path))
    return shapes


def memory_table(shapes: Iterable[LayerShape], specs: Iterable[MethodSpec],
                 element_width: int = 4) -> pd.DataFrame:
    """One row per (layer, method) with the counts of account()."""
    specs = list(specs)
    records = []
    for layer, shape in enumerate(shapes):
        for spec in specs:
            report = account(shape, spec)
            records.append(
                {
                    "layer": layer,
                    "m": shape.m,
                    "n": shape.n,
                    "method": spec.method,
                    "weights": report.weights,
                    "states": report.optimizer_states,
                    "projection": report.projection_storage,
                    "min": report.min_states,
                    "granularity": report.granularity_per_state_dim,
                    "granularity_total": report.granularity_total_states,
                    "bytes": report.bytes(element_width),
                }
            )
    return pd.DataFrame.from_records(records)
