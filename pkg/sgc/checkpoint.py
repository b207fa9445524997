"""
Optimizer checkpoints.

A checkpoint is a versioned numpy ``.npz`` archive holding the optimizer
config as JSON, the moments, the step counter and the identifiers that
regenerate the measurement matrix A (seed, group id, resample count and
dimensions). A is never stored densely; B, which is derived from gradients,
is.

"""
import json

import numpy as np

from .errors import InputError
from .optimizer import Optimizer, SgcConfig, make_optimizer, projection_matrix
from .omp import GramCache

FORMAT_VERSION = 1


def save_checkpoint(path, optimizer: Optimizer) -> None:
    state = optimizer.state
    a_shape = state.A.shape if state.A is not None else (0, 0)
    arrays = dict(
        format_version=np.array(FORMAT_VERSION),
        kind=np.array(optimizer.name),
        config=np.array(json.dumps(optimizer.cfg.to_dict(), sort_keys=True)),
        dim=np.array(optimizer.dim),
        shape=np.array(optimizer.shape),
        group_id=np.array(state.group_id),
        step_t=np.array(state.step_t),
        resample_count=np.array(state.resample_count),
        a_shape=np.array(a_shape),
        m=state.m,
        v=state.v,
        B=state.B if state.B is not None else np.zeros((0, 0)),
    )
    try:
        with open(path, "wb") as f:
            np.savez(f, **arrays)
    except OSError as exc:
        raise InputError("cannot write checkpoint {}: {}".format(path, exc)) from exc


def load_checkpoint(path) -> Optimizer:
    try:
        with np.load(path, allow_pickle=False) as archive:
            data = {key: archive[key] for key in archive.files}
    except (OSError, ValueError) as exc:
        raise InputError("cannot read checkpoint {}: {}".format(path, exc)) from exc

    version = int(data.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise InputError("unsupported checkpoint version {}".format(version))

    cfg = SgcConfig.from_dict(json.loads(str(data["config"])))
    optimizer = make_optimizer(
        str(data["kind"]),
        int(data["dim"]),
        cfg,
        int(data["group_id"]),
        tuple(int(x) for x in data["shape"]),
    )
    state = optimizer.state
    state.m = data["m"].astype(np.float64)
    state.v = data["v"].astype(np.float64)
    state.step_t = int(data["step_t"])
    state.resample_count = int(data["resample_count"])
    rows, cols = (int(x) for x in data["a_shape"])
    if rows:
        state.A = projection_matrix(cfg, rows, cols, state.group_id, state.resample_count)
        state.gram = GramCache(state.A, budget=cfg.gram_budget)
    if data["B"].size:
        state.B = data["B"].astype(np.float64)
    return optimizer
