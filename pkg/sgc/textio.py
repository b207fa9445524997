"""
Text formats for vectors and matrices.

A file holds one ASCII header line, ``dense-vector d`` or ``dense-matrix k d``,
followed by whitespace-separated decimal values (row-major for matrices).

"""
import numpy as np

from .errors import InputError


def _read_tokens(path):
    try:
        with open(path) as f:
            header = f.readline().split()
            body = f.read().split()
    except OSError as exc:
        raise InputError("cannot read {}: {}".format(path, exc)) from exc
    return header, body


def _parse_values(path, body, expected):
    try:
        values = np.array([float(token) for token in body])
    except ValueError as exc:
        raise InputError("{}: {}".format(path, exc)) from exc
    if values.size != expected:
        raise InputError(
            "{}: header promises {} values, found {}".format(path, expected, values.size)
        )
    if not np.all(np.isfinite(values)):
        raise InputError("{}: non-finite value".format(path))
    return values


def _parse_dims(path, header, kind, count):
    if len(header) != count + 1 or header[0] != kind:
        raise InputError("{}: expected header '{}' with {} dims".format(path, kind, count))
    try:
        dims = [int(token) for token in header[1:]]
    except ValueError as exc:
        raise InputError("{}: {}".format(path, exc)) from exc
    if any(dim < 1 for dim in dims):
        raise InputError("{}: dimensions must be positive".format(path))
    return dims


def read_vector(path) -> np.ndarray:
    header, body = _read_tokens(path)
    (d,) = _parse_dims(path, header, "dense-vector", 1)
    return _parse_values(path, body, d)


def read_matrix(path) -> np.ndarray:
    header, body = _read_tokens(path)
    k, d = _parse_dims(path, header, "dense-matrix", 2)
    return _parse_values(path, body, k * d).reshape(k, d)


def write_vector(path, v) -> None:
    v = np.asarray(v, dtype=np.float64)
    try:
        with open(path, "w") as f:
            f.write("dense-vector {}\n".format(v.shape[0]))
            f.write(" ".join(repr(float(x)) for x in v))
            f.write("\n")
    except OSError as exc:
        raise InputError("cannot write {}: {}".format(path, exc)) from exc


def write_matrix(path, M) -> None:
    M = np.asarray(M, dtype=np.float64)
    try:
        with open(path, "w") as f:
            f.write("dense-matrix {} {}\n".format(*M.shape))
            for row in M:
                f.write(" ".join(repr(float(x)) for x in row))
                f.write("\n")
    except OSError as exc:
        raise InputError("cannot write {}: {}".format(path, exc)) from exc
