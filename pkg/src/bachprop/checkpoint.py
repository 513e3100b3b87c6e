"""Versioned binary checkpoint container.

Layout: 8-byte magic, little-endian u32 format version, u32 header length,
UTF-8 JSON header, then every parameter as little-endian float64 in the
order listed by the header.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CheckpointError
from .model import Model, make_network
from .score import Dictionaries

MAGIC = b"BACHPROP"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")


def _jsonable_hidden(hidden):
    return list(hidden) if isinstance(hidden, (tuple, list)) else hidden


def dumps(model: Model, config: dict | None = None, seed: int | None = None) -> bytes:
    net = model.network
    order = [k for k, _ in net.param_shapes()]
    header = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "variant": net.kind,
        "hidden": _jsonable_hidden(net.hidden),
        "sizes": list(net.sizes),
        "dictionaries": {"dT": list(model.dicts.dT), "T": list(model.dicts.T), "P": list(model.dicts.P)},
        "params": [{"name": k, "shape": list(model.params[k].shape)} for k in order],
        "config": config or {},
        "seed": seed,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes() for k in order)
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(blob)) + blob + body


def loads(data: bytes) -> tuple[Model, dict]:
    """Inverse of :func:`dumps`; returns the model and the decoded header."""
    if len(data) < _PREFIX.size:
        raise CheckpointError("file too short for a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header: {exc}") from None
    raw = header["dictionaries"]
    dicts = Dictionaries(tuple(raw["dT"]), tuple(raw["T"]), tuple(raw["P"]))
    hidden = header["hidden"]
    net = make_network(header["variant"], dicts.sizes, tuple(hidden) if isinstance(hidden, list) else hidden)

    expected = dict(net.param_shapes())
    params, offset = {}, start + hlen
    for entry in header["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if expected.get(name) != tuple(shape):
            raise CheckpointError(f"parameter {name} has shape {shape}, network expects {expected.get(name)}")
        n = int(np.prod(shape)) * 8
        if offset + n > len(data):
            raise CheckpointError("truncated parameter data")
        params[name] = np.frombuffer(data, dtype="<f8", count=n // 8, offset=offset).reshape(shape).astype(np.float64)
        offset += n
    if offset != len(data):
        raise CheckpointError("trailing bytes after parameter data")
    if set(params) != set(expected):
        raise CheckpointError("parameter set does not match the network")
    return Model(net, {k: params[k] for k in expected}, dicts), header


def save(path, model: Model, config: dict | None = None, seed: int | None = None) -> None:
    Path(path).write_bytes(dumps(model, config, seed))


def load(path) -> tuple[Model, dict]:
    return loads(Path(path).read_bytes())
