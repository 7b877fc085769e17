"""Versioned binary model checkpoints.

Layout (all integers little-endian)::

    b"M2RCKPT\\0"            8-byte magic
    u32 version
    u64 header length L
    L bytes of UTF-8 JSON  {"config": ..., "scheme": ..., "seed": ...,
                            "tensors": [{"name", "shape", "offset"}, ...]}
    raw '<f8' values, tensor after tensor, at the listed byte offsets

Tensors cover every parameter plus batch-norm running statistics.
"""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .config import AblationScheme, EncoderConfig
from .errors import CodecError
from .network import M2RNet

MAGIC = b"M2RCKPT\0"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def _named_arrays(model: M2RNet) -> dict:
    arrays = {name: p.data for name, p in model.named_parameters()}
    arrays.update(model.named_buffers())
    return arrays


def encode(model: M2RNet) -> bytes:
    arrays = _named_arrays(model)
    entries, offset = [], 0
    for name, arr in arrays.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = json.dumps({
        "config": dataclasses.asdict(model.config),
        "scheme": model.scheme.flags(),
        "seed": model.seed,
        "tensors": entries,
    }, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + body


def decode(buf: bytes) -> M2RNet:
    if len(buf) < _PREFIX.size:
        raise CodecError(f"checkpoint truncated at offset {len(buf)}")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise CodecError(f"bad checkpoint magic {magic!r} at offset 0")
    if version != VERSION:
        raise CodecError(f"unsupported checkpoint version {version} at offset 8")
    start = _PREFIX.size
    try:
        header = json.loads(buf[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CodecError(f"unreadable checkpoint header at offset {start}: {exc}") from None
    data = start + hlen

    cfg = header["config"]
    cfg["channels"] = tuple(cfg["channels"])
    model = M2RNet(EncoderConfig(**cfg), header["seed"], AblationScheme(**header["scheme"]))
    arrays = _named_arrays(model)
    listed = {e["name"] for e in header["tensors"]}
    if listed != set(arrays):
        missing, extra = sorted(set(arrays) - listed), sorted(listed - set(arrays))
        raise CodecError(f"checkpoint tensors do not match the model (missing {missing}, unexpected {extra})")
    for entry in header["tensors"]:
        target = arrays[entry["name"]]
        shape = tuple(entry["shape"])
        if shape != target.shape:
            raise CodecError(f"tensor {entry['name']}: stored shape {shape}, model wants {target.shape}")
        lo = data + entry["offset"]
        n = int(np.prod(shape, dtype=np.int64))
        if lo + 8 * n > len(buf):
            raise CodecError(f"tensor {entry['name']} runs past end of file (offset {lo})")
        target[...] = np.frombuffer(buf, dtype="<f8", count=n, offset=lo).reshape(shape)
    return model


def save(path, model: M2RNet):
    with open(path, "wb") as fh:
        fh.write(encode(model))


def load(path) -> M2RNet:
    with open(path, "rb") as fh:
        return decode(fh.read())
