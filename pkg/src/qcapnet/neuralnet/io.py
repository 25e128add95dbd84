"""Binary model files: magic, JSON header, little-endian weight payload.

Each tensor carries a crc32 so truncation or bit rot is caught on load.
"""
from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from ..errors import SchemaError, UnsupportedVersion
from .layers import Conv2D, Dense, Flatten, Pool2D
from .model import CnnModel, CnnSpec

MAGIC = b"QCNN"
VERSION = 1


def dumps_model(model: CnnModel) -> bytes:
    tensors, payload = [], []
    for p in model.params():
        raw = np.ascontiguousarray(p, dtype=p.dtype.newbyteorder("<")).tobytes()
        tensors.append({"shape": list(p.shape), "dtype": p.dtype.str.lstrip("<>=|"), "crc32": zlib.crc32(raw), "bytes": len(raw)})
        payload.append(raw)
    header = {
        "version": VERSION,
        "spec": model.spec.to_dict(),
        "layers": [layer.describe() for layer in model.layers],
        "reference": model.reference,
        "best_epoch": model.best_epoch,
        "history": model.history,
        "meta": model.meta,
        "tensors": tensors,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(payload)


def loads_model(blob: bytes) -> CnnModel:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise SchemaError("not a model file (bad magic)")
    (hlen,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"corrupt model header: {exc}") from exc
    if not isinstance(header, dict) or "version" not in header:
        raise SchemaError("model header lacks a version field")
    if header["version"] != VERSION:
        raise UnsupportedVersion(f"model format version {header['version']} not supported (expected {VERSION})")
    try:
        spec = CnnSpec.from_dict(header["spec"])
        descs, metas = header["layers"], header["tensors"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"incomplete model header: {exc}") from exc
    offset = 8 + hlen
    arrays = []
    for meta in metas:
        raw = blob[offset : offset + meta["bytes"]]
        offset += meta["bytes"]
        if len(raw) != meta["bytes"] or zlib.crc32(raw) != meta["crc32"]:
            raise SchemaError("model payload checksum mismatch")
        arrays.append(np.frombuffer(raw, dtype=np.dtype(meta["dtype"]).newbyteorder("<")).reshape(meta["shape"]).astype(meta["dtype"]))
    if offset != len(blob):
        raise SchemaError("trailing bytes after model payload")
    layers, k = [], 0
    try:
        for d in descs:
            if d["kind"] == "conv":
                layers.append(Conv2D(arrays[k], arrays[k + 1], d["activation"]))
                k += 2
            elif d["kind"] == "dense":
                layers.append(Dense(arrays[k], arrays[k + 1], d["activation"]))
                k += 2
            elif d["kind"] == "pool":
                layers.append(Pool2D(d["shape"], d["mode"]))
            elif d["kind"] == "flatten":
                layers.append(Flatten())
            else:
                raise SchemaError(f"unknown layer kind {d['kind']!r}")
    except IndexError:
        raise SchemaError("model header lists more tensors than the payload holds") from None
    if k != len(arrays):
        raise SchemaError("weight count does not match the layer list")
    return CnnModel(spec, layers, header.get("history", []), header.get("reference", False),
                    header.get("best_epoch"), header.get("meta", {}))


def save_model(model: CnnModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> CnnModel:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
