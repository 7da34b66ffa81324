"""Binary checkpoint format.

Layout (little endian)::

    magic    8 bytes   b"APEXCKPT"
    version  u32
    d, K, e  3 x u32
    n_params u64
    arch_len u32, then arch_len bytes of UTF-8 JSON (architecture descriptor)
    params   n_params x f64
    table    K*e x f64   (fixed embedding table; zeros-length when learnable)
    sha256   32 bytes over everything before it
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .errors import CheckpointError
from .net import Architecture, VelocityModel

MAGIC = b"APEXCKPT"
VERSION = 1
_HEAD = struct.Struct("<8sI3IQI")


def to_bytes(model: VelocityModel) -> bytes:
    a = model.arch
    arch = json.dumps(a.to_dict(), sort_keys=True).encode()
    table = b"" if a.learn_embeddings else model.table.astype("<f8").tobytes()
    body = (_HEAD.pack(MAGIC, VERSION, a.data_dim, a.n_conditions, a.embed_dim,
                       model.params.size, len(arch))
            + arch + model.params.astype("<f8").tobytes() + table)
    return body + hashlib.sha256(body).digest()


def from_bytes(blob: bytes, expect: Architecture | None = None) -> VelocityModel:
    if len(blob) < _HEAD.size + 32:
        raise CheckpointError("checkpoint truncated")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum mismatch (file corrupt or truncated)")
    magic, version, d, K, e, n_params, arch_len = _HEAD.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError("bad magic")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = _HEAD.size
    arch = Architecture.from_dict(json.loads(body[pos:pos + arch_len]))
    pos += arch_len
    if (arch.data_dim, arch.n_conditions, arch.embed_dim, arch.n_params) != (d, K, e, n_params):
        raise CheckpointError("header disagrees with architecture descriptor")
    if expect is not None and expect != arch:
        raise CheckpointError(f"architecture mismatch: file has {arch}, expected {expect}")
    n_table = 0 if arch.learn_embeddings else K * e
    if len(body) != pos + 8 * (n_params + n_table):
        raise CheckpointError("payload length mismatch")
    params = np.frombuffer(body, dtype="<f8", count=n_params, offset=pos).astype(np.float64)
    pos += 8 * n_params
    table = None
    if n_table:
        table = np.frombuffer(body, dtype="<f8", count=n_table, offset=pos).reshape(K, e)
        table = table.astype(np.float64)
    return VelocityModel(arch, params, table)


def write_atomic(path, data: bytes):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(model, path):
    write_atomic(path, to_bytes(model))


def load(path, expect=None):
    with open(path, "rb") as f:
        return from_bytes(f.read(), expect)
