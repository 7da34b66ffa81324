import hashlib

import numpy as np
import pytest

from apexflow import checkpoint
from apexflow.errors import CheckpointError
from apexflow.net import Architecture

from helpers import small_model


@pytest.mark.parametrize("learn", [False, True])
def test_round_trip_bytes(tmp_path, learn):
    m = small_model(learn=learn)
    p = tmp_path / "m.bin"
    checkpoint.save(m, p)
    loaded = checkpoint.load(p, expect=m.arch)
    assert checkpoint.to_bytes(loaded) == p.read_bytes()
    x = np.random.default_rng(0).standard_normal((5, 2))
    assert (m.forward(x, 0.4, m.embed(1)).tobytes()
            == loaded.forward(x, 0.4, loaded.embed(1)).tobytes())


def test_truncated(tmp_path):
    blob = checkpoint.to_bytes(small_model())
    with pytest.raises(CheckpointError, match="checksum|truncated"):
        checkpoint.from_bytes(blob[:-7])
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(blob[:10])


def test_corrupted_payload():
    blob = bytearray(checkpoint.to_bytes(small_model()))
    blob[80] ^= 1
    with pytest.raises(CheckpointError, match="checksum"):
        checkpoint.from_bytes(bytes(blob))


def test_architecture_mismatch():
    blob = checkpoint.to_bytes(small_model())
    with pytest.raises(CheckpointError, match="architecture"):
        checkpoint.from_bytes(blob, expect=Architecture(hidden=(9,), embed_dim=2, time_features=2))


def test_version_and_magic():

    blob = checkpoint.to_bytes(small_model())
    body = blob[:-32]
    bumped = body[:8] + (99).to_bytes(4, "little") + body[12:]
    with pytest.raises(CheckpointError, match="version"):
        checkpoint.from_bytes(bumped + hashlib.sha256(bumped).digest())
    bad = b"NOTACKPT" + body[8:]
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint.from_bytes(bad + hashlib.sha256(bad).digest())


def test_write_atomic_leaves_no_temp(tmp_path):
    p = tmp_path / "out.bin"
    checkpoint.write_atomic(p, b"abc")
    assert p.read_bytes() == b"abc"
    assert [f.name for f in tmp_path.iterdir()] == ["out.bin"]
