import numpy as np
import pytest

from facerestore.checkpoint import (
    MAGIC, CheckpointError, load_checkpoint, params_sha256, save_checkpoint,
)


def test_roundtrip(tmp_path):
    arrays = {
        "gen/head.w": np.random.default_rng(0).normal(size=(4, 3, 3, 3)).astype(np.float32),
        "gen/head.b": np.zeros(4, dtype=np.float32),
        "opt/t": np.array([7.0]),
    }
    meta = {"epoch": 3, "cfg": {"lr": 1e-4}}
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, arrays, meta)
    loaded, meta2 = load_checkpoint(path)
    assert meta2 == meta
    assert set(loaded) == set(arrays)
    for k in arrays:
        assert loaded[k].dtype == arrays[k].dtype
        assert np.array_equal(loaded[k], arrays[k])


def test_version_mismatch_fails_loudly(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, {"a": np.zeros(2, dtype=np.float32)})
    raw = bytearray(path.read_bytes())
    raw[len(MAGIC)] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPTxxxxxx")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_values_little_endian_exact(tmp_path):
    arr = np.array([1.5, -2.25, 3.0], dtype=np.float64)
    path = tmp_path / "v.ckpt"
    save_checkpoint(path, {"x": arr})
    raw = path.read_bytes()
    assert arr.astype("<f8").tobytes() in raw


def test_params_sha256_order_independent_and_content_sensitive():
    a = {"w": np.ones(3, np.float32), "b": np.zeros(2, np.float32)}
    b = {"b": np.zeros(2, np.float32), "w": np.ones(3, np.float32)}
    assert params_sha256(a) == params_sha256(b)
    c = {"w": np.ones(3, np.float32), "b": np.ones(2, np.float32)}
    assert params_sha256(a) != params_sha256(c)
