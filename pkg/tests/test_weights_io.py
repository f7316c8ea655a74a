"""Weight container round trips and corruption diagnostics."""

import struct

import numpy as np
import pytest

from holograd.errors import WeightFormatError
from holograd.network import init_stage_weights
from holograd.weights_io import MAGIC, VERSION, load_weights, save_weights


@pytest.fixture
def stages():
    return init_stage_weights(2, channels=8, seed=5)


def _tensors(w):
    return dict(w.named_tensors())


def test_round_trip_is_bit_exact(tmp_path, stages):
    path = tmp_path / "w.cghw"
    save_weights(stages, path)
    back = load_weights(path)
    assert len(back) == 2
    for orig, loaded in zip(stages, back):
        a, b = _tensors(orig), _tensors(loaded)
        assert a.keys() == b.keys()
        for name in a:
            assert np.array_equal(a[name], b[name]), name
            assert np.iscomplexobj(a[name]) == np.iscomplexobj(b[name]), name


def test_single_stage_round_trip(tmp_path, stages):
    path = tmp_path / "one.cghw"
    save_weights(stages[0], path)
    back = load_weights(path)
    assert len(back) == 1
    assert back[0].channels == 8


def test_header_layout(tmp_path, stages):
    path = tmp_path / "w.cghw"
    save_weights(stages[:1], path)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert struct.unpack("<I", raw[4:8])[0] == VERSION
    count = struct.unpack("<I", raw[8:12])[0]
    assert count == len(list(stages[0].named_tensors()))


def test_bad_magic_is_rejected(tmp_path, stages):
    path = tmp_path / "w.cghw"
    save_weights(stages[:1], path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(WeightFormatError, match="bad magic"):
        load_weights(path)


def test_version_mismatch_is_rejected(tmp_path, stages):
    path = tmp_path / "w.cghw"
    save_weights(stages[:1], path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(WeightFormatError, match="version 99"):
        load_weights(path)


def test_truncation_is_rejected(tmp_path, stages):
    path = tmp_path / "w.cghw"
    save_weights(stages[:1], path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(WeightFormatError):
        load_weights(path)


def test_payload_corruption_fails_checksum(tmp_path, stages):
    path = tmp_path / "w.cghw"
    save_weights(stages[:1], path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(WeightFormatError, match="checksum"):
        load_weights(path)


def test_dimension_mismatch_names_the_tensor(tmp_path, stages):
    # stage whose fem.w2 disagrees with the channel count implied by fem.w1
    bad = init_stage_weights(1, channels=8, seed=5)[0]
    bad.fem_w2 = bad.fem_w2[:, :, :4, :]
    path = tmp_path / "w.cghw"
    save_weights(bad, path)
    with pytest.raises(WeightFormatError, match=r"fem\.w2"):
        load_weights(path)


def test_missing_tensor_is_reported(tmp_path, stages):
    path = tmp_path / "w.cghw"
    save_weights(stages[:1], path)
    # rebuild the container without pirm.b2
    from holograd.weights_io import _pack_tensor
    import zlib

    tensors = [
        (f"stage0.{n}", np.asarray(a))
        for n, a in stages[0].named_tensors()
        if n != "pirm.b2"
    ]
    body = struct.pack("<I", len(tensors)) + b"".join(
        _pack_tensor(n, a) for n, a in tensors
    )
    path.write_bytes(MAGIC + struct.pack("<I", VERSION) + body + struct.pack("<I", zlib.crc32(body)))
    with pytest.raises(WeightFormatError, match=r"pirm\.b2"):
        load_weights(path)


def test_noncontiguous_stage_indices_rejected(tmp_path, stages):
    from holograd.weights_io import _pack_tensor
    import zlib

    tensors = [(f"stage2.{n}", np.asarray(a)) for n, a in stages[0].named_tensors()]
    body = struct.pack("<I", len(tensors)) + b"".join(
        _pack_tensor(n, a) for n, a in tensors
    )
    path = tmp_path / "w.cghw"
    path.write_bytes(MAGIC + struct.pack("<I", VERSION) + body + struct.pack("<I", zlib.crc32(body)))
    with pytest.raises(WeightFormatError, match="contiguous"):
        load_weights(path)


def test_loaded_weights_drive_the_denoiser(tmp_path, stages):
    from holograd.network import pcd_forward

    path = tmp_path / "w.cghw"
    save_weights(stages, path)
    back = load_weights(path)
    rng = np.random.default_rng(0)
    v = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
    assert np.array_equal(pcd_forward(v, stages[0]), pcd_forward(v, back[0]))
