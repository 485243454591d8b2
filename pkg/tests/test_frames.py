import numpy as np
import pytest

from shapesync.errors import GridFormatError, InvalidDimensionError, InvalidInputError
from shapesync.frames import FrameSequence, load_frames, save_frames


def test_values_clamped():
    seq = FrameSequence(np.array([[[[-0.5], [1.5]]]], dtype=np.float32))
    assert seq.frames.min() == 0.0 and seq.frames.max() == 1.0


def test_channel_count_enforced():
    with pytest.raises(InvalidDimensionError):
        FrameSequence(np.zeros((1, 2, 2, 2)))
    with pytest.raises(InvalidDimensionError):
        FrameSequence(np.zeros((2, 2, 2)))


def test_non_finite_rejected():
    bad = np.zeros((1, 2, 2, 1))
    bad[0, 0, 0, 0] = np.inf
    with pytest.raises(InvalidInputError):
        FrameSequence(bad)


def test_roundtrip_exact_on_8bit_values(tmp_path):
    u8 = np.random.default_rng(0).integers(0, 256, (3, 8, 6, 3)).astype(np.uint8)
    seq = FrameSequence(u8.astype(np.float32) / 255.0)
    save_frames(seq, tmp_path / "v")
    back = load_frames(tmp_path / "v")
    np.testing.assert_array_equal(back.frames, seq.frames)


def test_gray_uses_pgm_rgb_uses_ppm(tmp_path):
    save_frames(FrameSequence(np.zeros((2, 4, 4, 1))), tmp_path / "g")
    save_frames(FrameSequence(np.zeros((2, 4, 4, 3))), tmp_path / "c")
    assert sorted(p.name for p in (tmp_path / "g").iterdir()) == [
        "frame_00000.pgm", "frame_00001.pgm"]
    assert sorted(p.name for p in (tmp_path / "c").iterdir()) == [
        "frame_00000.ppm", "frame_00001.ppm"]


def test_netpbm_header(tmp_path):
    save_frames(FrameSequence(np.ones((1, 3, 5, 1))), tmp_path / "h")
    blob = (tmp_path / "h" / "frame_00000.pgm").read_bytes()
    assert blob.startswith(b"P5\n5 3\n255\n")
    assert blob[len(b"P5\n5 3\n255\n"):] == b"\xff" * 15


def test_load_rejects_other_maxval(tmp_path):
    (tmp_path / "frame_00000.pgm").write_bytes(b"P5\n2 2\n65535\n" + b"\x00" * 8)
    with pytest.raises(GridFormatError):
        load_frames(tmp_path)


def test_load_rejects_short_payload(tmp_path):
    (tmp_path / "frame_00000.pgm").write_bytes(b"P5\n4 4\n255\n" + b"\x00" * 5)
    with pytest.raises(GridFormatError):
        load_frames(tmp_path)


def test_load_rejects_mixed_sizes(tmp_path):
    (tmp_path / "frame_00000.pgm").write_bytes(b"P5\n2 2\n255\n" + b"\x00" * 4)
    (tmp_path / "frame_00001.pgm").write_bytes(b"P5\n3 3\n255\n" + b"\x00" * 9)
    with pytest.raises(InvalidInputError):
        load_frames(tmp_path)


def test_load_empty_dir(tmp_path):
    with pytest.raises(InvalidInputError):
        load_frames(tmp_path)


def test_quantization_is_round_to_nearest(tmp_path):
    seq = FrameSequence(np.full((1, 1, 1, 1), 0.5))
    save_frames(seq, tmp_path / "q")
    back = load_frames(tmp_path / "q")
    assert back.frames[0, 0, 0, 0] == np.float32(128 / 255.0)
