import numpy as np
import pytest

from roistream.errors import FormatError
from roistream.roidet import FrameGray
from roistream.utils import frames


def test_pgm_round_trip(tmp_path, square_frame):
    frame = square_frame(40, 30, 5, 7)
    path = tmp_path / "f.pgm"
    frames.write_pgm(path, frame)
    assert path.read_bytes().startswith(b"P5")
    assert np.array_equal(frames.read_pgm(path).pixels, frame.pixels)


def test_load_frames_in_name_order(tmp_path):
    for name, value in (("b.pgm", 2), ("a.pgm", 1), ("c.pgm", 3)):
        frames.write_pgm(tmp_path / name, FrameGray(np.full((16, 16), value, dtype=np.uint8)))
    (tmp_path / "notes.txt").write_text("ignored")
    loaded = frames.load_frames(tmp_path)
    assert [int(f.pixels[0, 0]) for f in loaded] == [1, 2, 3]


def test_load_frames_empty_directory(tmp_path):
    with pytest.raises(FormatError):
        frames.load_frames(tmp_path)


def test_read_pgm_rejects_color(tmp_path):
    path = tmp_path / "color.ppm"
    path.write_bytes(b"P6\n16 16\n255\n" + bytes(16 * 16 * 3))
    with pytest.raises(FormatError):
        frames.read_pgm(path)


def test_read_pgm_rejects_garbage(tmp_path):
    path = tmp_path / "broken.pgm"
    path.write_bytes(b"not an image")
    with pytest.raises(FormatError):
        frames.read_pgm(path)
