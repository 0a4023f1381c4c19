import numpy as np
import pytest

from roistream.roidet import FrameGray, RoidetParams
from roistream.sim.scenario import generate_synthetic_scenario


def _square_frame(width: int, height: int, x: int, y: int, size: int = 8) -> FrameGray:
    pixels = np.full((height, width), 20, dtype=np.uint8)
    pixels[y : y + size, x : x + size] = 230
    return FrameGray(pixels)


@pytest.fixture
def square_frame():
    """Factory for a dark frame with one bright square whose top-left corner is (x, y)."""
    return _square_frame


@pytest.fixture
def moving_params():
    # 10x10 pixel tiles on a 320x240 frame.
    return RoidetParams(block_rows=24, block_cols=32, motion_threshold=8)


@pytest.fixture
def moving_frames():
    """320x240 frames of an 8x8 square moving right by 4 pixels per frame."""
    return [_square_frame(320, 240, 101 + 4 * i, 101) for i in range(10)]


@pytest.fixture(scope="session")
def small_scenario():
    return generate_synthetic_scenario(seed=7, cameras=3, horizon=30, profiling_slots=20)
