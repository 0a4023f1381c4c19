"""Read and write grayscale frames as binary PGM (P5) files."""

import logging
from pathlib import Path

import numpy as np
from PIL import Image

from roistream.errors import FormatError
from roistream.roidet import FrameGray

logger = logging.getLogger(__name__)


def read_pgm(path: Path | str) -> FrameGray:
    try:
        image = Image.open(path)
    except OSError as e:
        raise FormatError(f"Cannot read frame {path}: {e}") from e
    with image:
        if image.mode != "L":
            raise FormatError(f"{path} is not an 8-bit grayscale image (mode {image.mode})")
        return FrameGray(np.asarray(image))


def write_pgm(path: Path | str, frame: FrameGray):
    Image.fromarray(np.ascontiguousarray(frame.pixels)).save(path, format="PPM")


def load_frames(directory: Path | str) -> list[FrameGray]:
    """Load every ``*.pgm`` file in ``directory`` in lexicographic order."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.pgm"))
    if not paths:
        raise FormatError(f"No .pgm frames found in {directory}")
    logger.info(f"Loading {len(paths)} frames from {directory}")
    return [read_pgm(p) for p in paths]
