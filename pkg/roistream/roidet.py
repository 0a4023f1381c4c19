"""Block-based Region of Interest detection for camera segments.

A segment is the list of frames a camera captures in one time slot. Its
Regions of Interest come from two sources:

- stationary objects, reported once per segment by a
  :class:`StationaryDetector` looking at the segment's first frame;
- moving objects, found by differencing the Canny edge maps of consecutive
  frames, counting changed edge pixels per block, and grouping the blocks
  that moved into connected components.

Both lists are kept side by side in a :class:`RoiSet`. Nothing here mutates
its inputs, so segments from different cameras can be processed in parallel.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import ndimage

from roistream.consts import MIN_FRAME_SIDE
from roistream.errors import DimensionError, GridError, InsufficientDataError

logger = logging.getLogger(__name__)

# 8-connectivity for both hysteresis and component labeling.
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class RoidetParams(BaseModel):
    """Tunables for the moving-object detector."""

    #: Weak-edge threshold on the Sobel gradient magnitude (0-255 input scale).
    canny_low: float = 50.0
    #: Strong-edge threshold on the Sobel gradient magnitude.
    canny_high: float = 150.0
    #: Side of the square Gaussian blur kernel. Must be odd.
    blur_size: int = Field(5, ge=1)
    #: Standard deviation of the Gaussian blur, in pixels.
    blur_sigma: float = Field(1.4, gt=0)
    #: Number of block rows (M).
    block_rows: int = Field(32, ge=1)
    #: Number of block columns (N).
    block_cols: int = Field(32, ge=1)
    #: A block moves if more than this many edge pixels changed in it.
    motion_threshold: int = Field(8, ge=1)
    #: If true, also difference the last frame against the first one so that
    #: the accumulated motion does not depend on where the cycle starts.
    wrap_segment: bool = True

    @model_validator(mode="after")
    def _check(self) -> "RoidetParams":
        if not self.canny_low < self.canny_high:
            raise ValueError("canny_low must be smaller than canny_high")
        if self.blur_size % 2 == 0:
            raise ValueError("blur_size must be odd")
        return self


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FrameGray:
    """A grayscale frame stored as a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise DimensionError(f"Expected a 2-D raster, got shape {pixels.shape}")
        height, width = pixels.shape
        if width < MIN_FRAME_SIDE or height < MIN_FRAME_SIDE:
            raise DimensionError(
                f"Frame is {width}x{height}; both sides must be at least {MIN_FRAME_SIDE}"
            )
        if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
            raise DimensionError("Luminance values must lie in [0, 255]")
        object.__setattr__(self, "pixels", _frozen(np.array(pixels, dtype=np.uint8)))

    @staticmethod
    def from_data(width: int, height: int, data: Sequence[int]) -> "FrameGray":
        """Build a frame from row-major luminance values."""
        if len(data) != width * height:
            raise DimensionError(
                f"Expected {width * height} values for a {width}x{height} frame, got {len(data)}"
            )
        return FrameGray(np.asarray(data).reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class EdgeMap:
    """A binary raster with 1 on edge pixels."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise DimensionError(f"Expected a 2-D raster, got shape {bits.shape}")
        if not np.all((bits == 0) | (bits == 1)):
            raise DimensionError("Edge maps must be strictly binary")
        object.__setattr__(self, "bits", _frozen(np.array(bits, dtype=np.uint8)))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class BlockGrid:
    """An M x N matrix of motion flags, one per block of the raster."""

    flags: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.flags)
        if flags.ndim != 2 or flags.shape[0] < 1 or flags.shape[1] < 1:
            raise GridError(f"Block grids need at least one row and column, got {flags.shape}")
        if not np.all((flags == 0) | (flags == 1)):
            raise GridError("Block grid flags must be strictly binary")
        object.__setattr__(self, "flags", _frozen(np.array(flags, dtype=bool)))

    @property
    def rows(self) -> int:
        return self.flags.shape[0]

    @property
    def cols(self) -> int:
        return self.flags.shape[1]

    def count(self) -> int:
        return int(self.flags.sum())


@dataclass(frozen=True)
class BoundingBox:
    """An axis-aligned pixel rectangle. (x, y) is the inclusive top-left."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise DimensionError(f"Box {self} must have a positive width and height")

    @property
    def right(self) -> int:
        """Exclusive right edge."""
        return self.x + self.w

    @property
    def bottom(self) -> int:
        """Exclusive bottom edge."""
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def fits(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.right <= width and self.bottom <= height

    def clip(self, width: int, height: int) -> "BoundingBox | None":
        """Intersect this box with the frame, or return ``None`` if they don't overlap."""
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.right, width), min(self.bottom, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class RoiSet:
    """The Regions of Interest of one segment."""

    stationary: tuple[BoundingBox, ...]
    moving: tuple[BoundingBox, ...]
    frame_width: int
    frame_height: int

    def __post_init__(self):
        for box in (*self.stationary, *self.moving):
            if not box.fits(self.frame_width, self.frame_height):
                raise DimensionError(
                    f"{box} lies outside the {self.frame_width}x{self.frame_height} frame"
                )

    @property
    def boxes(self) -> tuple[BoundingBox, ...]:
        return (*self.stationary, *self.moving)


@dataclass(frozen=True)
class Detection:
    """A stationary object reported by an on-camera detector."""

    box: BoundingBox
    confidence: float


class StationaryDetector(Protocol):
    """Reports stationary objects for a frame of the camera's stream."""

    def detect(self, frame_index: int) -> list[Detection]: ...


@dataclass(frozen=True)
class SegmentFeatures:
    """Content features a camera reports for one segment."""

    #: ROI-area ratio in [0, 1].
    a: float
    #: Mean stationary-detector confidence in [0, 1].
    c: float


@dataclass(frozen=True)
class SegmentResult:
    #: 0-indexed segment number.
    index: int
    #: Global index of the segment's first frame.
    first_frame: int
    rois: RoiSet
    features: SegmentFeatures


def gaussian_profile(size: int = 5, sigma: float = 1.4) -> np.ndarray:
    """Return a normalized 1-D Gaussian of length ``size``."""
    offsets = np.arange(size, dtype=np.float64) - size // 2
    profile = np.exp(-(offsets**2) / (2 * sigma**2))
    return profile / profile.sum()


def gaussian_kernel(size: int = 5, sigma: float = 1.4) -> np.ndarray:
    """Return a normalized ``size`` x ``size`` Gaussian kernel."""
    profile = gaussian_profile(size, sigma)
    return np.outer(profile, profile)


# tan(22.5 degrees), the edge between a straight and a diagonal direction.
_TAN_HALF_SECTOR = np.tan(np.pi / 8)


def _non_max_suppression(magnitude: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Zero every pixel that is not a local maximum along its gradient."""
    height, width = magnitude.shape
    padded = np.pad(magnitude, 1)

    def shifted(dy: int, dx: int) -> np.ndarray:
        return padded[1 + dy : 1 + dy + height, 1 + dx : 1 + dx + width]

    # Quantize the direction into 0, 45, 90, and 135 degrees. Rows grow
    # downward, so 45 degrees points down and to the right.
    ax, ay = np.abs(gx), np.abs(gy)
    horizontal = ay < _TAN_HALF_SECTOR * ax
    vertical = ax < _TAN_HALF_SECTOR * ay
    falling = (gx * gy) > 0

    def along(sign: int) -> np.ndarray:
        diagonal = np.where(falling, shifted(sign, sign), shifted(sign, -sign))
        straight = np.where(horizontal, shifted(0, sign), shifted(sign, 0))
        return np.where(horizontal | vertical, straight, diagonal)

    keep = (magnitude > 0) & (magnitude >= along(-1)) & (magnitude >= along(1))
    return np.where(keep, magnitude, 0.0)


def _hysteresis(suppressed: np.ndarray, low: float, high: float) -> np.ndarray:
    """Keep weak edges that are 8-connected to at least one strong edge."""
    weak = suppressed >= low
    strong = suppressed >= high
    labels, count = ndimage.label(weak, structure=EIGHT_CONNECTED)
    anchored = np.zeros(count + 1, dtype=bool)
    anchored[labels[strong]] = True
    anchored[0] = False
    return anchored[labels]


def canny_edges(frame: FrameGray, params: RoidetParams) -> EdgeMap:
    """Run the Canny edge detector over ``frame``.

    Stages: Gaussian blur, Sobel gradients, non-maximum suppression, and
    double thresholding with hysteresis. Borders are replicated. Both
    filters are separable and run one axis at a time.
    """
    if frame.width < MIN_FRAME_SIDE or frame.height < MIN_FRAME_SIDE:
        raise DimensionError(f"Frame is {frame.width}x{frame.height}; too small for edges")

    image = frame.pixels.astype(np.float64)
    profile = gaussian_profile(params.blur_size, params.blur_sigma)
    blurred = ndimage.correlate1d(image, profile, axis=0, mode="nearest")
    blurred = ndimage.correlate1d(blurred, profile, axis=1, mode="nearest")
    gx = ndimage.sobel(blurred, axis=1, mode="nearest")
    gy = ndimage.sobel(blurred, axis=0, mode="nearest")
    magnitude = np.hypot(gx, gy)

    suppressed = _non_max_suppression(magnitude, gx, gy)
    edges = _hysteresis(suppressed, params.canny_low, params.canny_high)
    return EdgeMap(edges.astype(np.uint8))


def edge_difference(prev: EdgeMap, cur: EdgeMap) -> EdgeMap:
    """Mark every pixel whose edge state changed between two maps."""
    if prev.bits.shape != cur.bits.shape:
        raise DimensionError(
            f"Edge maps differ in shape: {prev.bits.shape} vs. {cur.bits.shape}"
        )
    return EdgeMap(np.bitwise_xor(prev.bits, cur.bits))


def _block_starts(size: int, count: int) -> np.ndarray:
    """Start offsets of ``count`` near-equal tiles. The last tile takes the remainder."""
    return np.arange(count, dtype=np.int64) * (size // count)


def _block_edges(size: int, count: int) -> np.ndarray:
    return np.append(_block_starts(size, count), size)


def _check_grid_fits(rows: int, cols: int, width: int, height: int):
    if rows > height or cols > width:
        raise GridError(f"A {rows}x{cols} block grid doesn't fit a {width}x{height} raster")


def block_motion(delta: EdgeMap, params: RoidetParams) -> BlockGrid:
    """Flag blocks with more than ``motion_threshold`` changed edge pixels."""
    rows, cols = params.block_rows, params.block_cols
    _check_grid_fits(rows, cols, delta.width, delta.height)

    bits = delta.bits.astype(np.int64)
    per_row = np.add.reduceat(bits, _block_starts(delta.height, rows), axis=0)
    counts = np.add.reduceat(per_row, _block_starts(delta.width, cols), axis=1)
    return BlockGrid(counts > params.motion_threshold)


def accumulate_motion(per_frame_grids: Sequence[BlockGrid]) -> BlockGrid:
    """OR the per-frame grids of a segment into one grid."""
    if not per_frame_grids:
        raise InsufficientDataError("Need at least one block grid to accumulate")
    shape = per_frame_grids[0].flags.shape
    for grid in per_frame_grids:
        if grid.flags.shape != shape:
            raise GridError(f"Block grids differ in shape: {shape} vs. {grid.flags.shape}")
    return BlockGrid(np.logical_or.reduce([g.flags for g in per_frame_grids]))


def _label_components(flags: np.ndarray) -> np.ndarray:
    """Two-pass union-find labeling under 8-connectivity.

    :return: an int array where each component has a distinct positive label
        and background is 0.
    """
    rows, cols = flags.shape
    cells = flags.tolist()
    labels = [[0] * cols for _ in range(rows)]
    parent = [0]

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for r in range(rows):
        for c in range(cols):
            if not cells[r][c]:
                continue
            neighbors = []
            if c > 0 and labels[r][c - 1]:
                neighbors.append(labels[r][c - 1])
            if r > 0:
                above = labels[r - 1]
                for cc in (c - 1, c, c + 1):
                    if 0 <= cc < cols and above[cc]:
                        neighbors.append(above[cc])
            if not neighbors:
                parent.append(len(parent))
                labels[r][c] = len(parent) - 1
                continue
            smallest = min(neighbors)
            labels[r][c] = smallest
            for n in neighbors:
                union(smallest, n)

    roots = np.array([find(i) for i in range(len(parent))], dtype=np.int64)
    return roots[np.array(labels, dtype=np.int64)]


def connected_components(
    grid: BlockGrid, frame_width: int, frame_height: int
) -> list[BoundingBox]:
    """Return one pixel-space bounding box per 8-connected group of flagged blocks.

    Boxes are sorted by (y, x) and cover the full tiles of their blocks.
    """
    _check_grid_fits(grid.rows, grid.cols, frame_width, frame_height)
    labels = _label_components(grid.flags)
    row_edges = _block_edges(frame_height, grid.rows)
    col_edges = _block_edges(frame_width, grid.cols)

    boxes = []
    for label in np.unique(labels[labels > 0]):
        block_rows, block_cols = np.nonzero(labels == label)
        x = int(col_edges[block_cols.min()])
        y = int(row_edges[block_rows.min()])
        right = int(col_edges[block_cols.max() + 1])
        bottom = int(row_edges[block_rows.max() + 1])
        boxes.append(BoundingBox(x, y, right - x, bottom - y))
    return sorted(boxes, key=lambda b: (b.y, b.x, b.h, b.w))


def _check_segment(frames: Sequence[FrameGray]):
    if len(frames) < 2:
        raise InsufficientDataError(f"A segment needs at least 2 frames, got {len(frames)}")
    shape = frames[0].pixels.shape
    for frame in frames[1:]:
        if frame.pixels.shape != shape:
            raise DimensionError(
                f"Frames in a segment differ in shape: {shape} vs. {frame.pixels.shape}"
            )


def segment_motion(frames: Sequence[FrameGray], params: RoidetParams) -> BlockGrid:
    """Accumulate block motion over all consecutive frame pairs of a segment."""
    _check_segment(frames)
    edges = [canny_edges(f, params) for f in frames]
    pairs = list(zip(edges, edges[1:]))
    if params.wrap_segment and len(edges) > 2:
        pairs.append((edges[-1], edges[0]))
    grids = [block_motion(edge_difference(prev, cur), params) for prev, cur in pairs]
    return accumulate_motion(grids)


def roidet_segment(
    frames: Sequence[FrameGray],
    stationary_boxes: Sequence[BoundingBox],
    params: RoidetParams,
) -> RoiSet:
    """Detect the Regions of Interest of one segment.

    :param frames: the segment's frames, in capture order.
    :param stationary_boxes: boxes from the stationary detector. They are
        clipped to the frame; boxes entirely outside it are dropped.
    """
    _check_segment(frames)
    width, height = frames[0].width, frames[0].height

    motion = segment_motion(frames, params)
    moving = connected_components(motion, width, height)
    stationary = [clipped for b in stationary_boxes if (clipped := b.clip(width, height))]
    return RoiSet(
        stationary=tuple(stationary),
        moving=tuple(moving),
        frame_width=width,
        frame_height=height,
    )


def roi_mask(rois: RoiSet) -> np.ndarray:
    """Return a (height, width) boolean mask of the union of all ROI boxes."""
    mask = np.zeros((rois.frame_height, rois.frame_width), dtype=bool)
    for box in rois.boxes:
        mask[box.y : box.bottom, box.x : box.right] = True
    return mask


def roi_area_ratio(rois: RoiSet) -> float:
    """Union area of all boxes over the frame area. Overlaps count once."""
    mask = roi_mask(rois)
    return float(mask.sum()) / mask.size


def pixel_saving(rois: RoiSet) -> float:
    """Fraction of the frame that cropping to the ROIs removes."""
    return 1.0 - roi_area_ratio(rois)


def crop_to_rois(frame: FrameGray, rois: RoiSet) -> FrameGray:
    """Zero every pixel outside the ROI union."""
    if (frame.width, frame.height) != (rois.frame_width, rois.frame_height):
        raise DimensionError("ROI set and frame have different dimensions")
    return FrameGray(np.where(roi_mask(rois), frame.pixels, 0))


def mean_confidence(detections: Sequence[Detection]) -> float:
    """Aggregate detector confidences into the segment's ``c`` feature."""
    if not detections:
        return 0.0
    return float(np.mean([d.confidence for d in detections]))


def detect_segments(
    frames: Sequence[FrameGray],
    detector: StationaryDetector,
    params: RoidetParams,
    frames_per_segment: int,
) -> list[SegmentResult]:
    """Split a camera's frames into segments and detect ROIs in each.

    A trailing segment shorter than ``frames_per_segment`` is kept if it has
    at least two frames.
    """
    if frames_per_segment < 2:
        raise InsufficientDataError("Segments need at least 2 frames")

    results = []
    for index, start in enumerate(range(0, len(frames), frames_per_segment)):
        segment = frames[start : start + frames_per_segment]
        if len(segment) < 2:
            logger.warning(f"Dropping trailing segment {index} with {len(segment)} frame(s)")
            continue

        detections = detector.detect(start)
        rois = roidet_segment(segment, [d.box for d in detections], params)
        features = SegmentFeatures(a=roi_area_ratio(rois), c=mean_confidence(detections))
        logger.debug(
            f"Segment {index}: {len(rois.stationary)} stationary, "
            f"{len(rois.moving)} moving, a={features.a:.4f}"
        )
        results.append(
            SegmentResult(index=index, first_frame=start, rois=rois, features=features)
        )
    return results
