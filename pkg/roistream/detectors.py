"""Stationary object detectors.

On a camera, a light CNN detector reports objects once per segment. Here the
detector is replaced by an oracle that replays recorded detections.
"""

from collections import defaultdict
from pathlib import Path

from roistream.errors import FormatError
from roistream.roidet import BoundingBox, Detection
from roistream.utils.files import read_csv

ORACLE_COLUMNS = ("frame", "x", "y", "w", "h", "confidence")


class NullDetector:
    """A detector that never reports anything."""

    def detect(self, frame_index: int) -> list[Detection]:
        return []


class OracleDetector:
    """Replay detections from a CSV file with global frame indices."""

    def __init__(self, detections: dict[int, list[Detection]]):
        self.detections = detections

    @staticmethod
    def from_csv(path: Path | str) -> "OracleDetector":
        """Load detections from a CSV with header ``frame,x,y,w,h,confidence``."""
        by_frame: dict[int, list[Detection]] = defaultdict(list)
        for i, row in enumerate(read_csv(path, ORACLE_COLUMNS)):
            try:
                box = BoundingBox(int(row["x"]), int(row["y"]), int(row["w"]), int(row["h"]))
                confidence = float(row["confidence"])
                frame = int(row["frame"])
            except ValueError as e:
                raise FormatError(f"{path}, row {i + 2}: {e}") from e
            if not 0.0 <= confidence <= 1.0:
                raise FormatError(f"{path}, row {i + 2}: confidence must lie in [0, 1]")
            by_frame[frame].append(Detection(box=box, confidence=confidence))
        return OracleDetector(dict(by_frame))

    def detect(self, frame_index: int) -> list[Detection]:
        return list(self.detections.get(frame_index, []))
