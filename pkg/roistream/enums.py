from enum import StrEnum


class Scheduler(StrEnum):
    """Defines the per-slot allocation policies."""

    #: Content-aware dynamic programming over the current bandwidth.
    DP = "dp"
    #: Content-aware dynamic programming with elastic transmission.
    DP_ELASTIC = "dp+elastic"
    #: Equal share of the bandwidth for every camera.
    FAIR = "fair"
    #: Dynamic programming over profile-average utility tables.
    AGNOSTIC = "agnostic"


class TraceProfile(StrEnum):
    """Defines the synthetic bandwidth conditions."""

    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class RoiKind(StrEnum):
    """Defines the source of a Region of Interest."""

    #: Reported by the stationary object detector.
    STATIONARY = "stationary"
    #: Found by the block-based motion detector.
    MOVING = "moving"
    #: Per-segment summary row in the ROI output file.
    SUMMARY = "summary"


class WeightPreset(StrEnum):
    """Defines the built-in camera weight sets."""

    UNIFORM = "uniform"
    SET2 = "set2"
    SET3 = "set3"
