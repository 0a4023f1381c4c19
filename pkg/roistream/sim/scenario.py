"""Per-camera content features and ground-truth accuracy.

A scenario holds everything the simulator needs besides the bandwidth trace.
For each camera it stores the per-slot ROI-area ratio ``a``, the detector
confidence ``c``, and the accuracy that each (bitrate, resolution) option
would actually achieve. It also holds the profiling samples that utility
models are trained on.

On disk, a scenario is a directory with three CSV files:

- ``features.csv``: ``slot,camera,a,c``
- ``ground_truth.csv``: ``slot,camera,bitrate,resolution,accuracy``
- ``profiling.csv``: the utility module's profiling format
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from roistream.consts import DEFAULT_BITRATES, DEFAULT_RESOLUTIONS
from roistream.errors import FormatError, InsufficientDataError
from roistream.sim.traces import ar1
from roistream.utility import ProfilingSample, load_profiling_csv, write_profiling_csv
from roistream.utils.files import read_csv, write_csv

logger = logging.getLogger(__name__)

FEATURE_COLUMNS = ("slot", "camera", "a", "c")
GROUND_TRUTH_COLUMNS = ("slot", "camera", "bitrate", "resolution", "accuracy")

#: Lag-one autocorrelation of the shared traffic intensity.
LATENT_RHO = 0.9

#: Scale of the per-segment accuracy drop at bitrate zero.
ACCURACY_NOISE = 0.25
#: The accuracy drop fades out linearly and vanishes at this bitrate.
NOISE_FADE_KBPS = 500.0


@dataclass(frozen=True, eq=False)
class FeatureStream:
    """One camera's evaluation slots."""

    camera_id: int
    #: (slots,) ROI-area ratio.
    a: np.ndarray
    #: (slots,) detector confidence.
    c: np.ndarray
    #: (slots, bitrates, resolutions) accuracy each option achieves.
    ground_truth: np.ndarray

    def __post_init__(self):
        for name in ("a", "c", "ground_truth"):
            array = np.array(getattr(self, name), dtype=np.float64)
            if np.any((array < 0) | (array > 1)) or not np.all(np.isfinite(array)):
                raise ValueError(f"Camera {self.camera_id}: {name} must lie in [0, 1]")
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if self.a.ndim != 1 or self.a.shape != self.c.shape:
            raise ValueError(f"Camera {self.camera_id}: a and c must be equal-length vectors")
        if self.ground_truth.ndim != 3 or self.ground_truth.shape[0] != self.a.size:
            raise ValueError(
                f"Camera {self.camera_id}: ground truth must have one table per slot"
            )

    def __len__(self) -> int:
        return self.a.size


@dataclass(frozen=True)
class Scenario:
    streams: tuple[FeatureStream, ...]
    bitrates: tuple[int, ...] = DEFAULT_BITRATES
    resolutions: tuple[int, ...] = DEFAULT_RESOLUTIONS
    profiling: tuple[ProfilingSample, ...] = field(default=())

    def __post_init__(self):
        if not self.streams:
            raise InsufficientDataError("A scenario needs at least one camera")
        lengths = {len(s) for s in self.streams}
        if len(lengths) != 1:
            raise ValueError(f"Feature streams disagree in length: {sorted(lengths)}")
        shape = (len(self.bitrates), len(self.resolutions))
        for s in self.streams:
            if s.ground_truth.shape[1:] != shape:
                raise ValueError(
                    f"Camera {s.camera_id}: ground-truth tables have shape "
                    f"{s.ground_truth.shape[1:]}, expected {shape}"
                )
        ids = [s.camera_id for s in self.streams]
        if ids != sorted(set(ids)):
            raise ValueError(f"Camera ids must be unique and ascending, got {ids}")

    @property
    def horizon(self) -> int:
        return len(self.streams[0])

    @property
    def camera_ids(self) -> tuple[int, ...]:
        return tuple(s.camera_id for s in self.streams)


def accuracy_law(
    a: np.ndarray,
    c: np.ndarray,
    bitrates: Sequence[int],
    resolutions: Sequence[int],
    difficulty: float = 1.0,
) -> np.ndarray:
    """Synthetic detection accuracy for every slot and option.

    Accuracy saturates in the bitrate. Larger ROI areas need more bits to
    saturate, so accuracy falls as ``a`` grows. Higher resolutions reach a
    higher ceiling but need more bits. Low detector confidence scales the
    whole curve down.

    :return: a (slots, bitrates, resolutions) array.
    """
    levels = len(resolutions)
    ceiling = np.linspace(0.8, 0.97, levels) if levels > 1 else np.array([0.9])
    need = np.linspace(1.0, 2.5, levels) if levels > 1 else np.array([1.0])

    a = np.asarray(a, dtype=np.float64)[:, None, None]
    c = np.asarray(c, dtype=np.float64)[:, None, None]
    b = np.asarray(bitrates, dtype=np.float64)[None, :, None]
    knee = 120.0 * difficulty * need[None, None, :] * (0.5 + 2.0 * a)
    return ceiling[None, None, :] * (0.6 + 0.4 * c) * (1.0 - np.exp(-b / knee))


def accuracy_noise_scale(bitrates: Sequence[int], noise: float = ACCURACY_NOISE) -> np.ndarray:
    """Per-bitrate scale of the segment-level accuracy drop.

    Low bitrates lose an unpredictable amount of accuracy per segment; from
    `NOISE_FADE_KBPS` on, the loss is gone. The scale never grows with
    the bitrate, so a shared drop keeps accuracy non-decreasing in bitrate.
    """
    b = np.asarray(bitrates, dtype=np.float64)
    return noise * np.clip(1.0 - b / NOISE_FADE_KBPS, 0.0, None)


def generate_synthetic_scenario(
    seed: int,
    cameras: int,
    horizon: int,
    profiling_slots: int = 80,
    bitrates: Sequence[int] = DEFAULT_BITRATES,
    resolutions: Sequence[int] = DEFAULT_RESOLUTIONS,
    noise: float = ACCURACY_NOISE,
) -> Scenario:
    """Generate correlated camera content with its ground-truth accuracy.

    A shared traffic intensity drives every camera's ROI area, with small
    independent noise on top, so the cameras' areas move together. The first
    ``profiling_slots`` slots become profiling samples at every option; the
    following ``horizon`` slots become the evaluation streams.

    Every segment also draws one accuracy drop, scaled per bitrate by
    `accuracy_noise_scale`. ``noise=0`` leaves the plain `accuracy_law`.
    """
    if cameras < 1:
        raise InsufficientDataError(f"Need at least one camera, got {cameras}")
    if horizon < 1:
        raise InsufficientDataError(f"Need a positive horizon, got {horizon}")
    if noise < 0:
        raise ValueError(f"Accuracy noise must be non-negative, got {noise}")

    rng = np.random.default_rng(seed)
    total = profiling_slots + horizon
    latent = ar1(rng, LATENT_RHO, total)
    # Independent of the content draws.
    noise_rng = np.random.default_rng([seed, 1])
    scale = accuracy_noise_scale(bitrates, noise)

    streams = []
    profiling = []
    for camera in range(cameras):
        level = rng.uniform(0.08, 0.25)
        swing = rng.uniform(0.06, 0.12)
        difficulty = rng.uniform(0.7, 1.5)
        a = np.clip(level + swing * latent + rng.normal(0.0, 0.015, total), 0.01, 0.9)
        c = np.clip(0.9 - 0.8 * a + rng.normal(0.0, 0.03, total), 0.05, 0.99)
        drop = np.abs(noise_rng.standard_normal(total))[:, None, None] * scale[None, :, None]
        truth = np.clip(accuracy_law(a, c, bitrates, resolutions, difficulty) - drop, 0.0, 1.0)

        for slot in range(profiling_slots):
            for i, b in enumerate(bitrates):
                for j, r in enumerate(resolutions):
                    profiling.append(
                        ProfilingSample(
                            a=float(a[slot]),
                            c=float(c[slot]),
                            bitrate=float(b),
                            resolution=int(r),
                            accuracy=float(truth[slot, i, j]),
                            camera=camera,
                            segment=slot,
                        )
                    )
        streams.append(
            FeatureStream(
                camera_id=camera,
                a=a[profiling_slots:],
                c=c[profiling_slots:],
                ground_truth=truth[profiling_slots:],
            )
        )

    logger.debug(f"Generated scenario: seed={seed}, cameras={cameras}, horizon={horizon}")
    return Scenario(
        streams=tuple(streams),
        bitrates=tuple(int(b) for b in bitrates),
        resolutions=tuple(int(r) for r in resolutions),
        profiling=tuple(profiling),
    )


def write_scenario(directory: Path | str, scenario: Scenario):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    features = []
    truth = []
    for slot in range(scenario.horizon):
        for s in scenario.streams:
            features.append((slot, s.camera_id, float(s.a[slot]), float(s.c[slot])))
            for i, b in enumerate(scenario.bitrates):
                for j, r in enumerate(scenario.resolutions):
                    truth.append((slot, s.camera_id, b, r, float(s.ground_truth[slot, i, j])))
    write_csv(directory / "features.csv", FEATURE_COLUMNS, features)
    write_csv(directory / "ground_truth.csv", GROUND_TRUTH_COLUMNS, truth)
    write_profiling_csv(directory / "profiling.csv", scenario.profiling)


def load_scenario(directory: Path | str) -> Scenario:
    """Read a scenario directory written by `write_scenario` or by hand.

    ``profiling.csv`` is optional.
    """
    directory = Path(directory)
    try:
        features = [
            (int(r["slot"]), int(r["camera"]), float(r["a"]), float(r["c"]))
            for r in read_csv(directory / "features.csv", FEATURE_COLUMNS)
        ]
        truth = [
            (int(r["slot"]), int(r["camera"]), int(r["bitrate"]), int(r["resolution"]),
             float(r["accuracy"]))
            for r in read_csv(directory / "ground_truth.csv", GROUND_TRUTH_COLUMNS)
        ]
    except ValueError as e:
        raise FormatError(f"{directory}: {e}") from e

    cameras = sorted({camera for _, camera, _, _ in features})
    slots = sorted({slot for slot, _, _, _ in features})
    bitrates = sorted({b for _, _, b, _, _ in truth})
    resolutions = sorted({r for _, _, _, r, _ in truth})
    if not cameras:
        raise FormatError(f"{directory}/features.csv has no rows")
    if slots != list(range(len(slots))):
        raise FormatError(f"{directory}/features.csv: slots must be 0, 1, 2, ... without gaps")

    cam_index = {camera: k for k, camera in enumerate(cameras)}
    b_index = {b: i for i, b in enumerate(bitrates)}
    r_index = {r: j for j, r in enumerate(resolutions)}
    a = np.full((len(cameras), len(slots)), np.nan)
    c = np.full_like(a, np.nan)
    gt = np.full((len(cameras), len(slots), len(bitrates), len(resolutions)), np.nan)
    for slot, camera, a_value, c_value in features:
        a[cam_index[camera], slot] = a_value
        c[cam_index[camera], slot] = c_value
    for slot, camera, b, r, accuracy in truth:
        if camera not in cam_index or not 0 <= slot < len(slots):
            raise FormatError(f"{directory}/ground_truth.csv: unknown slot {slot} or camera {camera}")
        gt[cam_index[camera], slot, b_index[b], r_index[r]] = accuracy
    if np.isnan(a).any() or np.isnan(gt).any():
        raise FormatError(f"{directory}: every camera needs every slot and option")

    profiling_path = directory / "profiling.csv"
    profiling = load_profiling_csv(profiling_path) if profiling_path.exists() else []

    try:
        return Scenario(
            streams=tuple(
                FeatureStream(camera_id=camera, a=a[k], c=c[k], ground_truth=gt[k])
                for k, camera in enumerate(cameras)
            ),
            bitrates=tuple(bitrates),
            resolutions=tuple(resolutions),
            profiling=tuple(profiling),
        )
    except ValueError as e:
        raise FormatError(f"{directory}: {e}") from e
