"""Elastic transmission.

When a slot carries unusually large Regions of Interest while bandwidth is
low, the scheduler borrows transmission capacity from future slots. It repays
the debt later, when bandwidth is plentiful. This module tracks the state
that drives that decision:

- a moving average of the total ROI-area ratio and its spread, which give the
  area threshold ``tau_a``;
- two bandwidth thresholds computed offline from profiling data: ``tau_wl``,
  below which borrowing is allowed, and ``tau_wh``, above which the debt is
  repaid;
- the amount currently borrowed, capped by a fixed budget.

Per slot, the simulator calls `ema_update` with the observed area first and
then `elastic_adjust`, and hands `effective_budget` to the allocator.
"""

import logging
import math
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace

import numpy as np
from pydantic import BaseModel, Field, model_validator

from roistream.errors import ConfigError, InsufficientDataError
from roistream.utility import ProfilingSample

logger = logging.getLogger(__name__)


class ElasticConfig(BaseModel):
    """Tunables for elastic transmission."""

    #: EMA smoothing factor.
    alpha: float = Field(0.2, gt=0, le=1)
    #: How many standard deviations above the average area counts as "large".
    gamma_a: float = Field(1.0, ge=0)
    #: Borrow multiplier.
    gamma_wl: float = Field(1.0, ge=0)
    #: Repay multiplier.
    gamma_wh: float = Field(1.0, ge=0)
    #: Accuracy-difference spread above which a bitrate is considered unreliable.
    sigma_high: float = Field(0.05, ge=0)
    #: Accuracy-difference spread below which a bitrate is considered sufficient.
    sigma_low: float = Field(0.01, ge=0)
    #: Most data that may be borrowed at once, in kbit. ``None`` means twice
    #: the mean trace bandwidth times the slot length, resolved per run.
    budget_cap: float | None = Field(None, ge=0)
    #: Slot length in seconds.
    slot_length: float = Field(1.0, gt=0)
    #: If set, the area spread only considers this many recent slots.
    window: int | None = Field(None, ge=2)

    @model_validator(mode="after")
    def check_cutoffs(self) -> "ElasticConfig":
        if self.sigma_low > self.sigma_high:
            raise ValueError(
                f"sigma_low ({self.sigma_low}) must not exceed sigma_high ({self.sigma_high})"
            )
        return self

    def with_budget_cap(self, mean_kbps: float) -> "ElasticConfig":
        """Resolve a missing budget cap from the mean available bandwidth."""
        if self.budget_cap is not None:
            return self
        return self.model_copy(update={"budget_cap": 2.0 * mean_kbps * self.slot_length})


@dataclass(frozen=True)
class ElasticState:
    """Everything elastic transmission remembers between slots."""

    #: Smoothed total ROI-area ratio.
    ema_a: float = 0.0
    #: Number of area observations so far.
    count: int = 0
    #: Running mean of the area observations (Welford).
    mean_a: float = 0.0
    #: Running sum of squared deviations (Welford).
    m2_a: float = 0.0
    #: Most recent observations, kept only when the config sets a window.
    recent: tuple[float, ...] = ()
    #: Borrowed and not yet repaid, in kbit.
    budget_used: float = 0.0
    #: Current area threshold.
    tau_a: float = 0.0
    #: Borrowing is allowed below this bandwidth, in kbps.
    tau_wl: float = 0.0
    #: Repayment happens at or above this bandwidth, in kbps.
    tau_wh: float = math.inf

    @property
    def sigma_a(self) -> float:
        if self.recent:
            return float(np.std(self.recent))
        if self.count == 0:
            return 0.0
        return math.sqrt(self.m2_a / self.count)


def initial_state(tau_wl: float, tau_wh: float) -> ElasticState:
    if tau_wl > tau_wh:
        logger.warning(f"Bandwidth thresholds are inverted: tau_wl={tau_wl} > tau_wh={tau_wh}")
    return ElasticState(tau_wl=tau_wl, tau_wh=tau_wh)


def ema_update(state: ElasticState, a_total: float, cfg: ElasticConfig) -> ElasticState:
    """Fold one slot's total ROI-area ratio into the average and the area threshold.

    The first observation seeds the average.
    """
    if a_total < 0:
        raise ValueError(f"Area ratio must be non-negative, got {a_total}")

    if state.count == 0:
        ema = a_total
    else:
        ema = cfg.alpha * a_total + (1.0 - cfg.alpha) * state.ema_a

    count = state.count + 1
    delta = a_total - state.mean_a
    mean = state.mean_a + delta / count
    m2 = state.m2_a + delta * (a_total - mean)

    recent: tuple[float, ...] = ()
    if cfg.window is not None:
        recent = (*state.recent, a_total)[-cfg.window :]

    updated = replace(state, ema_a=ema, count=count, mean_a=mean, m2_a=m2, recent=recent)
    return replace(updated, tau_a=ema + cfg.gamma_a * updated.sigma_a)


class CameraThreshold(BaseModel):
    camera: int
    #: Largest bitrate whose accuracy is still unreliable.
    low_bitrate: float
    #: Smallest bitrate whose accuracy is already close to the best.
    high_bitrate: float
    #: Standard deviation of the accuracy gap to the top bitrate, per bitrate.
    spread: dict[float, float]


class BandwidthThresholds(BaseModel):
    """Result of `compute_bandwidth_thresholds`."""

    tau_wl: float
    tau_wh: float
    cameras: list[CameraThreshold]
    #: Whether tau_wl exceeds tau_wh.
    inverted: bool = False


def profiling_accuracy_by_bitrate(
    samples: Sequence[ProfilingSample],
) -> dict[int, dict[float, list[float]]]:
    """Per camera and bitrate, the accuracy of each profiling segment.

    Each bitrate uses the resolution with the highest mean accuracy, ties
    going to the lowest resolution. Only segments profiled at every chosen
    configuration are kept, in segment order.
    """
    # camera -> bitrate -> resolution -> segment -> accuracies
    table: dict = defaultdict(lambda: defaultdict(lambda: defaultdict(dict)))
    for s in samples:
        table[s.camera][s.bitrate][s.resolution].setdefault(s.segment, []).append(s.accuracy)

    result = {}
    for camera in sorted(table):
        chosen: dict[float, dict[int, float]] = {}
        for bitrate in sorted(table[camera]):
            by_resolution = table[camera][bitrate]
            means = {
                r: float(np.mean([np.mean(v) for v in segments.values()]))
                for r, segments in by_resolution.items()
            }
            best = max(sorted(means), key=lambda r: means[r])
            chosen[bitrate] = {seg: float(np.mean(v)) for seg, v in by_resolution[best].items()}

        common = set.intersection(*(set(v) for v in chosen.values()))
        result[camera] = {b: [v[seg] for seg in sorted(common)] for b, v in chosen.items()}
    return result


def compute_bandwidth_thresholds(
    profiling: Mapping[int, Mapping[float, Sequence[float]]], cfg: ElasticConfig
) -> BandwidthThresholds:
    """Derive the borrow and repay bandwidth thresholds from profiling accuracy.

    For each camera and bitrate, this measures the population standard
    deviation, over segments, of the accuracy lost relative to the camera's
    highest bitrate. The camera's low threshold is the largest bitrate whose
    spread exceeds ``sigma_high`` (else its smallest bitrate). Its high
    threshold is the smallest bitrate whose spread is below ``sigma_low``
    (else its largest bitrate). Both global thresholds sum over cameras.

    :param profiling: camera -> bitrate -> per-segment accuracy.
    :raises InsufficientDataError: if a camera has fewer than two segments or
        its bitrates disagree on the segment count.
    """
    if not profiling:
        raise InsufficientDataError("No profiling data for bandwidth thresholds")

    cameras = []
    for camera in sorted(profiling):
        by_bitrate = profiling[camera]
        if not by_bitrate:
            raise InsufficientDataError(f"Camera {camera} has no profiled bitrates")
        bitrates = sorted(by_bitrate)
        lengths = {len(by_bitrate[b]) for b in bitrates}
        if len(lengths) != 1 or lengths.pop() < 2:
            raise InsufficientDataError(
                f"Camera {camera} needs at least two segments at every bitrate"
            )

        top = np.asarray(by_bitrate[bitrates[-1]], dtype=np.float64)
        spread = {
            b: float(np.std(top - np.asarray(by_bitrate[b], dtype=np.float64))) for b in bitrates
        }
        noisy = [b for b in bitrates if spread[b] > cfg.sigma_high]
        flat = [b for b in bitrates if spread[b] < cfg.sigma_low]
        cameras.append(
            CameraThreshold(
                camera=camera,
                low_bitrate=noisy[-1] if noisy else bitrates[0],
                high_bitrate=flat[0] if flat else bitrates[-1],
                spread=spread,
            )
        )

    tau_wl = float(sum(c.low_bitrate for c in cameras))
    tau_wh = float(sum(c.high_bitrate for c in cameras))
    inverted = tau_wl > tau_wh
    if inverted:
        logger.warning(f"Bandwidth thresholds are inverted: tau_wl={tau_wl} > tau_wh={tau_wh}")
    logger.info(f"Bandwidth thresholds: tau_wl={tau_wl} kbps, tau_wh={tau_wh} kbps")
    return BandwidthThresholds(tau_wl=tau_wl, tau_wh=tau_wh, cameras=cameras, inverted=inverted)


def elastic_adjust(
    state: ElasticState, a_total: float, available: float, cfg: ElasticConfig
) -> tuple[float, ElasticState]:
    """Decide how much to borrow (positive) or repay (negative) this slot.

    :param a_total: this slot's total ROI-area ratio.
    :param available: this slot's bandwidth in kbps.
    :return: the signed amount in kbit, and the updated state.
    """
    if cfg.budget_cap is None:
        raise ConfigError("ElasticConfig.budget_cap must be resolved before adjusting")
    cap = cfg.budget_cap
    used = state.budget_used

    if a_total > state.tau_a and available < state.tau_wl:
        d = max(0.0, min(cfg.gamma_wl * (state.tau_wl - available) * cfg.slot_length, cap - used))
    elif available >= state.tau_wh:
        d = -min(cfg.gamma_wh * (available - state.tau_wh) * cfg.slot_length, used)
    else:
        d = 0.0
    if d == 0:
        # Also turns -0.0 into 0.0.
        d = 0.0

    used = min(max(used + d, 0.0), cap)
    return d, replace(state, budget_used=used)


def effective_budget(available: float, d: float, cfg: ElasticConfig) -> float:
    """The bitrate budget for the allocator after borrowing or repaying ``d`` kbit."""
    return available + d / cfg.slot_length
