"""Slot-by-slot simulation of the scheduling loop.

For every slot, the runner reads the available bandwidth and each camera's
content features, optionally borrows or repays bandwidth, builds every
camera's utility table, runs the scheduler, and scores the decision against
the scenario's ground truth.
"""

import logging
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from pydantic import BaseModel, Field, model_validator

from roistream.alloc import (
    AllocationDecision,
    CameraOptions,
    DpParams,
    allocate_content_agnostic,
    allocate_dp,
    allocate_fair,
    compute_quantum,
)
from roistream.consts import (
    DEFAULT_BITRATES,
    DEFAULT_FRAMES_PER_SLOT,
    DEFAULT_RESOLUTIONS,
    DEFAULT_SLOT_LENGTH,
    WEIGHT_PRESETS,
)
from roistream.elastic import (
    BandwidthThresholds,
    ElasticConfig,
    compute_bandwidth_thresholds,
    effective_budget,
    elastic_adjust,
    ema_update,
    initial_state,
    profiling_accuracy_by_bitrate,
)
from roistream.enums import Scheduler, TraceProfile, WeightPreset
from roistream.errors import ConfigError, HorizonMismatchError, UntrainedModelError
from roistream.sim.scenario import Scenario, generate_synthetic_scenario
from roistream.sim.traces import BandwidthTrace, generate_trace
from roistream.utility import ProfilingSample, UtilityModel, group_by_camera, tabulate_utility
from roistream.utils.files import write_csv

logger = logging.getLogger(__name__)

SLOT_COLUMNS = ("slot", "available", "effective", "D", "budget_used", "predicted", "realized")
CAMERA_COLUMNS = ("slot", "camera", "bitrate", "resolution", "predicted", "realized")
COMPARISON_COLUMNS = (
    "trace",
    "scheduler",
    "mean_utility",
    "mean_allocated_kbps",
    "mean_available_kbps",
    "borrow_slots",
    "repay_slots",
)
GAP_COLUMNS = ("seed", "trace", "dp_elastic", "fair", "gap")


class SimConfig(BaseModel):
    """Simulation settings."""

    #: Slot length in seconds.
    slot_length: float = Field(DEFAULT_SLOT_LENGTH, gt=0)
    #: Frames captured per slot.
    frames_per_slot: int = Field(DEFAULT_FRAMES_PER_SLOT, ge=2)
    bitrates: list[int] = Field(default_factory=lambda: list(DEFAULT_BITRATES))
    resolutions: list[int] = Field(default_factory=lambda: list(DEFAULT_RESOLUTIONS))
    #: Camera count for generated scenarios.
    cameras: int = Field(5, ge=1)
    #: Per-camera weights, or the name of a built-in weight set.
    weights: list[float] | WeightPreset = WeightPreset.UNIFORM
    scheduler: Scheduler = Scheduler.DP
    seed: int = 0
    #: Evaluation slots.
    horizon: int = Field(120, ge=1)
    #: Profiling slots that precede the evaluation slots in generated scenarios.
    profiling_slots: int = Field(80, ge=2)
    #: DP budget unit in kbps. ``None`` means the gcd of the bitrate options.
    quantum: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def check_options(self) -> "SimConfig":
        if not self.bitrates or not self.resolutions:
            raise ValueError("bitrates and resolutions must be non-empty")
        if isinstance(self.weights, list) and any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        return self

    def camera_weights(self, count: int) -> list[float]:
        """The weight of each of ``count`` cameras, in camera order."""
        if self.weights == WeightPreset.UNIFORM:
            return [1.0] * count
        if isinstance(self.weights, WeightPreset):
            weights = list(WEIGHT_PRESETS[self.weights])
        else:
            weights = list(self.weights)
        if len(weights) != count:
            raise ConfigError(f"Got {len(weights)} weights for {count} cameras")
        return weights


class UtilitySource(Protocol):
    """Where the scheduler's utility tables come from."""

    def table(self, camera: int, slot: int, a: float, c: float) -> np.ndarray: ...

    def average_table(self, camera: int) -> np.ndarray: ...


def _average_over_profiling(
    samples: Sequence[ProfilingSample], bitrates: Sequence[int], resolutions: Sequence[int]
) -> np.ndarray:
    """Mean profiled accuracy per (bitrate, resolution)."""
    totals = np.zeros((len(bitrates), len(resolutions)))
    counts = np.zeros_like(totals)
    b_index = {float(b): i for i, b in enumerate(bitrates)}
    r_index = {r: j for j, r in enumerate(resolutions)}
    for s in samples:
        i, j = b_index.get(float(s.bitrate)), r_index.get(s.resolution)
        if i is not None and j is not None:
            totals[i, j] += s.accuracy
            counts[i, j] += 1
    return np.divide(totals, counts, out=np.zeros_like(totals), where=counts > 0)


class GroundTruthUtility:
    """Use the scenario's ground truth as the utility model."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._streams = {s.camera_id: s for s in scenario.streams}
        by_camera = group_by_camera(scenario.profiling)
        self._averages = {}
        for camera, stream in self._streams.items():
            if camera in by_camera:
                average = _average_over_profiling(
                    by_camera[camera], scenario.bitrates, scenario.resolutions
                )
            else:
                average = stream.ground_truth.mean(axis=0)
            self._averages[camera] = average

    def table(self, camera: int, slot: int, a: float, c: float) -> np.ndarray:
        return self._streams[camera].ground_truth[slot]

    def average_table(self, camera: int) -> np.ndarray:
        return self._averages[camera]


class LearnedUtility:
    """Use trained per-camera utility models.

    The content-agnostic table of a camera is its model's prediction averaged
    over the distinct (a, c) pairs of that camera's profiling data.
    """

    def __init__(
        self,
        models: Mapping[int, UtilityModel],
        bitrates: Sequence[int],
        resolutions: Sequence[int],
        profiling: Sequence[ProfilingSample] = (),
    ):
        self.models = dict(models)
        self.bitrates = list(bitrates)
        self.resolutions = list(resolutions)
        self._profiled = {
            camera: sorted({(s.a, s.c) for s in samples})
            for camera, samples in group_by_camera(profiling).items()
        }
        self._averages: dict[int, np.ndarray] = {}

    def _model(self, camera: int) -> UtilityModel:
        try:
            return self.models[camera]
        except KeyError:
            raise UntrainedModelError(f"No utility model for camera {camera}") from None

    def table(self, camera: int, slot: int, a: float, c: float) -> np.ndarray:
        return tabulate_utility(self._model(camera), a, c, self.bitrates, self.resolutions)

    def average_table(self, camera: int) -> np.ndarray:
        if camera not in self._averages:
            model = self._model(camera)
            pairs = self._profiled.get(camera)
            if not pairs:
                raise UntrainedModelError(f"No profiling data to average for camera {camera}")
            tables = [tabulate_utility(model, a, c, self.bitrates, self.resolutions) for a, c in pairs]
            self._averages[camera] = np.mean(tables, axis=0)
        return self._averages[camera]


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    #: Bandwidth from the trace, in kbps.
    available: float
    #: Budget handed to the scheduler, in kbps.
    effective: float
    #: Borrowed (positive) or repaid (negative) kbit.
    borrowed: float
    #: Outstanding debt after this slot, in kbit.
    budget_used: float
    decision: AllocationDecision
    #: Per-camera ground-truth accuracy of the chosen options.
    realized: tuple[float, ...]
    #: Weighted sum of `realized`.
    realized_utility: float

    @property
    def predicted_utility(self) -> float:
        return self.decision.total_utility


@dataclass(frozen=True)
class SimReport:
    scheduler: Scheduler
    trace: str
    camera_ids: tuple[int, ...]
    slots: tuple[SlotRecord, ...]

    @property
    def mean_utility(self) -> float:
        """Mean realized segment utility over all slots."""
        return float(np.mean([s.realized_utility for s in self.slots]))

    @property
    def per_camera_accuracy(self) -> dict[int, float]:
        realized = np.array([s.realized for s in self.slots])
        return {camera: float(realized[:, k].mean()) for k, camera in enumerate(self.camera_ids)}

    @property
    def borrow_slots(self) -> int:
        return sum(1 for s in self.slots if s.borrowed > 0)

    @property
    def repay_slots(self) -> int:
        return sum(1 for s in self.slots if s.borrowed < 0)

    @property
    def total_borrowed(self) -> float:
        return sum(s.borrowed for s in self.slots if s.borrowed > 0)

    @property
    def total_repaid(self) -> float:
        return -sum(s.borrowed for s in self.slots if s.borrowed < 0)

    @property
    def peak_budget_used(self) -> float:
        return max(s.budget_used for s in self.slots)

    @property
    def mean_allocated_kbps(self) -> float:
        return float(np.mean([s.decision.total_bitrate for s in self.slots]))

    @property
    def mean_available_kbps(self) -> float:
        return float(np.mean([s.available for s in self.slots]))

    def summary(self) -> dict:
        return {
            "scheduler": str(self.scheduler),
            "trace": self.trace,
            "slots": len(self.slots),
            "mean_utility": self.mean_utility,
            "per_camera_accuracy": {str(k): v for k, v in self.per_camera_accuracy.items()},
            "mean_allocated_kbps": self.mean_allocated_kbps,
            "mean_available_kbps": self.mean_available_kbps,
            "borrow_slots": self.borrow_slots,
            "repay_slots": self.repay_slots,
            "total_borrowed": self.total_borrowed,
            "total_repaid": self.total_repaid,
            "peak_budget_used": self.peak_budget_used,
        }

    def slot_rows(self) -> list[tuple]:
        return [
            (
                s.slot,
                s.available,
                s.effective,
                s.borrowed,
                s.budget_used,
                s.predicted_utility,
                s.realized_utility,
            )
            for s in self.slots
        ]

    def camera_rows(self) -> list[tuple]:
        rows = []
        for s in self.slots:
            for choice, realized in zip(s.decision.choices, s.realized):
                resolution = "" if choice.resolution is None else choice.resolution
                rows.append(
                    (s.slot, choice.camera_id, choice.bitrate, resolution,
                     choice.predicted_accuracy, realized)
                )
        return rows


def _check_inputs(cfg: SimConfig, trace: BandwidthTrace, scenario: Scenario):
    if len(trace) < cfg.horizon:
        raise HorizonMismatchError(
            f"Trace {trace.name!r} has {len(trace)} slots, horizon is {cfg.horizon}"
        )
    if scenario.horizon < cfg.horizon:
        raise HorizonMismatchError(
            f"Scenario has {scenario.horizon} slots, horizon is {cfg.horizon}"
        )
    if tuple(cfg.bitrates) != scenario.bitrates or tuple(cfg.resolutions) != scenario.resolutions:
        raise ConfigError(
            f"Configured options {cfg.bitrates} x {cfg.resolutions} do not match the "
            f"scenario's {list(scenario.bitrates)} x {list(scenario.resolutions)}"
        )


def scenario_thresholds(scenario: Scenario, elastic_cfg: ElasticConfig) -> BandwidthThresholds:
    return compute_bandwidth_thresholds(
        profiling_accuracy_by_bitrate(scenario.profiling), elastic_cfg
    )


def run_simulation(
    cfg: SimConfig,
    trace: BandwidthTrace,
    scenario: Scenario,
    utility: UtilitySource,
    elastic_cfg: ElasticConfig,
    thresholds: BandwidthThresholds | None = None,
) -> SimReport:
    """Replay ``cfg.horizon`` slots of ``trace`` and ``scenario`` through one scheduler.

    :param thresholds: bandwidth thresholds for elastic transmission. If
        omitted, they are computed from the scenario's profiling samples.
    :raises HorizonMismatchError: if the trace or scenario is too short.
    :raises UntrainedModelError: if ``utility`` has no model for a camera.
    """
    _check_inputs(cfg, trace, scenario)
    weights = cfg.camera_weights(len(scenario.streams))
    averages = {}
    if cfg.scheduler == Scheduler.AGNOSTIC:
        averages = {s.camera_id: utility.average_table(s.camera_id) for s in scenario.streams}
    options_template = [
        CameraOptions(
            camera_id=s.camera_id,
            weight=w,
            utility_table=np.zeros((len(cfg.bitrates), len(cfg.resolutions))),
            bitrates=tuple(cfg.bitrates),
            resolutions=tuple(cfg.resolutions),
            average_table=averages.get(s.camera_id),
        )
        for s, w in zip(scenario.streams, weights)
    ]
    params = DpParams(quantum=cfg.quantum or compute_quantum(options_template))

    elastic = cfg.scheduler == Scheduler.DP_ELASTIC
    state = None
    if elastic:
        elastic_cfg = elastic_cfg.model_copy(update={"slot_length": cfg.slot_length})
        elastic_cfg = elastic_cfg.with_budget_cap(float(np.mean(trace.samples[: cfg.horizon])))
        if thresholds is None:
            thresholds = scenario_thresholds(scenario, elastic_cfg)
        state = initial_state(thresholds.tau_wl, thresholds.tau_wh)

    b_index = {b: i for i, b in enumerate(cfg.bitrates)}
    r_index = {r: j for j, r in enumerate(cfg.resolutions)}
    records = []
    for t in range(cfg.horizon):
        available = float(trace.samples[t])
        budget, d = available, 0.0
        if state is not None:
            a_total = float(sum(s.a[t] for s in scenario.streams))
            state = ema_update(state, a_total, elastic_cfg)
            d, state = elastic_adjust(state, a_total, available, elastic_cfg)
            budget = effective_budget(available, d, elastic_cfg)

        cameras = [
            template.with_table(utility.table(s.camera_id, t, float(s.a[t]), float(s.c[t])))
            for template, s in zip(options_template, scenario.streams)
        ]

        match cfg.scheduler:
            case Scheduler.FAIR:
                decision = allocate_fair(cameras, budget)
            case Scheduler.AGNOSTIC:
                decision = allocate_content_agnostic(cameras, budget, params)
            case _:
                decision = allocate_dp(cameras, budget, params)

        realized = []
        total = 0.0
        for choice, stream, w in zip(decision.choices, scenario.streams, weights):
            accuracy = 0.0
            if choice.transmits:
                accuracy = float(
                    stream.ground_truth[t, b_index[choice.bitrate], r_index[choice.resolution]]
                )
            realized.append(accuracy)
            total += w * accuracy

        records.append(
            SlotRecord(
                slot=t,
                available=available,
                effective=budget,
                borrowed=d,
                budget_used=0.0 if state is None else state.budget_used,
                decision=decision,
                realized=tuple(realized),
                realized_utility=total,
            )
        )
        logger.debug(
            f"slot {t}: W={available:.1f} budget={budget:.1f} D={d:.1f} "
            f"sent={decision.total_bitrate} utility={total:.4f}"
        )

    report = SimReport(
        scheduler=cfg.scheduler,
        trace=trace.name,
        camera_ids=scenario.camera_ids,
        slots=tuple(records),
    )
    logger.info(
        f"{cfg.scheduler} on {trace.name}: mean utility {report.mean_utility:.4f} "
        f"over {cfg.horizon} slots"
    )
    return report


def compare_schedulers(
    cfg: SimConfig,
    trace: BandwidthTrace,
    scenario: Scenario,
    utility: UtilitySource,
    elastic_cfg: ElasticConfig,
    schedulers: Sequence[Scheduler] = tuple(Scheduler),
) -> list[SimReport]:
    """Run each scheduler on identical inputs, in the given order."""
    thresholds = None
    if Scheduler.DP_ELASTIC in schedulers:
        thresholds = scenario_thresholds(scenario, elastic_cfg)
    return [
        run_simulation(
            cfg.model_copy(update={"scheduler": scheduler}),
            trace,
            scenario,
            utility,
            elastic_cfg,
            thresholds=thresholds,
        )
        for scheduler in schedulers
    ]


def comparison_rows(reports: Sequence[SimReport]) -> list[tuple]:
    return [
        (
            r.trace,
            str(r.scheduler),
            r.mean_utility,
            r.mean_allocated_kbps,
            r.mean_available_kbps,
            r.borrow_slots,
            r.repay_slots,
        )
        for r in reports
    ]


def write_report(directory: Path | str, report: SimReport, prefix: str = ""):
    """Write the per-slot and per-camera CSVs of one run."""
    directory = Path(directory)
    stem = f"{prefix}{report.scheduler}"
    write_csv(directory / f"slots_{stem}.csv", SLOT_COLUMNS, report.slot_rows())
    write_csv(directory / f"cameras_{stem}.csv", CAMERA_COLUMNS, report.camera_rows())


@dataclass(frozen=True)
class SeedGap:
    """Mean utility of dp+elastic and of fair allocation on one seed and trace profile."""

    seed: int
    profile: TraceProfile
    elastic_utility: float
    fair_utility: float

    @property
    def gap(self) -> float:
        return self.elastic_utility - self.fair_utility


def seed_gaps(
    cfg: SimConfig,
    profiles: Sequence[TraceProfile],
    seeds: Iterable[int],
    elastic_cfg: ElasticConfig,
) -> list[SeedGap]:
    """Compare dp+elastic with fair allocation over many generated scenarios.

    Each seed generates its own scenario from ``cfg`` and, per profile, its own
    trace. Both schedulers see the scenario's ground truth.
    """
    gaps = []
    for seed in seeds:
        scenario = generate_synthetic_scenario(
            seed, cfg.cameras, cfg.horizon, cfg.profiling_slots, cfg.bitrates, cfg.resolutions
        )
        seeded = cfg.model_copy(update={"seed": seed})
        utility = GroundTruthUtility(scenario)
        for profile in profiles:
            trace = generate_trace(seed, profile, cfg.horizon)
            elastic, fair = compare_schedulers(
                seeded, trace, scenario, utility, elastic_cfg,
                schedulers=(Scheduler.DP_ELASTIC, Scheduler.FAIR),
            )
            gaps.append(SeedGap(seed, profile, elastic.mean_utility, fair.mean_utility))
        logger.debug(f"Seed {seed}: {[round(g.gap, 4) for g in gaps[-len(profiles):]]}")
    return gaps


def mean_gaps(gaps: Iterable[SeedGap]) -> dict[TraceProfile, float]:
    """Average gap per trace profile, in first-seen profile order."""
    by_profile: dict[TraceProfile, list[float]] = defaultdict(list)
    for g in gaps:
        by_profile[g.profile].append(g.gap)
    return {profile: float(np.mean(values)) for profile, values in by_profile.items()}


def gap_rows(gaps: Sequence[SeedGap]) -> list[tuple]:
    return [(g.seed, str(g.profile), g.elastic_utility, g.fair_utility, g.gap) for g in gaps]
