"""Per-slot bandwidth allocation across cameras.

Every slot, each camera offers a table of predicted accuracy over its
(bitrate, resolution) options. The allocator picks one option per camera so
that the weighted accuracy sum is as large as possible while the chosen
bitrates fit the available bandwidth.

Each camera's options are first reduced to its best resolution per bitrate,
plus a "no transmission" option at bitrate 0. What remains is a
multiple-choice knapsack, solved exactly with dynamic programming over the
budget in units of the bitrates' greatest common divisor.

Tie-breaking is deterministic: among optimal solutions, the one with the
lowest total bitrate wins; among those, later cameras take the highest
bitrate they can, which leaves lower-index cameras at lower bitrates.
"""

import itertools
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field

from roistream.errors import ConfigError, InsufficientDataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CameraOptions:
    """One camera's weight and predicted accuracy table for the current slot."""

    camera_id: int
    #: Importance weight of this camera's accuracy.
    weight: float
    #: (len(bitrates), len(resolutions)) predicted F1.
    utility_table: np.ndarray
    #: Bitrate options in kbps, strictly increasing.
    bitrates: tuple[int, ...]
    #: Resolution indices, strictly increasing.
    resolutions: tuple[int, ...]
    #: Profile-average table used by the content-agnostic scheduler.
    average_table: np.ndarray | None = None

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigError(f"Camera {self.camera_id} has a negative weight")
        bitrates = tuple(int(b) for b in self.bitrates)
        if any(b != b_in for b, b_in in zip(bitrates, self.bitrates)):
            raise ConfigError(f"Camera {self.camera_id}: bitrates must be whole kbps")
        if any(b <= 0 for b in bitrates) or any(x >= y for x, y in zip(bitrates, bitrates[1:])):
            raise ConfigError(
                f"Camera {self.camera_id}: bitrates must be positive and strictly increasing"
            )
        resolutions = tuple(int(r) for r in self.resolutions)
        if any(x >= y for x, y in zip(resolutions, resolutions[1:])):
            raise ConfigError(f"Camera {self.camera_id}: resolutions must be strictly increasing")

        shape = (len(bitrates), len(resolutions))
        for name in ("utility_table", "average_table"):
            table = getattr(self, name)
            if table is None:
                continue
            try:
                table = np.array(table, dtype=np.float64)
            except ValueError as e:
                raise ConfigError(f"Camera {self.camera_id}: {name} is not a matrix") from e
            if table.shape != shape:
                raise ConfigError(
                    f"Camera {self.camera_id}: {name} has shape {table.shape}, expected {shape}"
                )
            table.setflags(write=False)
            object.__setattr__(self, name, table)
        object.__setattr__(self, "bitrates", bitrates)
        object.__setattr__(self, "resolutions", resolutions)

    def with_table(self, table: np.ndarray) -> "CameraOptions":
        return CameraOptions(
            camera_id=self.camera_id,
            weight=self.weight,
            utility_table=table,
            bitrates=self.bitrates,
            resolutions=self.resolutions,
            average_table=self.average_table,
        )


@dataclass(frozen=True)
class DpParams:
    #: Budget discretization unit in kbps. Must divide every bitrate option.
    quantum: int


@dataclass(frozen=True)
class CameraChoice:
    camera_id: int
    #: Chosen bitrate in kbps; 0 means the camera does not transmit.
    bitrate: int
    #: Chosen resolution index, or ``None`` if the camera does not transmit.
    resolution: int | None
    predicted_accuracy: float

    @property
    def transmits(self) -> bool:
        return self.bitrate > 0


@dataclass(frozen=True)
class AllocationDecision:
    choices: tuple[CameraChoice, ...]
    #: Sum of the chosen bitrates in kbps.
    total_bitrate: int
    #: Weighted sum of predicted accuracies.
    total_utility: float
    #: The budget handed to the solver, in kbps.
    budget: float

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "total_bitrate": self.total_bitrate,
            "total_utility": self.total_utility,
            "cameras": [
                {
                    "camera_id": c.camera_id,
                    "bitrate": c.bitrate,
                    "resolution": c.resolution,
                    "predicted_accuracy": c.predicted_accuracy,
                }
                for c in self.choices
            ],
        }


@dataclass(frozen=True)
class _Option:
    bitrate: int
    resolution: int | None
    accuracy: float
    #: weight * accuracy
    value: float


def best_config_per_bitrate(cam: CameraOptions) -> list[tuple[int, int, float]]:
    """For each bitrate, the resolution with the highest predicted accuracy.

    Ties go to the lowest resolution index.

    :return: (bitrate, resolution, accuracy) triples in bitrate order.
    """
    best = []
    for i, bitrate in enumerate(cam.bitrates):
        j = int(np.argmax(cam.utility_table[i]))
        best.append((bitrate, cam.resolutions[j], float(cam.utility_table[i, j])))
    return best


def _options(cam: CameraOptions) -> list[_Option]:
    """The camera's choice set: no transmission, then the best-resolution curve."""
    options = [_Option(bitrate=0, resolution=None, accuracy=0.0, value=0.0)]
    for bitrate, resolution, accuracy in best_config_per_bitrate(cam):
        options.append(_Option(bitrate, resolution, accuracy, cam.weight * accuracy))
    return options


def compute_quantum(cameras: Sequence[CameraOptions]) -> int:
    """Greatest common divisor of every camera's bitrate options."""
    bitrates = [b for cam in cameras for b in cam.bitrates]
    if not bitrates:
        raise InsufficientDataError("Need at least one bitrate option to compute a quantum")
    return math.gcd(*bitrates)


def _budget_units(budget: float, quantum: int) -> int:
    return max(0, math.floor(budget / quantum))


def _check_quantum(cameras: Sequence[CameraOptions], params: DpParams):
    if params.quantum <= 0:
        raise ConfigError(f"Quantum must be positive, got {params.quantum}")
    for cam in cameras:
        for b in cam.bitrates:
            if b % params.quantum:
                raise ConfigError(
                    f"Quantum {params.quantum} does not divide bitrate {b} of camera {cam.camera_id}"
                )


def _decision(
    cameras: Sequence[CameraOptions], picks: Sequence[_Option], budget: float
) -> AllocationDecision:
    total = 0.0
    for option in picks:
        total += option.value
    return AllocationDecision(
        choices=tuple(
            CameraChoice(cam.camera_id, o.bitrate, o.resolution, o.accuracy)
            for cam, o in zip(cameras, picks)
        ),
        total_bitrate=sum(o.bitrate for o in picks),
        total_utility=total,
        budget=budget,
    )


def allocate_dp(
    cameras: Sequence[CameraOptions], budget: float, params: DpParams
) -> AllocationDecision:
    """Maximize the weighted accuracy sum subject to the total bitrate budget.

    Runs in O(cameras x bitrates x budget / quantum).

    :param budget: available bandwidth in kbps. It is floored to a multiple
        of the quantum.
    """
    _check_quantum(cameras, params)
    d = params.quantum
    units = _budget_units(budget, d)
    all_options = [_options(cam) for cam in cameras]

    # best[i][u] is the best value of cameras 0..i-1 spending exactly u units.
    best = np.full((len(cameras) + 1, units + 1), -np.inf)
    best[0, 0] = 0.0
    for i, options in enumerate(all_options):
        prev, cur = best[i], best[i + 1]
        for option in options:
            k = option.bitrate // d
            if k > units:
                continue
            np.maximum(cur[k:], prev[: units + 1 - k] + option.value, out=cur[k:])

    final = best[len(cameras)]
    optimum = final.max()
    spend = int(np.flatnonzero(final == optimum)[0])

    picks: list[_Option] = []
    for i in range(len(cameras) - 1, -1, -1):
        for option in sorted(all_options[i], key=lambda o: o.bitrate, reverse=True):
            k = option.bitrate // d
            if k <= spend and best[i, spend - k] + option.value == best[i + 1, spend]:
                picks.append(option)
                spend -= k
                break
    picks.reverse()

    decision = _decision(cameras, picks, budget)
    logger.debug(
        f"dp: budget={budget} kbps, total={decision.total_bitrate} kbps, "
        f"utility={decision.total_utility:.6f}"
    )
    return decision


def brute_force(
    cameras: Sequence[CameraOptions], budget: float, params: DpParams
) -> AllocationDecision:
    """Exhaustive search with the same objective and tie-breaking as `allocate_dp`.

    Exponential in the camera count; meant for verification only.
    """
    _check_quantum(cameras, params)
    limit = _budget_units(budget, params.quantum) * params.quantum
    all_options = [_options(cam) for cam in cameras]

    best_key = None
    best_picks: tuple[_Option, ...] = ()
    for picks in itertools.product(*all_options):
        spent = sum(o.bitrate for o in picks)
        if spent > limit:
            continue
        total = 0.0
        for option in picks:
            total += option.value
        # Higher value, then lower spend, then later cameras at higher bitrates.
        key = (total, -spent, tuple(o.bitrate for o in reversed(picks)))
        if best_key is None or key > best_key:
            best_key, best_picks = key, picks
    return _decision(cameras, best_picks, budget)


def allocate_fair(cameras: Sequence[CameraOptions], budget: float) -> AllocationDecision:
    """Give every camera the largest bitrate option within an equal share of the budget."""
    if not cameras:
        return AllocationDecision(choices=(), total_bitrate=0, total_utility=0.0, budget=budget)

    share = budget / len(cameras)
    picks = []
    for cam in cameras:
        options = [o for o in _options(cam) if o.bitrate <= share]
        picks.append(options[-1])
    return _decision(cameras, picks, budget)


def allocate_content_agnostic(
    cameras: Sequence[CameraOptions], budget: float, params: DpParams
) -> AllocationDecision:
    """Run `allocate_dp` on each camera's profile-average table.

    Cameras without an average table fall back to their current table.
    """
    averaged = [
        cam if cam.average_table is None else cam.with_table(cam.average_table)
        for cam in cameras
    ]
    return allocate_dp(averaged, budget, params)


class CameraTable(BaseModel):
    camera_id: int
    weight: float = Field(1.0, ge=0)
    #: Row per bitrate, column per resolution.
    table: list[list[float]]
    average_table: list[list[float]] | None = None


class AllocationRequest(BaseModel):
    """JSON input of ``roistream allocate``."""

    bitrates: list[int]
    resolutions: list[int]
    #: Defaults to the gcd of ``bitrates``.
    quantum: int | None = Field(None, ge=1)
    cameras: list[CameraTable]

    def camera_options(self) -> list[CameraOptions]:
        return [
            CameraOptions(
                camera_id=cam.camera_id,
                weight=cam.weight,
                utility_table=cam.table,
                bitrates=tuple(self.bitrates),
                resolutions=tuple(self.resolutions),
                average_table=cam.average_table,
            )
            for cam in sorted(self.cameras, key=lambda c: c.camera_id)
        ]

    def dp_params(self) -> DpParams:
        return DpParams(quantum=self.quantum or math.gcd(*self.bitrates))
