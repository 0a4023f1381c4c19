"""Available-bandwidth traces, one sample per time slot."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from roistream.consts import MIN_TRACE_KBPS, TRACE_MOMENTS
from roistream.enums import TraceProfile
from roistream.errors import FormatError, InsufficientDataError
from roistream.utils.files import read_csv, write_csv

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("slot", "kbps")

#: Lag-one autocorrelation of generated traces.
TRACE_RHO = 0.8

#: Rounds of rescaling and clipping when matching the target moments.
_MOMENT_ROUNDS = 5


@dataclass(frozen=True, eq=False)
class BandwidthTrace:
    name: str
    #: Available bandwidth per slot, in kbps.
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InsufficientDataError(f"Trace {self.name!r} has no samples")
        if not np.all(samples > 0):
            raise ValueError(f"Trace {self.name!r} has non-positive samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def std(self) -> float:
        return float(self.samples.std())


def ar1(rng: np.random.Generator, rho: float, length: int) -> np.ndarray:
    """A zero-mean AR(1) sequence with unit marginal variance."""
    noise = rng.standard_normal(length + 1)
    # noise[0] plays the previous value, so the sequence starts stationary.
    zi = np.array([rho * noise[0]])
    return lfilter([np.sqrt(1.0 - rho**2)], [1.0, -rho], noise[1:], zi=zi)[0]


def generate_trace(seed: int, profile: TraceProfile | str, horizon: int) -> BandwidthTrace:
    """Generate a synthetic trace whose mean and std match the profile's targets.

    Samples follow an AR(1) process, rescaled to the target moments and
    clipped at `MIN_TRACE_KBPS`. Rescaling and clipping alternate a few times
    so that the clip barely moves the moments.
    """
    profile = TraceProfile(profile)
    if horizon < 1:
        raise InsufficientDataError(f"Trace horizon must be positive, got {horizon}")

    mean, std = TRACE_MOMENTS[profile]
    x = ar1(np.random.default_rng(seed), TRACE_RHO, horizon)
    for _ in range(_MOMENT_ROUNDS):
        spread = x.std()
        if spread > 0:
            x = (x - x.mean()) / spread * std + mean
        else:
            x = np.full(horizon, mean)
        x = np.maximum(x, MIN_TRACE_KBPS)

    trace = BandwidthTrace(name=f"{profile}-{seed}", samples=x)
    logger.debug(f"Trace {trace.name}: mean={trace.mean:.1f} std={trace.std:.1f}")
    return trace


def load_trace_csv(path: Path | str) -> BandwidthTrace:
    """Read a ``slot,kbps`` CSV. Rows may appear in any slot order."""
    rows = read_csv(path, TRACE_COLUMNS)
    try:
        pairs = sorted((int(row["slot"]), float(row["kbps"])) for row in rows)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    slots = [slot for slot, _ in pairs]
    if slots != list(range(len(slots))):
        raise FormatError(f"{path}: slots must be 0, 1, 2, ... without gaps")
    try:
        return BandwidthTrace(name=Path(path).stem, samples=np.array([k for _, k in pairs]))
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def write_trace_csv(path: Path | str, trace: BandwidthTrace):
    write_csv(path, TRACE_COLUMNS, enumerate(trace.samples.tolist()))
