"""Per-camera accuracy functions.

Each camera gets a small regression network that predicts detection F1 from
four inputs: the segment's ROI-area ratio ``a``, its detector confidence
``c``, the encoding bitrate ``b`` in kbps, and the resolution index ``r``.
Models are trained offline from profiling data, then queried once per slot
to fill the utility tables the allocator optimizes over.

The network is 4 -> hidden (ReLU) -> 1 (sigmoid), trained with plain
mini-batch SGD on mean squared error. Training is deterministic for a fixed
seed, and trained models are immutable.
"""

import logging
from collections import Counter, defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, ValidationError
from scipy.special import expit, logit

from roistream.consts import MODEL_FORMAT_VERSION
from roistream.errors import (
    DivergenceError,
    FormatError,
    InsufficientDataError,
)
from roistream.utils.files import atomic_write_text, read_csv, write_csv

logger = logging.getLogger(__name__)

#: Input features, in network input order.
FEATURES = ("a", "c", "bitrate", "resolution")

PROFILING_COLUMNS = ("camera", "segment", "a", "c", "bitrate_kbps", "resolution", "accuracy")

#: How often `predict_accuracy` clamped each input into the training range.
CLAMP_COUNTS: Counter[str] = Counter()

#: Step size for central finite differences in `gradient_check`.
FD_STEP = 1e-5


class TrainConfig(BaseModel):
    """Hyperparameters for `train_utility`."""

    #: Number of hidden ReLU units.
    hidden_size: int = Field(16, ge=1)
    #: SGD step size.
    learning_rate: float = Field(0.5, gt=0)
    #: Passes over the training data.
    epochs: int = Field(1500, ge=1)
    #: Samples per SGD step.
    batch_size: int = Field(16, ge=1)
    #: Seed for weight initialization and shuffling.
    seed: int = 0
    #: L2 weight decay on the weight matrices (biases are not decayed).
    l2: float = Field(0.0, ge=0)
    #: Smallest dataset that training accepts.
    min_samples: int = Field(10, ge=1)


@dataclass(frozen=True)
class ProfilingSample:
    """One profiled (segment, configuration) pair and its measured accuracy."""

    #: ROI-area ratio in [0, 1].
    a: float
    #: Detector confidence in [0, 1].
    c: float
    #: Bitrate in kbps.
    bitrate: float
    #: Resolution index.
    resolution: int
    #: Measured F1 score in [0, 1].
    accuracy: float
    camera: int = 0
    segment: int = 0

    def __post_init__(self):
        for name in ("a", "c", "accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} must lie in [0, 1]")
        if self.bitrate <= 0:
            raise ValueError(f"bitrate={self.bitrate} must be positive")
        if self.resolution < 0:
            raise ValueError(f"resolution={self.resolution} must be non-negative")

    def features(self) -> tuple[float, float, float, float]:
        return (self.a, self.c, float(self.bitrate), float(self.resolution))


@dataclass(frozen=True, eq=False)
class UtilityModel:
    """A trained accuracy function.

    Inputs are min-max scaled with the stored ranges before the forward pass.
    """

    #: Per-feature minimum seen in training.
    input_min: np.ndarray
    #: Per-feature maximum seen in training (minimum + 1 if the feature was constant).
    input_max: np.ndarray
    #: (hidden, 4) input weights.
    w1: np.ndarray
    #: (hidden,) hidden biases.
    b1: np.ndarray
    #: (1, hidden) output weights.
    w2: np.ndarray
    #: Output bias.
    b2: float
    #: Mean squared error on the training data.
    train_mse: float = float("nan")

    def __post_init__(self):
        for name in ("input_min", "input_max", "w1", "b1", "w2"):
            array = np.array(getattr(self, name), dtype=np.float64)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        """Copies of the trainable parameters, keyed by name."""
        return {
            "w1": self.w1.copy(),
            "b1": self.b1.copy(),
            "w2": self.w2.copy(),
            "b2": np.array([self.b2]),
        }

    def scale(self, x: np.ndarray) -> np.ndarray:
        return (x - self.input_min) / (self.input_max - self.input_min)


def _forward(params: Mapping[str, np.ndarray], x: np.ndarray):
    """Return (hidden pre-activations, hidden activations, outputs) for a batch."""
    z1 = x @ params["w1"].T + params["b1"]
    h = np.maximum(z1, 0.0)
    y = expit(h @ params["w2"].T + params["b2"])[:, 0]
    return z1, h, y


def _loss_and_grads(
    params: Mapping[str, np.ndarray], x: np.ndarray, t: np.ndarray, l2: float
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error (plus L2 on weights) and its gradient."""
    n = x.shape[0]
    z1, h, y = _forward(params, x)
    err = y - t
    loss = float(np.mean(err**2))
    if l2:
        loss += l2 * float(np.sum(params["w1"] ** 2) + np.sum(params["w2"] ** 2))

    g2 = (2.0 / n) * err * y * (1.0 - y)
    g2 = g2[:, None]
    grads = {
        "w2": g2.T @ h,
        "b2": g2.sum(axis=0),
    }
    g1 = (g2 @ params["w2"]) * (z1 > 0)
    grads["w1"] = g1.T @ x
    grads["b1"] = g1.sum(axis=0)
    if l2:
        grads["w1"] = grads["w1"] + 2.0 * l2 * params["w1"]
        grads["w2"] = grads["w2"] + 2.0 * l2 * params["w2"]
    return loss, grads


def _normalization(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    constant = hi <= lo
    for i in np.flatnonzero(constant):
        logger.warning(f"Feature {FEATURES[i]!r} is constant in training data; using unit span")
    hi = np.where(constant, lo + 1.0, hi)
    return lo, hi


def _initial_params(rng: np.random.Generator, hidden: int, mean_target: float):
    return {
        "w1": rng.normal(0.0, np.sqrt(2.0 / len(FEATURES)), size=(hidden, len(FEATURES))),
        "b1": np.full(hidden, 0.1),
        "w2": rng.normal(0.0, np.sqrt(1.0 / hidden), size=(1, hidden)),
        "b2": np.array([logit(np.clip(mean_target, 1e-3, 1 - 1e-3))]),
    }


def train_utility(samples: Sequence[ProfilingSample], cfg: TrainConfig) -> UtilityModel:
    """Fit an accuracy function to profiling samples.

    :raises InsufficientDataError: if there are fewer than ``cfg.min_samples``
        samples.
    :raises DivergenceError: if the training loss becomes non-finite.
    """
    if len(samples) < cfg.min_samples:
        raise InsufficientDataError(
            f"Need at least {cfg.min_samples} profiling samples, got {len(samples)}"
        )

    raw = np.array([s.features() for s in samples], dtype=np.float64)
    targets = np.array([s.accuracy for s in samples], dtype=np.float64)
    lo, hi = _normalization(raw)
    x = (raw - lo) / (hi - lo)

    rng = np.random.default_rng(cfg.seed)
    params = _initial_params(rng, cfg.hidden_size, float(targets.mean()))
    n = len(samples)
    loss = float("nan")
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = _loss_and_grads(params, x[batch], targets[batch], cfg.l2)
            if not np.isfinite(loss):
                raise DivergenceError(f"Training loss became {loss} in epoch {epoch}")
            for name, grad in grads.items():
                params[name] -= cfg.learning_rate * grad
        if epoch % 500 == 0:
            logger.debug(f"epoch {epoch}: batch loss {loss:.6f}")

    _, _, y = _forward(params, x)
    mse = float(np.mean((y - targets) ** 2))
    if not np.isfinite(mse):
        raise DivergenceError(f"Training loss became {mse}")
    logger.info(f"Trained utility model on {n} samples: mse={mse:.6f}")

    return UtilityModel(
        input_min=lo,
        input_max=hi,
        w1=params["w1"],
        b1=params["b1"],
        w2=params["w2"],
        b2=float(params["b2"][0]),
        train_mse=mse,
    )


def train_per_camera(
    samples: Sequence[ProfilingSample], cfg: TrainConfig
) -> dict[int, UtilityModel]:
    """Train one model per camera id found in ``samples``."""
    return {
        camera: train_utility(camera_samples, cfg)
        for camera, camera_samples in sorted(group_by_camera(samples).items())
    }


def _clamp(model: UtilityModel, x: np.ndarray) -> np.ndarray:
    clamped = np.clip(x, model.input_min, model.input_max)
    for i in np.flatnonzero(clamped != x):
        CLAMP_COUNTS[FEATURES[i]] += 1
        logger.debug(f"Clamped {FEATURES[i]}={x[i]} into the training range")
    return clamped


def predict_accuracy(model: UtilityModel, a: float, c: float, b: float, r: int) -> float:
    """Predict F1 in [0, 1] for one (segment features, configuration) pair."""
    x = _clamp(model, np.array([a, c, b, r], dtype=np.float64))
    weights = {"w1": model.w1, "b1": model.b1, "w2": model.w2, "b2": model.b2}
    _, _, y = _forward(weights, model.scale(x)[None, :])
    return float(np.clip(y[0], 0.0, 1.0))


def tabulate_utility(
    model: UtilityModel,
    a: float,
    c: float,
    bitrates: Sequence[float],
    resolutions: Sequence[int],
) -> np.ndarray:
    """Predict F1 for every (bitrate, resolution) option with fixed content features.

    :return: a (len(bitrates), len(resolutions)) table.
    """
    table = np.empty((len(bitrates), len(resolutions)), dtype=np.float64)
    for i, b in enumerate(bitrates):
        for j, r in enumerate(resolutions):
            table[i, j] = predict_accuracy(model, a, c, b, r)
    return table


def gradient_check(model: UtilityModel, samples: Sequence[ProfilingSample]) -> float:
    """Compare backpropagation against central finite differences.

    :return: the largest relative error over all parameters.
    """
    raw = np.array([s.features() for s in samples], dtype=np.float64)
    x = model.scale(np.clip(raw, model.input_min, model.input_max))
    t = np.array([s.accuracy for s in samples], dtype=np.float64)
    params = model.params()
    _, analytic = _loss_and_grads(params, x, t, l2=0.0)

    worst = 0.0
    for name, values in params.items():
        for index in np.ndindex(values.shape):
            original = values[index]
            values[index] = original + FD_STEP
            plus, _ = _loss_and_grads(params, x, t, l2=0.0)
            values[index] = original - FD_STEP
            minus, _ = _loss_and_grads(params, x, t, l2=0.0)
            values[index] = original

            numeric = (plus - minus) / (2 * FD_STEP)
            exact = analytic[name][index]
            scale = max(abs(exact) + abs(numeric), 1e-6)
            worst = max(worst, abs(exact - numeric) / scale)
    return worst


def group_by_camera(samples: Sequence[ProfilingSample]) -> dict[int, list[ProfilingSample]]:
    groups: dict[int, list[ProfilingSample]] = defaultdict(list)
    for s in samples:
        groups[s.camera].append(s)
    return dict(groups)


# Persistence
# -----------


class UtilityModelFile(BaseModel):
    """On-disk JSON form of a `UtilityModel`."""

    format_version: int = MODEL_FORMAT_VERSION
    camera: int | None = None
    features: list[str] = Field(default_factory=lambda: list(FEATURES))
    input_min: list[float]
    input_max: list[float]
    hidden_size: int
    #: Row-major (hidden, 4) matrix.
    w1: list[list[float]]
    b1: list[float]
    #: Row-major (1, hidden) matrix.
    w2: list[list[float]]
    b2: float
    train_mse: float | None = None


def save_model(model: UtilityModel, path: Path | str, camera: int | None = None):
    payload = UtilityModelFile(
        camera=camera,
        input_min=model.input_min.tolist(),
        input_max=model.input_max.tolist(),
        hidden_size=model.hidden_size,
        w1=model.w1.tolist(),
        b1=model.b1.tolist(),
        w2=model.w2.tolist(),
        b2=model.b2,
        train_mse=None if np.isnan(model.train_mse) else model.train_mse,
    )
    atomic_write_text(path, payload.model_dump_json(indent=2) + "\n")


def load_model(path: Path | str) -> UtilityModel:
    try:
        payload = UtilityModelFile.model_validate_json(Path(path).read_text())
    except ValidationError as e:
        raise FormatError(f"{path} is not a valid utility model: {e}") from e
    if payload.format_version != MODEL_FORMAT_VERSION:
        raise FormatError(
            f"{path} has format version {payload.format_version}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    hidden, inputs = payload.hidden_size, len(FEATURES)
    expected = {
        "input_min": (inputs,),
        "input_max": (inputs,),
        "w1": (hidden, inputs),
        "b1": (hidden,),
        "w2": (1, hidden),
    }
    arrays = {}
    for name, shape in expected.items():
        try:
            arrays[name] = np.array(getattr(payload, name), dtype=np.float64)
        except ValueError:
            raise FormatError(f"{path}: {name} is ragged") from None
        if arrays[name].shape != shape:
            raise FormatError(f"{path}: {name} has shape {arrays[name].shape}, expected {shape}")
    return UtilityModel(
        **arrays,
        b2=payload.b2,
        train_mse=float("nan") if payload.train_mse is None else payload.train_mse,
    )


def load_profiling_csv(path: Path | str) -> list[ProfilingSample]:
    """Read ``camera,segment,a,c,bitrate_kbps,resolution,accuracy`` rows.

    The ``segment`` column is optional; without it, each row is its own segment.
    """
    required = [c for c in PROFILING_COLUMNS if c != "segment"]
    samples = []
    for i, row in enumerate(read_csv(path, required)):
        try:
            samples.append(
                ProfilingSample(
                    a=float(row["a"]),
                    c=float(row["c"]),
                    bitrate=float(row["bitrate_kbps"]),
                    resolution=int(row["resolution"]),
                    accuracy=float(row["accuracy"]),
                    camera=int(row["camera"]),
                    segment=int(row["segment"]) if row.get("segment") else i,
                )
            )
        except ValueError as e:
            raise FormatError(f"{path}, row {i + 2}: {e}") from e
    return samples


def write_profiling_csv(path: Path | str, samples: Sequence[ProfilingSample]):
    rows = (
        (s.camera, s.segment, s.a, s.c, s.bitrate, s.resolution, s.accuracy)
        for s in samples
    )
    write_csv(path, PROFILING_COLUMNS, rows)


def save_models(models: Mapping[int, UtilityModel], directory: Path | str) -> list[Path]:
    """Write one ``model_<camera>.json`` file per camera."""
    directory = Path(directory)
    paths = []
    for camera, model in sorted(models.items()):
        path = directory / f"model_{camera}.json"
        save_model(model, path, camera=camera)
        paths.append(path)
    return paths


def load_models(directory: Path | str) -> dict[int, UtilityModel]:
    """Read every ``model_*.json`` file in ``directory``, keyed by camera id."""
    directory = Path(directory)
    models = {}
    for path in sorted(directory.glob("model_*.json")):
        try:
            camera = int(path.stem.removeprefix("model_"))
        except ValueError:
            raise FormatError(f"{path}: cannot tell the camera id from the file name") from None
        models[camera] = load_model(path)
    if not models:
        raise FormatError(f"{directory} has no model_<camera>.json files")
    return models
