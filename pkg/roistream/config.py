"""Configuration for roistream runs.

Every tunable lives in a JSON file that maps onto :class:`RunConfig`. Each
section has defaults, so ``{}`` is a valid configuration. Command-line flags
override a few fields on top of the file.

The environment carries no semantics apart from the log level, which can be
set with ``ROISTREAM_LOG`` in the process environment or in a local ``.env``
file.
"""

import logging
import os
from pathlib import Path
from typing import TypeVar

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from roistream.elastic import ElasticConfig
from roistream.errors import ConfigError
from roistream.roidet import RoidetParams
from roistream.sim.runner import SimConfig
from roistream.utility import TrainConfig

# Load dotenv early so that `_env` sees values from `.env`.
load_dotenv()

#: Environment variable that sets the log level.
LOG_LEVEL_ENV = "ROISTREAM_LOG"

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _env(key: str, default=None) -> str | None:
    """Fetch a value from the local environment.

    :param key: the environment variable to fetch
    :return: a value, or ``None`` if the variable is undefined.
    """
    return os.environ.get(key, default)


def default_log_level() -> str:
    level = (_env(LOG_LEVEL_ENV) or "INFO").upper()
    if level not in LOG_LEVELS:
        logging.getLogger(__name__).warning(f"Ignoring unknown {LOG_LEVEL_ENV}={level!r}")
        return "INFO"
    return level


class RunConfig(BaseModel):
    """The contents of a ``--config`` file."""

    model_config = ConfigDict(extra="forbid")

    sim: SimConfig = Field(default_factory=SimConfig)
    elastic: ElasticConfig = Field(default_factory=ElasticConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    roidet: RoidetParams = Field(default_factory=RoidetParams)


class GlobalConfig(BaseModel):
    """Where a command reads its inputs and writes its outputs."""

    #: Files the command reads. Each must exist.
    inputs: list[Path] = Field(default_factory=list)
    #: Directory for every file the command writes.
    out_dir: Path
    log_level: str = "INFO"
    seed: int = 0

    @field_validator("log_level")
    @classmethod
    def check_level(cls, value: str) -> str:
        value = value.upper()
        if value not in LOG_LEVELS:
            raise ValueError(f"log level must be one of {', '.join(LOG_LEVELS)}")
        return value

    def prepare(self) -> Path:
        """Check the inputs and create the output directory.

        :return: the output directory.
        """
        for path in self.inputs:
            if not path.exists():
                raise ConfigError(f"{path} does not exist")
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"Cannot create output directory {self.out_dir}: {e}") from e
        if not os.access(self.out_dir, os.W_OK):
            raise ConfigError(f"Output directory {self.out_dir} is not writable")
        return self.out_dir


M = TypeVar("M", bound=BaseModel)


def load_config(path: Path | str | None, model: type[M] = RunConfig) -> M:
    """Read and validate a JSON configuration file.

    :param path: the file to read, or ``None`` for the model's defaults.
    :raises ConfigError: if the file is missing or invalid.
    """
    if path is None:
        return model()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e
