import dataclasses
import json
from json import JSONEncoder
from pathlib import Path

import numpy as np


class RoistreamJSONEncoder(JSONEncoder):
    """Extend the default encoder to support dataclasses and numpy values."""

    def default(self, o):
        if dataclasses.is_dataclass(o) and not isinstance(o, type):
            return dataclasses.asdict(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, Path):
            return str(o)
        return super().default(o)


def dumps(value) -> str:
    """Serialize ``value`` as indented JSON with a trailing newline."""
    return json.dumps(value, cls=RoistreamJSONEncoder, indent=2) + "\n"
