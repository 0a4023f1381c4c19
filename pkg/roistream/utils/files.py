"""Atomic file output and CSV helpers.

Every file roistream produces goes through :func:`atomic_write_text` so that
a crashed run never leaves a half-written output behind.
"""

import csv
import io
import os
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path

from roistream.errors import FormatError


def atomic_write_bytes(path: Path | str, payload: bytes):
    """Write ``payload`` to a temporary file next to ``path``, then rename it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def atomic_write_text(path: Path | str, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _cell(value) -> str:
    # `repr` of a Python float is locale-independent and round-trips exactly.
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]):
    """Write a CSV file with a header row."""
    atomic_write_text(path, format_csv(header, rows))


def read_csv(path: Path | str, required: Sequence[str]) -> list[dict[str, str]]:
    """Read a CSV file and check that it has the ``required`` columns.

    :return: one dict per row, keyed by column name.
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path} does not exist")
    with path.open(newline="") as f:
        reader = csv.DictReader(f)
        columns = set(reader.fieldnames or [])
        missing = [c for c in required if c not in columns]
        if missing:
            raise FormatError(f"{path} is missing columns: {', '.join(missing)}")
        return list(reader)
