"""Run artifacts on disk: CSV patterns and tables, JSON reports, all written atomically."""

import csv
import io
import json
import math
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np

from ghost_optics.errors import InvalidArgumentError
from ghost_optics.models.biphoton import CountsHistogram, DetectorPlane, Pattern

POSITION_COLUMN = "position_mm"


def format_number(value: float) -> str:
    return f"{value:.17g}"


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buffer.getvalue()


def write_pattern(path: Union[str, Path], data: Union[Pattern, CountsHistogram]) -> Path:
    """``position_mm,rate`` (or ``position_mm,counts``) with 17 significant digits."""
    positions_mm = data.positions * 1e3
    if isinstance(data, CountsHistogram):
        rows = zip(positions_mm.tolist(), data.counts.tolist())
        return atomic_write_text(path, _csv_text([POSITION_COLUMN, "counts"], rows))
    rows = zip(positions_mm.tolist(), data.rates.tolist())
    return atomic_write_text(path, _csv_text([POSITION_COLUMN, "rate"], rows))


def load_pattern(
    path: Union[str, Path],
    label: DetectorPlane = DetectorPlane.FOCAL,
    seed: int = 0,
) -> Union[Pattern, CountsHistogram]:
    """Read a file written by :func:`write_pattern` back into a Pattern or CountsHistogram."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        rows = [row for row in reader if row]
    if not header or len(header) != 2 or header[0] != POSITION_COLUMN or header[1] not in ("rate", "counts"):
        raise InvalidArgumentError(f"{path}: expected header '{POSITION_COLUMN},rate' or '{POSITION_COLUMN},counts'")
    positions = np.array([float(r[0]) for r in rows]) * 1e-3
    if header[1] == "counts":
        counts = np.array([int(r[1]) for r in rows], dtype=np.int64)
        return CountsHistogram(positions=positions, counts=counts, seed=seed, label=label)
    return Pattern(positions=positions, rates=np.array([float(r[1]) for r in rows]), label=label)


def write_table(path: Union[str, Path], header: Sequence[str], rows: List[Sequence[Any]]) -> Path:
    return atomic_write_text(path, _csv_text(header, rows))


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(path: Union[str, Path], document: Dict[str, Any]) -> Path:
    text = json.dumps(to_jsonable(document), sort_keys=True, indent=2, allow_nan=False) + "\n"
    return atomic_write_text(path, text)


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)
