"""CSV and JSON readers/writers with a fixed, byte-reproducible dialect.

Tables are comma separated with a header row, ``.`` as decimal mark and LF
line endings.  Floats are written with 17 significant digits so that a
write/read cycle reproduces every value exactly.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .model import DataSeries


class DataFileError(ValueError):
    """A data file is missing, unreadable or malformed."""


def _fmt(x) -> str:
    if isinstance(x, (str, bool)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_table(path) -> Tuple[List[str], List[List[str]]]:
    path = Path(path)
    try:
        with path.open("r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataFileError(f"{path} is empty")
    return rows[0], rows[1:]


def read_numeric_table(path) -> Tuple[List[str], np.ndarray]:
    header, rows = read_table(path)
    try:
        arr = np.array([[float(x) for x in r] for r in rows if r], dtype=float)
    except ValueError as exc:
        raise DataFileError(f"{path}: non-numeric entry ({exc})") from exc
    if arr.size and arr.shape[1] != len(header):
        raise DataFileError(f"{path}: row width does not match the header")
    return header, arr.reshape(-1, len(header))


def write_series(path, data: DataSeries, value_name: str = "value") -> Path:
    return write_table(path, ["t", value_name], zip(data.times, data.values))


def read_series(path, unit: str = "s") -> DataSeries:
    header, arr = read_numeric_table(path)
    if arr.shape[1] < 2:
        raise DataFileError(f"{path}: expected at least two columns (time, value)")
    if arr.shape[0] == 0:
        raise DataFileError(f"{path}: no data rows")
    try:
        return DataSeries.from_arrays(arr[:, 0], arr[:, 1], unit=unit)
    except ValueError as exc:
        raise DataFileError(f"{path}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable and round-trippable
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path} is not valid JSON: {exc}") from exc
