"""Plain-text and JSON serialization with deterministic formatting."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

FLOAT_FMT = "%.12e"


def format_columns(columns: Sequence[str], rows: np.ndarray | Sequence[Sequence[float]]) -> str:
    arr = np.atleast_2d(np.asarray(rows, dtype=float))
    if arr.size and arr.shape[1] != len(columns):
        raise ValueError("column count mismatch")
    lines = ["# " + " ".join(columns)]
    for row in arr if arr.size else []:
        lines.append(" ".join(FLOAT_FMT % v for v in row))
    return "\n".join(lines) + "\n"


def write_columns(path: str | Path, columns: Sequence[str], rows) -> Path:
    path = Path(path)
    path.write_text(format_columns(columns, rows))
    return path


def read_columns(path: str | Path, ncols: int | None = None) -> np.ndarray:
    """Whitespace- or comma-delimited numbers; '#' starts a comment."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals = [float(tok) for tok in line.replace(",", " ").split()]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if ncols is not None and len(vals) != ncols:
            raise ValueError(f"{path}:{lineno}: expected {ncols} columns, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.array(rows)


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps_record(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_record(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.write_text(dumps_record(obj))
    return path


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())
