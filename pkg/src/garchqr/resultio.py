"""Self-describing JSON result files and delimited plot-data files."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = ["FORMAT", "VERSION", "ResultFormatError", "write_result", "read_result", "dumps_result",
           "write_rows", "read_rows", "to_jsonable"]

FORMAT = "garchqr-result"
VERSION = 1


class ResultFormatError(ValueError):
    """A result file lacks the expected header or has an unknown version."""


def to_jsonable(obj):
    """Convert numpy scalars/arrays (recursively) to plain JSON values;
    non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_result(kind: str, payload: dict) -> str:
    """The self-describing JSON document for a result."""
    doc = {"format": FORMAT, "version": VERSION, "kind": kind, "payload": to_jsonable(payload)}
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def write_result(path: Union[str, Path], kind: str, payload: dict) -> None:
    Path(path).write_text(dumps_result(kind, payload))


def read_result(path: Union[str, Path]) -> tuple:
    """Return ``(kind, payload)`` after checking the header."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ResultFormatError(f"{path} is not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ResultFormatError(f"{path} has unsupported version {doc.get('version')!r}")
    return doc["kind"], doc["payload"]


def write_rows(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence],
               sep: str = "\t") -> None:
    """Plot data: one header line, then one delimited line per row (floats
    written with ``repr`` so they read back exactly)."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)
    lines = [sep.join(header)] + [sep.join(cell(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_rows(path: Union[str, Path], sep: str = "\t") -> tuple:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(sep)
    rows = []
    for line in lines[1:]:
        cells = []
        for c in line.split(sep):
            try:
                cells.append(int(c))
            except ValueError:
                try:
                    cells.append(float(c))
                except ValueError:
                    cells.append(c)
        rows.append(cells)
    return header, rows
