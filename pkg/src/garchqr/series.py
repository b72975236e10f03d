"""Return-series container, CSV ingestion and the signed-square transform."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "IngestionError",
    "ReturnSeries",
    "PricesInput",
    "transform",
    "inverse_transform",
    "log_returns",
    "read_csv",
]


class IngestionError(ValueError):
    """Raised when input data cannot be turned into a return series."""


def transform(x):
    """Signed square ``x**2 * sign(x)``.

    Works elementwise on arrays and returns a float for scalar input.
    """
    arr = np.asarray(x, dtype=float)
    out = arr * np.abs(arr)
    return float(out) if out.ndim == 0 else out


def inverse_transform(x):
    """Signed square root ``sqrt(|x|) * sign(x)``; inverse of :func:`transform`."""
    arr = np.asarray(x, dtype=float)
    out = np.sign(arr) * np.sqrt(np.abs(arr))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ReturnSeries:
    """Ordered log returns ``x_1..x_n``.

    ``dates`` is optional and only carried along for reporting (backtest
    subperiods, plot files).
    """

    values: np.ndarray
    dates: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size < 1:
            raise IngestionError("a return series needs at least one value")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise IngestionError(f"non-finite return at position {bad}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.dates is not None:
            if len(self.dates) != vals.size:
                raise IngestionError("dates and values differ in length")
            object.__setattr__(self, "dates", tuple(self.dates))

    def __len__(self) -> int:
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def transformed(self) -> np.ndarray:
        """``y_t = T(x_t)``."""
        return transform(self.values)

    @property
    def squared(self) -> np.ndarray:
        return self.values ** 2

    def head(self, length: int) -> "ReturnSeries":
        """First ``length`` observations (an estimation subsample)."""
        dates = None if self.dates is None else self.dates[:length]
        return ReturnSeries(self.values[:length], dates)

    def window(self, start: int, stop: int) -> "ReturnSeries":
        dates = None if self.dates is None else self.dates[start:stop]
        return ReturnSeries(self.values[start:stop], dates)


@dataclass(frozen=True)
class PricesInput:
    timestamps: tuple
    prices: np.ndarray

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float).ravel()
        stamps = tuple(self.timestamps)
        if len(stamps) != prices.size:
            raise IngestionError("timestamps and prices differ in length")
        for i in range(1, len(stamps)):
            if not stamps[i] > stamps[i - 1]:
                raise IngestionError(
                    f"timestamps not strictly increasing at row {i} ({stamps[i]!r})"
                )
        object.__setattr__(self, "timestamps", stamps)
        object.__setattr__(self, "prices", prices)


def log_returns(prices: Union[PricesInput, Sequence[float]]) -> ReturnSeries:
    """Log returns ``ln p_t - ln p_{t-1}``.

    Non-positive prices are rejected, never skipped: dropping a row would
    silently shift every later return by one period.
    """
    if isinstance(prices, PricesInput):
        p, stamps = prices.prices, prices.timestamps
    else:
        p, stamps = np.asarray(prices, dtype=float).ravel(), None
    if p.size < 2:
        raise IngestionError("need at least two prices to form a return")
    bad = np.flatnonzero(~(p > 0))
    if bad.size:
        i = int(bad[0])
        label = f" ({stamps[i]})" if stamps is not None else ""
        raise IngestionError(f"non-positive price {p[i]!r} at row {i}{label}")
    x = np.diff(np.log(p))
    dates = None if stamps is None else stamps[1:]
    return ReturnSeries(x, dates)


def _parse_date(text: str):
    text = text.strip()
    for fmt in ("%Y-%m-%d", "%Y/%m/%d", "%d/%m/%Y", "%m/%d/%Y", "%Y%m%d"):
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    try:
        return date.fromisoformat(text[:10])
    except ValueError:
        return text


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_csv(
    source: Union[str, Path, io.TextIOBase],
    delimiter: Optional[str] = None,
    kind: str = "auto",
) -> ReturnSeries:
    """Read a return series from CSV.

    Two layouts are accepted: ``date,price`` (converted to log returns) and a
    single ``return`` column. A header row is detected when its cells are not
    numeric. With ``kind="auto"`` a two-column file is treated as prices and a
    one-column file as returns; pass ``kind="returns"`` to read the second
    column of a two-column file as returns.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    if delimiter is None:
        try:
            delimiter = csv.Sniffer().sniff(text[:2048], delimiters=",;\t| ").delimiter
        except csv.Error:
            delimiter = ","
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=delimiter) if any(c.strip() for c in r)]
    if not rows:
        raise IngestionError("empty input")
    if not all(_is_number(c) for c in rows[0][-1:]):
        rows = rows[1:]
    if not rows:
        raise IngestionError("no data rows after header")
    ncol = len(rows[0])
    if ncol == 1:
        vals = []
        for i, r in enumerate(rows):
            if not _is_number(r[0]):
                raise IngestionError(f"unparseable return {r[0]!r} at row {i}")
            vals.append(float(r[0]))
        return ReturnSeries(np.array(vals))
    stamps, vals = [], []
    for i, r in enumerate(rows):
        if len(r) < 2 or not _is_number(r[1]):
            raise IngestionError(f"malformed row {i}: {r!r}")
        stamps.append(_parse_date(r[0]))
        vals.append(float(r[1]))
    if kind == "returns":
        return ReturnSeries(np.array(vals), tuple(stamps))
    return log_returns(PricesInput(tuple(stamps), np.array(vals)))

