"""
Core containers for complete data, missingness masks and imputed data.

Missing cells are stored as NaN. Every container freezes its arrays on
construction, so instances can be shared freely between threads.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

NA_TOKEN = "NA"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataMatrix:
    """Complete n x d data matrix of finite reals."""

    values: np.ndarray
    column_names: Optional[tuple] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"expected a non-empty 2-d array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("DataMatrix entries must be finite")
        object.__setattr__(self, "values", _frozen(v))
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != v.shape[1]:
                raise DataError(f"{len(names)} column names for {v.shape[1]} columns")
            object.__setattr__(self, "column_names", names)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class MissingMask:
    """n x d indicator array; 1 marks a missing cell, 0 an observed one."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.ndim != 2:
            raise DataError(f"mask must be 2-d, got shape {e.shape}")
        if e.dtype != bool:
            if not np.all((e == 0) | (e == 1)):
                raise DataError("mask entries must be 0 or 1")
            e = e.astype(bool)
        object.__setattr__(self, "entries", _frozen(e))

    @property
    def shape(self):
        return self.entries.shape

    def missing_rate(self) -> float:
        return float(self.entries.mean())


@dataclass(frozen=True)
class Pattern:
    bits: tuple
    count: int


@dataclass(frozen=True)
class IncompleteData:
    """Data with NaN exactly at the cells the mask marks as missing."""

    values: np.ndarray
    mask: MissingMask
    column_names: Optional[tuple] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.mask.shape:
            raise DataError(f"values {v.shape} and mask {self.mask.shape} differ in shape")
        nan = np.isnan(v)
        if not np.array_equal(nan, self.mask.entries):
            raise DataError("NaN cells do not coincide with mask == 1")
        if np.any(np.isinf(v)):
            raise DataError("observed entries must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_array(cls, values, column_names=None) -> "IncompleteData":
        """Build from an array using NaN as the missing marker."""
        v = np.asarray(values, dtype=float)
        return cls(v, MissingMask(np.isnan(v)), column_names)

    @property
    def shape(self):
        return self.values.shape

    def fill(self, replacement) -> "CompletedDataset":
        """Complete the missing cells with values taken from ``replacement``."""
        r = np.asarray(replacement.values if isinstance(replacement, DataMatrix) else replacement,
                       dtype=float)
        if r.shape != self.shape:
            raise DataError(f"replacement shape {r.shape} != {self.shape}")
        out = np.where(self.mask.entries, r, self.values)
        return CompletedDataset(out, self.mask)


@dataclass(frozen=True)
class CompletedDataset:
    values: np.ndarray
    source_mask: MissingMask

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.source_mask.shape:
            raise DataError(f"values {v.shape} and mask {self.source_mask.shape} differ")
        if not np.all(np.isfinite(v)):
            raise DataError("completed data contains non-finite entries")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def shape(self):
        return self.values.shape


def apply_mask(x: DataMatrix, m: MissingMask) -> IncompleteData:
    if x.shape != m.shape:
        raise DataError(f"data shape {x.shape} != mask shape {m.shape}")
    v = np.where(m.entries, np.nan, x.values)
    return IncompleteData(v, m, x.column_names)


def extract_patterns(m: MissingMask) -> list:
    """Distinct mask rows with their counts, in lexicographic order of bits."""
    e = m.entries.astype(np.int8)
    if e.shape[0] == 0:
        return []
    rows, counts = np.unique(e, axis=0, return_counts=True)
    return [Pattern(tuple(int(b) for b in r), int(c)) for r, c in zip(rows, counts)]


def observed_row_index(d: IncompleteData, j: int):
    """Split row indices into (rows where column j is observed, rows where it is missing)."""
    if not 0 <= j < d.shape[1]:
        raise IndexError(f"column {j} out of range for {d.shape[1]} columns")
    col = d.mask.entries[:, j]
    return np.flatnonzero(~col), np.flatnonzero(col)


# --------------------------------------------------------------------------
# CSV

def _format(v: float) -> str:
    return NA_TOKEN if np.isnan(v) else repr(float(v))


def write_csv(path, values, column_names: Optional[Sequence[str]] = None, header: bool = True):
    """Write a 2-d array; NaN cells become ``NA``. ``repr`` keeps floats bit-exact."""
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            names = column_names or [f"X{j + 1}" for j in range(values.shape[1])]
            w.writerow(names)
        for row in values:
            w.writerow([_format(v) for v in row])


def read_csv(path, header: bool = True, allow_na: bool = True):
    """Parse a numeric CSV file.

    Returns ``(values, column_names)`` where missing cells are NaN and
    ``column_names`` is None when ``header`` is False. Raises DataError
    naming the 1-based line number of the first malformed row.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    return parse_csv(text, header=header, allow_na=allow_na, source=os.fspath(path))


def parse_csv(text: str, header: bool = True, allow_na: bool = True, source: str = "<string>"):
    reader = csv.reader(io.StringIO(text))
    names = None
    rows = []
    width = None
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if header and names is None:
            names = tuple(c.strip() for c in row)
            width = len(names)
            continue
        if width is None:
            width = len(row)
        if len(row) != width:
            raise DataError(f"{source}: line {lineno}: expected {width} fields, got {len(row)}")
        parsed = []
        for cell in row:
            cell = cell.strip()
            if cell == NA_TOKEN:
                if not allow_na:
                    raise DataError(f"{source}: line {lineno}: NA not allowed here")
                parsed.append(np.nan)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{source}: line {lineno}: non-numeric cell {cell!r}") from None
            if not np.isfinite(v):
                raise DataError(f"{source}: line {lineno}: non-finite cell {cell!r}")
            parsed.append(v)
        rows.append(parsed)
    if not rows:
        raise DataError(f"{source}: no data rows")
    return np.array(rows, dtype=float), names
