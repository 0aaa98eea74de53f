"""Spectra on a shared equidistant wavenumber grid, CSV I/O and set diagnostics.

A :class:`SpectrumSet` stores its signals as one ``(n, p)`` array with one
spectrum per row, which is the layout every estimator works on.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateSignal, DimensionMismatch, NonFiniteSignal, ParseError

GRID_RTOL = 1e-6


@dataclass(frozen=True)
class WavenumberGrid:
    """Equidistant grid ``start + j * (end - start) / (count - 1)`` in cm^-1."""

    start: float
    end: float
    count: int

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 3:
            raise ValueError(f"grid needs at least 3 points, got {self.count}")
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError("grid bounds must be finite")
        if not self.end > self.start:
            raise ValueError("grid end must exceed start")
        object.__setattr__(self, "count", int(self.count))

    @property
    def step(self) -> float:
        return (self.end - self.start) / (self.count - 1)

    @property
    def points(self) -> np.ndarray:
        j = np.arange(self.count, dtype=float)
        pts = self.start + j * (self.end - self.start) / (self.count - 1)
        pts[-1] = self.end
        return pts

    @classmethod
    def from_points(cls, points: Sequence[float], rtol: float = GRID_RTOL) -> "WavenumberGrid":
        """Recover the grid from sampled wavenumbers, checking equidistance."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 1 or pts.size < 3:
            raise ValueError("need at least 3 wavenumbers")
        diffs = np.diff(pts)
        if np.any(diffs <= 0):
            bad = int(np.argmax(diffs <= 0)) + 1
            raise ValueError(f"wavenumbers not strictly increasing at point {bad}")
        grid = cls(float(pts[0]), float(pts[-1]), pts.size)
        dev = np.abs(pts - grid.points)
        if np.any(dev > rtol * grid.step):
            bad = int(np.argmax(dev > rtol * grid.step))
            raise ValueError(f"wavenumbers not equidistant at point {bad}")
        return grid


# Full-scale default: 1798 points over 650-4000 cm^-1.
DEFAULT_GRID = WavenumberGrid(650.0, 4000.0, 1798)


@dataclass(frozen=True)
class Spectrum:
    grid: WavenumberGrid
    values: np.ndarray
    label: str | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.count,):
            raise DimensionMismatch(
                f"spectrum has {values.size} values for a {self.grid.count}-point grid")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class SpectrumSet:
    """A stack of ``n`` spectra sharing one grid (row ``i`` is signal ``i``).

    Finiteness is not enforced here so that defective files can still be
    loaded and inspected with :func:`validate_set`; the estimators call
    :func:`require_usable` before touching the data.
    """

    grid: WavenumberGrid
    values: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float, ndmin=2)
        if values.ndim != 2 or values.shape[1] != self.grid.count:
            raise DimensionMismatch(
                f"expected (n, {self.grid.count}) values, got shape {values.shape}")
        labels = tuple(self.labels) if self.labels else tuple(
            f"s{i + 1}" for i in range(values.shape[0]))
        if len(labels) != values.shape[0]:
            raise DimensionMismatch(f"{len(labels)} labels for {values.shape[0]} signals")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(str(s) for s in labels))

    @classmethod
    def from_spectra(cls, spectra: Iterable[Spectrum]) -> "SpectrumSet":
        spectra = list(spectra)
        if not spectra:
            raise ValueError("empty spectrum list")
        grid = spectra[0].grid
        for i, s in enumerate(spectra):
            if s.grid != grid:
                raise DimensionMismatch(f"spectrum {i} is on a different grid")
        labels = [s.label if s.label is not None else f"s{i + 1}" for i, s in enumerate(spectra)]
        return cls(grid, np.stack([s.values for s in spectra]), tuple(labels))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def signals(self) -> list[Spectrum]:
        return [Spectrum(self.grid, row, lab) for row, lab in zip(self.values, self.labels)]

    def __len__(self):
        return self.n

    def __getitem__(self, i) -> Spectrum:
        return Spectrum(self.grid, self.values[i], self.labels[i])

    def subset(self, indices: Sequence[int]) -> "SpectrumSet":
        idx = list(indices)
        return SpectrumSet(self.grid, self.values[idx], tuple(self.labels[i] for i in idx))

    def exclude(self, groups: Iterable[str]) -> "SpectrumSet":
        """Drop signals whose label or label group is listed."""
        drop = set(groups)
        keep = [i for i, lab in enumerate(self.labels)
                if lab not in drop and label_group(lab) not in drop]
        return self.subset(keep)

    def with_values(self, values: np.ndarray) -> "SpectrumSet":
        return SpectrumSet(self.grid, values, self.labels)


def label_group(label: str) -> str:
    """Coupon/treatment-level key of a label: the text before an optional ``#replicate``."""
    return label.split("#", 1)[0]


def require_usable(signals: SpectrumSet, min_n: int = 1) -> None:
    """Raise if ``signals`` cannot be aligned (non-finite or constant rows, too few rows)."""
    if signals.n < min_n:
        raise ValueError(f"need at least {min_n} signals, got {signals.n}")
    finite = np.isfinite(signals.values)
    if not finite.all():
        i, j = np.argwhere(~finite)[0]
        raise NonFiniteSignal(
            f"signal {i} ({signals.labels[i]!r}) has a non-finite value at coordinate {j}")
    for i, row in enumerate(signals.values):
        if _is_constant(row):
            raise DegenerateSignal(
                f"signal {i} ({signals.labels[i]!r}) is constant and cannot be aligned",
                index=i, label=signals.labels[i])


def _is_constant(row: np.ndarray) -> bool:
    centered = row - row.mean()
    return float(centered @ centered) <= (1e-13 * max(1.0, float(np.abs(row).max()))) ** 2


@dataclass
class SetReport:
    n: int
    p: int
    grid_consistent: bool
    nonfinite: list = field(default_factory=list)   # (signal index, coordinate)
    degenerate: list = field(default_factory=list)  # signal indices

    @property
    def ok(self) -> bool:
        return self.grid_consistent and not self.nonfinite and not self.degenerate

    @property
    def flags(self) -> list[str]:
        out = [f"signal {i}: non-finite value at coordinate {j}" for i, j in self.nonfinite]
        out += [f"signal {i}: constant signal, degenerate for alignment" for i in self.degenerate]
        if not self.grid_consistent:
            out.append("grid inconsistent with values")
        return out

    def to_dict(self) -> dict:
        return {"n": self.n, "p": self.p, "grid_consistent": self.grid_consistent,
                "nonfinite": [list(t) for t in self.nonfinite],
                "degenerate": list(self.degenerate), "ok": self.ok}


def validate_set(signals: SpectrumSet) -> SetReport:
    """Report finiteness, grid consistency, size and constant signals. Never raises."""
    values = signals.values
    consistent = values.shape[1] == signals.grid.count
    nonfinite = [(int(i), int(j)) for i, j in np.argwhere(~np.isfinite(values))]
    bad_rows = {i for i, _ in nonfinite}
    degenerate = [i for i, row in enumerate(values)
                  if i not in bad_rows and _is_constant(row)]
    return SetReport(values.shape[0], values.shape[1], consistent, nonfinite, degenerate)


# ---------------------------------------------------------------------------
# CSV format: header ``wavenumber,<label1>,...``; one row per grid point.

def format_float(x: float) -> str:
    """Shortest round-trip representation, so output bytes are reproducible."""
    return repr(float(x))


def write_csv_text(columns: dict, x_name: str, x: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow([x_name] + names)
    cols = [np.asarray(columns[k], dtype=float) for k in names]
    for j, xv in enumerate(x):
        w.writerow([format_float(xv)] + [format_float(c[j]) for c in cols])
    return buf.getvalue()


def spectra_to_csv(signals: SpectrumSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["wavenumber", *signals.labels])
    for j, xv in enumerate(signals.grid.points):
        w.writerow([format_float(xv)] + [format_float(v) for v in signals.values[:, j]])
    return buf.getvalue()


def spectra_from_csv(text: str) -> SpectrumSet:
    """Parse the spectra CSV format; errors carry the 1-based line number."""
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise ParseError("empty file", line=1) from None
    if not header or header[0].strip().lower() != "wavenumber":
        raise ParseError("header must start with 'wavenumber'", line=1)
    labels = [h.strip() for h in header[1:]]
    if not labels:
        raise ParseError("no signal columns", line=1)
    width = len(header)
    data = []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", line=lineno)
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise ParseError(f"bad number ({exc})", line=lineno) from None
    if len(data) < 3:
        raise ParseError("need at least 3 grid rows", line=len(data) + 1)
    arr = np.array(data)
    try:
        grid = WavenumberGrid.from_points(arr[:, 0])
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return SpectrumSet(grid, arr[:, 1:].T, tuple(labels))


def read_spectra(path) -> SpectrumSet:
    with open(path, newline="") as fh:
        return spectra_from_csv(fh.read())
