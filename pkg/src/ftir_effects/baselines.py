"""Multiplicative scatter correction (MSC), the classical comparison method.

Each spectrum is regressed on the mean spectrum, ``x_i = a_i ref + b_i``, and
corrected as ``(x_i - b_i) / a_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateSignal, NearZeroSlope
from .spectra import SpectrumSet, require_usable

SLOPE_TOL = 1e-10


class ScatterCoefficients(NamedTuple):
    slope: float
    intercept: float


@dataclass(frozen=True)
class MscFit:
    reference: np.ndarray
    alignments: tuple       # ScatterCoefficients of x_i = a_i * reference + b_i
    corrected: SpectrumSet

    @property
    def slopes(self) -> np.ndarray:
        return np.array([al.slope for al in self.alignments])

    @property
    def intercepts(self) -> np.ndarray:
        return np.array([al.intercept for al in self.alignments])

    def normalized_reference(self) -> np.ndarray:
        r = self.reference - self.reference.mean()
        return r / np.linalg.norm(r)

    def to_dict(self) -> dict:
        return {
            "reference": self.reference.tolist(),
            "labels": list(self.corrected.labels),
            "slopes": self.slopes.tolist(),
            "intercepts": self.intercepts.tolist(),
        }


def msc_correct(signals: SpectrumSet, reference: np.ndarray | None = None) -> MscFit:
    """Full-spectrum MSC against the sample mean (or a supplied reference).

    Raises :class:`NearZeroSlope` if some ``|a_i| < 1e-10`` and
    :class:`DegenerateSignal` for a constant reference or signal.
    """
    if signals.n < 2 and reference is None:
        raise ValueError("MSC needs at least 2 signals to form a mean reference")
    require_usable(signals, min_n=1)
    X = signals.values
    ref = X.mean(axis=0) if reference is None else np.asarray(reference, dtype=float)
    # regress every signal on the reference: the roles of the alignment kernel swapped
    refc = ref - ref.mean()
    sxx = float(refc @ refc)
    if sxx <= (1e-13 * max(1.0, float(np.abs(ref).max()))) ** 2:
        raise DegenerateSignal("MSC reference is constant")
    # row by row with the same reductions as the reference, so a signal equal
    # to the reference gets exactly a = 1, b = 0
    a = np.array([float((x - x.mean()) @ refc) for x in X]) / sxx
    b = np.array([x.mean() for x in X]) - a * ref.mean()
    small = np.flatnonzero(np.abs(a) < SLOPE_TOL)
    if small.size:
        i = int(small[0])
        raise NearZeroSlope(f"signal {i} ({signals.labels[i]!r}) has MSC slope {a[i]:.3g}", index=i)
    corrected = (X - b[:, None]) / a[:, None]
    alignments = tuple(ScatterCoefficients(float(ai), float(bi)) for ai, bi in zip(a, b))
    return MscFit(ref, alignments, signals.with_values(corrected))

