"""Template estimation from replicate pre-treatment spectra.

Each signal ``x_i`` is aligned onto the template by ``c_i x_i + d_i 1``. For a
zero-mean unit-norm candidate ``v`` the profiled residual of signal ``i`` is
``1 - (u_i . v)^2`` where ``u_i`` is the centered, normalised signal, so the
objective equals ``n - ||U v||^2`` and the minimiser is the leading right
singular vector of ``U``. Rows of ``U`` are orthogonal to ``1``, so the trivial
null direction of the centered quadratic form never appears.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DegenerateSignal, DimensionMismatch, EigenGapWarning
from .spectra import Spectrum, SpectrumSet, require_usable

EIGEN_GAP_TOL = 1e-10


class AffineAlignment(NamedTuple):
    """Scale ``c`` and offset ``d`` mapping a signal onto a target: ``c x + d 1``."""

    c: float
    d: float

    @property
    def scale(self) -> float:
        """Model multiplicative factor ``a = 1 / c``."""
        return 1.0 / self.c

    @property
    def offset(self) -> float:
        """Model offset ``b = -d / c``."""
        return -self.d / self.c

    def apply(self, x):
        return self.c * np.asarray(x, dtype=float) + self.d


def align_rows(X: np.ndarray, targets: np.ndarray, labels=None):
    """Vectorised :func:`align_to_target` over the rows of ``X``; returns ``(c, d)``."""
    X = np.asarray(X, dtype=float)
    c, d, sxx = kernels.align_rows(X, targets)
    bad = np.flatnonzero(sxx <= _degenerate_floor(X))
    if bad.size:
        i = int(bad[0])
        label = labels[i] if labels is not None else None
        raise DegenerateSignal(f"signal {i} ({label!r}) is constant and cannot be aligned",
                               index=i, label=label)
    return c, d


def _degenerate_floor(X):
    scale = np.maximum(1.0, np.abs(X).max(axis=1))
    return (1e-13 * scale) ** 2


def align_to_target(signal, target) -> AffineAlignment:
    """Closed-form minimiser of ``||c x + d 1 - target||^2``.

    The residual is orthogonal to both ``x`` and ``1``. Raises
    :class:`DegenerateSignal` for a constant signal.
    """
    x = signal.values if isinstance(signal, Spectrum) else np.asarray(signal, dtype=float)
    target = np.asarray(target, dtype=float)
    if x.shape != target.shape:
        raise DimensionMismatch(f"signal length {x.size} != target length {target.size}")
    c, d = align_rows(x[None, :], target)
    return AffineAlignment(float(c[0]), float(d[0]))


def _unit_rows(X: np.ndarray) -> np.ndarray:
    """Centered signals scaled to unit norm (orthonormal basis of span{x_i, 1} minus 1)."""
    Xc = X - X.mean(axis=1, keepdims=True)
    return Xc / np.linalg.norm(Xc, axis=1, keepdims=True)


class QuadraticForm:
    """The profiled alignment objective ``M = sum_i (I - H_i)`` as an operator.

    ``H_i`` is the orthogonal projector onto ``span{x_i, 1}``, so ``v @ M @ v``
    is the summed residual of aligning every signal onto ``v``. ``M`` is never
    formed; only matrix-vector products are available.
    """

    def __init__(self, signals: SpectrumSet):
        require_usable(signals, min_n=1)
        self.U = _unit_rows(signals.values)
        self.n, self.p = self.U.shape

    @property
    def shape(self):
        return (self.p, self.p)

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        return self.n * v - self._sum_projections(v)

    def _sum_projections(self, v):
        # sum_i H_i v = U^T U v + n * mean(v) 1
        return self.U.T @ (self.U @ v) + self.n * v.mean(axis=0)

    def __matmul__(self, v):
        return self.matvec(v)

    def quad(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.matvec(v))

    def to_dense(self) -> np.ndarray:
        """Dense ``p x p`` matrix; intended for small problems and tests."""
        return np.column_stack([self.matvec(e) for e in np.eye(self.p)])


def build_quadratic_form(signals: SpectrumSet) -> QuadraticForm:
    return QuadraticForm(signals)


@dataclass(frozen=True)
class TemplateFit:
    template: np.ndarray
    alignments: tuple
    objective: float
    eigenvalue: float
    eigen_gap: float
    labels: tuple = ()

    @property
    def c(self) -> np.ndarray:
        return np.array([a.c for a in self.alignments])

    @property
    def d(self) -> np.ndarray:
        return np.array([a.d for a in self.alignments])

    def to_dict(self) -> dict:
        return {
            "template": self.template.tolist(),
            "labels": list(self.labels),
            "c": self.c.tolist(),
            "d": self.d.tolist(),
            "objective": self.objective,
            "eigenvalue": self.eigenvalue,
            "eigen_gap": self.eigen_gap,
        }


def alignment_objective(X, template, c, d) -> float:
    r = np.asarray(c)[:, None] * X + np.asarray(d)[:, None] - template
    return float(np.einsum("ij,ij->", r, r))


def estimate_template(signals: SpectrumSet) -> TemplateFit:
    """Minimise ``sum_i ||c_i x_i + d_i 1 - x0||^2`` over ``x0 . 1 = 0, ||x0|| = 1``.

    The minimiser is the smallest admissible eigenvector of the centered
    quadratic form, computed as the leading right singular vector of the
    stack of centered, normalised signals. The sign is fixed so that
    ``sum_i c_i > 0``.

    Warns with :class:`EigenGapWarning` when the two smallest admissible
    eigenvalues differ by less than ``1e-10``.
    """
    if signals.n < 2:
        raise ValueError(f"template estimation needs at least 2 signals, got {signals.n}")
    if signals.p < 3:
        raise ValueError("template estimation needs at least 3 grid points")
    require_usable(signals, min_n=2)
    X = signals.values
    U = _unit_rows(X)
    n, p = U.shape
    _, s, vt = np.linalg.svd(U, full_matrices=False)
    x0 = vt[0] - vt[0].mean()
    x0 /= np.linalg.norm(x0)

    eigenvalue = n - s[0] ** 2
    # admissible eigenvalues outside the row space of U all equal n
    second = n - (s[1] ** 2 if s.size > 1 else 0.0)
    gap = float(second - eigenvalue)
    if gap < EIGEN_GAP_TOL:
        warnings.warn(f"template not unique: eigen gap {gap:.3g}", EigenGapWarning, stacklevel=2)

    c, d = align_rows(X, x0, signals.labels)
    if c.sum() < 0:
        x0 = -x0
        c, d = -c, -d
    alignments = tuple(AffineAlignment(float(ci), float(di)) for ci, di in zip(c, d))
    return TemplateFit(
        template=x0,
        alignments=alignments,
        objective=alignment_objective(X, x0, c, d),
        eigenvalue=float(eigenvalue),
        eigen_gap=gap,
        labels=signals.labels,
    )


def aligned_signals(fit: TemplateFit, signals: SpectrumSet) -> SpectrumSet:
    """Signals mapped onto the template scale: ``c_i x_i + d_i 1``."""
    if signals.n != len(fit.alignments) or signals.p != fit.template.size:
        raise DimensionMismatch(
            f"fit is for {len(fit.alignments)}x{fit.template.size}, set is {signals.n}x{signals.p}")
    out = fit.c[:, None] * signals.values + fit.d[:, None]
    return signals.with_values(out)
