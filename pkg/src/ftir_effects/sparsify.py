"""L1-driven rotation of the estimated pattern toward an interpretable one.

The pattern is only identified up to adding multiples of ``1`` and ``x0``.
On the unit sphere of ``span{g~, 1/sqrt(p), x0}`` parametrised as

    g(theta, phi) = g~ cos(phi) + (1/sqrt(p)) cos(theta) sin(phi) + x0 sin(theta) sin(phi)

the rotation with the smallest L1 norm (most near-zero entries) is sought by
a grid scan, a selection rule favouring ``|cos(phi)|`` near 1, and a local
golden-section polish.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import EmptyCandidates, FrameNotOrthonormal, SelectionFloorWarning

FRAME_TOL = 1e-8
TWO_PI = 2.0 * math.pi
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Frame:
    """Orthonormal frame ``{g~, 1/sqrt(p), x0}`` of the admissible patterns."""

    pattern_tilde: np.ndarray
    template: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.pattern_tilde, dtype=float)
        x0 = np.asarray(self.template, dtype=float)
        if g.shape != x0.shape or g.ndim != 1:
            raise FrameNotOrthonormal("pattern and template must be vectors of equal length")
        p = g.size
        checks = {
            "||g~|| = 1": abs(g @ g - 1.0),
            "||x0|| = 1": abs(x0 @ x0 - 1.0),
            "g~ . x0 = 0": abs(g @ x0),
            "g~ . 1 = 0": abs(g.sum()) / math.sqrt(p),
            "x0 . 1 = 0": abs(x0.sum()) / math.sqrt(p),
        }
        for name, dev in checks.items():
            if not dev <= FRAME_TOL:
                raise FrameNotOrthonormal(f"frame violates {name} (deviation {dev:.3g})")
        object.__setattr__(self, "pattern_tilde", g)
        object.__setattr__(self, "template", x0)

    @property
    def p(self) -> int:
        return self.pattern_tilde.size

    def pattern(self, theta: float, phi: float) -> np.ndarray:
        st, ct = math.sin(theta), math.cos(theta)
        sp, cp = math.sin(phi), math.cos(phi)
        return (self.pattern_tilde * cp + ct * sp / math.sqrt(self.p)
                + self.template * (st * sp))


def evaluate_G(theta: float, phi: float, frame: Frame) -> float:
    """L1 norm of ``g(theta, phi)``; asserts the rotated pattern has unit norm."""
    g = frame.pattern(theta, phi)
    norm = float(np.linalg.norm(g))
    if abs(norm - 1.0) > 1e-9:
        raise FrameNotOrthonormal(f"||g(theta, phi)|| = {norm!r}, frame is not orthonormal")
    return float(np.abs(g).sum())


def evaluate_G_many(thetas, phis, frame: Frame) -> np.ndarray:
    return kernels.l1_pairs(frame.pattern_tilde, frame.template, thetas, phis)


class Candidate(NamedTuple):
    theta: float
    phi: float
    G: float
    cos_phi: float


@dataclass(frozen=True)
class Landscape:
    thetas: np.ndarray   # periodic, endpoint 2*pi excluded
    phis: np.ndarray     # both poles included
    values: np.ndarray   # values[i, j] = G(thetas[i], phis[j])

    @property
    def shape(self):
        return self.values.shape


def landscape_axes(grid_theta: int, grid_phi: int):
    thetas = TWO_PI * np.arange(grid_theta) / grid_theta
    phis = math.pi * np.arange(grid_phi) / (grid_phi - 1)
    return thetas, phis


def _axis_trig(angles, poles=False):
    c, s = np.cos(angles), np.sin(angles)
    if poles:
        # exact values at 0 and pi keep each pole row constant in theta
        c[0], s[0], c[-1], s[-1] = 1.0, 0.0, -1.0, 0.0
    return c, s


def compute_landscape(frame: Frame, grid_theta: int = 720, grid_phi: int = 360) -> Landscape:
    if grid_theta < 16 or grid_phi < 16:
        raise ValueError("grid counts must be >= 16")
    thetas, phis = landscape_axes(grid_theta, grid_phi)
    ct, st = _axis_trig(thetas)
    cp, sp = _axis_trig(phis, poles=True)
    values = kernels.l1_grid(frame.pattern_tilde, frame.template, ct, st, cp, sp)
    return Landscape(thetas, phis, values)


def local_minima_mask(values: np.ndarray) -> np.ndarray:
    """Cells no larger than any of their 8 neighbours (axis 0 wraps, axis 1 does not)."""
    padded = np.pad(values, ((0, 0), (1, 1)), constant_values=np.inf)
    mask = np.ones(values.shape, dtype=bool)
    for di in (-1, 0, 1):
        rolled = np.roll(padded, di, axis=0)
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            mask &= values <= rolled[:, 1 + dj: 1 + dj + values.shape[1]]
    return mask


def plateau_representatives(mask: np.ndarray) -> list[tuple[int, int]]:
    """One cell per 8-connected component of ``mask``, the one nearest its centroid.

    Adjacent local minima are necessarily equal, so each component is a flat
    region of the landscape. Axis 0 is periodic.
    """
    n0, n1 = mask.shape
    seen = np.zeros_like(mask)
    reps = []
    for start in map(tuple, np.argwhere(mask)):
        if seen[start]:
            continue
        comp = []
        queue = deque([start])
        seen[start] = True
        while queue:
            i, j = queue.popleft()
            comp.append((i, j))
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ni, nj = (i + di) % n0, j + dj
                    if 0 <= nj < n1 and mask[ni, nj] and not seen[ni, nj]:
                        seen[ni, nj] = True
                        queue.append((ni, nj))
        if len(comp) == 1:
            reps.append(comp[0])
            continue
        idx = np.array(comp)
        ang = TWO_PI * idx[:, 0] / n0
        mean_ang = math.atan2(np.sin(ang).mean(), np.cos(ang).mean())
        ci = (mean_ang % TWO_PI) / TWO_PI * n0
        cj = idx[:, 1].mean()
        d0 = np.abs(idx[:, 0] - ci)
        d0 = np.minimum(d0, n0 - d0)
        best = int(np.argmin(d0 ** 2 + (idx[:, 1] - cj) ** 2))
        reps.append((int(idx[best, 0]), int(idx[best, 1])))
    return reps


def find_candidates(landscape: Landscape) -> list[Candidate]:
    """Deduplicated local minima of the landscape, sorted by ``G``."""
    reps = plateau_representatives(local_minima_mask(landscape.values))
    out = [Candidate(float(landscape.thetas[i]), float(landscape.phis[j]),
                     float(landscape.values[i, j]), math.cos(landscape.phis[j]))
           for i, j in reps]
    return sorted(out, key=lambda c: (c.G, c.theta, c.phi))


def scan_landscape(frame: Frame, grid_theta: int = 720, grid_phi: int = 360):
    """Evaluate ``G`` on the full grid and list its local minima."""
    landscape = compute_landscape(frame, grid_theta, grid_phi)
    return landscape, find_candidates(landscape)


def golden_section(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


@dataclass
class SparsifiedPattern:
    theta: float
    phi: float
    pattern: np.ndarray
    l1_value: float
    landscape: Landscape | None = None
    candidates: list = field(default_factory=list)
    start: Candidate | None = None
    cos_phi_floor: float = 0.5       # floor actually applied after any relaxation
    polish_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "phi": self.phi,
            "cos_phi": math.cos(self.phi),
            "l1_value": self.l1_value,
            "cos_phi_floor": self.cos_phi_floor,
            "start": None if self.start is None else self.start._asdict(),
            "polish_trace": list(self.polish_trace),
            "candidates": [c._asdict() for c in self.candidates],
            "pattern": self.pattern.tolist(),
        }


def select_candidate(candidates, cos_phi_floor: float = 0.5):
    """Smallest-``G`` candidate with ``|cos(phi)| >= floor``, halving the floor if none passes.

    Returns ``(candidate, floor_used)``.
    """
    if not candidates:
        raise EmptyCandidates("no local minima to select from")
    floor = float(cos_phi_floor)
    while True:
        passing = [c for c in candidates if abs(c.cos_phi) >= floor]
        if passing:
            return min(passing, key=lambda c: c.G), floor
        new = floor / 2.0 if floor > 1e-12 else 0.0
        warnings.warn(f"no candidate with |cos(phi)| >= {floor:.4g}; relaxing to {new:.4g}",
                      SelectionFloorWarning, stacklevel=3)
        floor = new


def polish(frame: Frame, theta: float, phi: float, step: float = TWO_PI / 720,
           tol: float = 1e-8, max_rounds: int = 200):
    """Alternating golden-section refinement of ``(theta, phi)``.

    A move is kept only if it strictly lowers ``G``; stops once neither angle
    moves by ``tol`` or more. Returns ``(theta, phi, trace of G)``.
    """
    g_t, x0 = frame.pattern_tilde, frame.template

    def G(t, f):
        return float(kernels.l1_pairs(g_t, x0, [t], [f])[0])

    current = G(theta, phi)
    trace = [current]
    for _ in range(max_rounds):
        t_new, val = golden_section(lambda t: G(t, phi), theta - step, theta + step)
        moved_t = 0.0
        if val < current:
            moved_t = abs(t_new - theta)
            theta, current = t_new % TWO_PI, val
        f_new, val = golden_section(lambda f: G(theta, f),
                                    max(0.0, phi - step), min(math.pi, phi + step))
        moved_f = 0.0
        if val < current:
            moved_f = abs(f_new - phi)
            phi, current = f_new, val
        trace.append(current)
        if moved_t < tol and moved_f < tol:
            break
    return theta, phi, trace


def select_and_polish(candidates, frame: Frame, cos_phi_floor: float = 0.5,
                      step: float = TWO_PI / 720) -> SparsifiedPattern:
    """Pick a candidate by the selection rule and refine it locally.

    ``step`` is the half-width of the golden-section brackets, normally the
    landscape grid spacing.
    """
    start, floor = select_candidate(candidates, cos_phi_floor)
    theta, phi, trace = polish(frame, start.theta, start.phi, step)
    g = frame.pattern(theta, phi)
    return SparsifiedPattern(theta, phi, g, evaluate_G(theta, phi, frame),
                             candidates=list(candidates), start=start,
                             cos_phi_floor=floor, polish_trace=trace)


def sparsify(pattern_tilde, template, grid_theta: int = 720, grid_phi: int = 360,
             cos_phi_floor: float = 0.5) -> SparsifiedPattern:
    """Scan, select and polish in one call."""
    frame = Frame(pattern_tilde, template)
    landscape, candidates = scan_landscape(frame, grid_theta, grid_phi)
    step = max(TWO_PI / grid_theta, math.pi / (grid_phi - 1))
    result = select_and_polish(candidates, frame, cos_phi_floor, step)
    result.landscape = landscape
    return result
