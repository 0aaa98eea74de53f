"""Seeded generator for replicate spectra with multiplicative, offset and noise errors.

Pre-treatment signals follow ``x_i = a_i (x0 + eps_i) + b_i 1`` and
post-treatment signals ``x_i = a_i (x0 + delta_i g + eps_i) + b_i 1`` with
``eps_i ~ N(0, sigma^2 I)``, so the noise is scaled together with the signal.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, GeneratorError
from .spectra import DEFAULT_GRID, SpectrumSet, WavenumberGrid, format_float, read_spectra

MAX_REJECTIONS = 1000
DEFAULT_EFFECTS = (8.0, 5.0, 3.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0)
DEFAULT_N_PRE = 33
DEFAULT_REPLICATES = 3
NOISE_FRACTION = 0.02  # default sigma as a fraction of the template's peak-to-peak range

# Stream tags keep pre- and post-treatment draws independent under one seed.
_PRE, _POST = 0, 1


@dataclass(frozen=True)
class Law:
    """Scalar distribution: ``constant``, ``uniform``, ``normal`` or ``choice``."""

    kind: str
    params: tuple = ()

    def __post_init__(self):
        arity = {"constant": 1, "uniform": 2, "normal": 2}
        if self.kind in arity:
            if len(self.params) != arity[self.kind]:
                raise GeneratorError(f"{self.kind} law takes {arity[self.kind]} parameters")
        elif self.kind == "choice":
            if not self.params:
                raise GeneratorError("choice law needs at least one value")
        else:
            raise GeneratorError(f"unknown law {self.kind!r}")
        if self.kind == "uniform" and not self.params[1] >= self.params[0]:
            raise GeneratorError("uniform law needs high >= low")
        if self.kind == "normal" and self.params[1] < 0:
            raise GeneratorError("normal law needs std >= 0")

    @classmethod
    def constant(cls, value):
        return cls("constant", (float(value),))

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", (float(low), float(high)))

    @classmethod
    def normal(cls, mean, std):
        return cls("normal", (float(mean), float(std)))

    @classmethod
    def choice(cls, values):
        return cls("choice", tuple(float(v) for v in values))

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "uniform":
            return float(rng.uniform(*self.params))
        if self.kind == "normal":
            return float(rng.normal(*self.params))
        return self.params[int(rng.integers(len(self.params)))]

    def to_dict(self) -> dict:
        names = {"constant": ("value",), "uniform": ("low", "high"), "normal": ("mean", "std")}
        if self.kind == "choice":
            return {"kind": "choice", "values": list(self.params)}
        return {"kind": self.kind, **dict(zip(names[self.kind], self.params))}

    @classmethod
    def from_dict(cls, d) -> "Law":
        if isinstance(d, (int, float)):
            return cls.constant(d)
        try:
            kind = d["kind"]
            if kind == "constant":
                return cls.constant(d["value"])
            if kind == "uniform":
                return cls.uniform(d["low"], d["high"])
            if kind == "normal":
                return cls.normal(d["mean"], d["std"])
            if kind == "choice":
                return cls.choice(d["values"])
        except (KeyError, TypeError) as exc:
            raise GeneratorError(f"malformed law {d!r}: {exc}") from None
        raise GeneratorError(f"unknown law {kind!r}")


def standardize(v: np.ndarray) -> np.ndarray:
    """Center and scale to unit Euclidean norm."""
    v = np.asarray(v, dtype=float)
    c = v - v.mean()
    norm = np.linalg.norm(c)
    if norm == 0:
        raise GeneratorError("cannot standardize a constant vector")
    c = c / norm
    # second pass removes the residual mean left by the division
    c -= c.mean()
    return c / np.linalg.norm(c)


def _gaussians(w: np.ndarray, peaks) -> np.ndarray:
    out = np.zeros_like(w)
    for center, width, height in peaks:
        out += height * np.exp(-0.5 * ((w - center) / width) ** 2)
    return out


# (center cm^-1, width cm^-1, height): six absorption bands typical of an epoxy matrix
_TEMPLATE_PEAKS = [
    (1030.0, 35.0, 1.00),
    (1240.0, 30.0, 0.70),
    (1510.0, 12.0, 0.55),
    (1730.0, 20.0, 0.35),
    (2925.0, 45.0, 0.45),
    (3380.0, 160.0, 0.40),
]

# three bumps, together about 10% of the default 650-4000 range
_PATTERN_BUMPS = [
    (1380.0, 28.0, 1.00),
    (1660.0, 22.0, -0.70),
    (3120.0, 30.0, 0.80),
]


def builtin_template(grid: WavenumberGrid = DEFAULT_GRID) -> np.ndarray:
    return standardize(_gaussians(grid.points, _TEMPLATE_PEAKS))


def builtin_pattern(grid: WavenumberGrid = DEFAULT_GRID) -> np.ndarray:
    return standardize(_gaussians(grid.points, _PATTERN_BUMPS))


@dataclass(frozen=True)
class GenerativeParams:
    """Parameters of the pre/post-treatment generative models.

    ``sigma=None`` resolves to 2% of the template's peak-to-peak range.
    """

    template: np.ndarray
    grid: WavenumberGrid = DEFAULT_GRID
    scale_law: Law = field(default_factory=lambda: Law.uniform(0.7, 1.3))
    offset_law: Law = field(default_factory=lambda: Law.uniform(-0.1, 0.1))
    sigma: float | None = None
    pattern: np.ndarray | None = None
    effects: tuple | None = None
    replicates: int = 1

    def __post_init__(self):
        t = np.asarray(self.template, dtype=float)
        if t.shape != (self.grid.count,):
            raise DimensionMismatch(f"template length {t.size} != grid count {self.grid.count}")
        if abs(np.linalg.norm(t) - 1) > 1e-12 or abs(t.sum()) > 1e-12:
            raise GeneratorError("template must be zero-mean with unit norm")
        object.__setattr__(self, "template", t)
        if self.pattern is not None:
            g = np.asarray(self.pattern, dtype=float)
            if g.shape != t.shape:
                raise DimensionMismatch(f"pattern length {g.size} != template length {t.size}")
            if abs(np.linalg.norm(g) - 1) > 1e-12:
                raise GeneratorError("pattern must have unit norm")
            object.__setattr__(self, "pattern", g)
        if self.effects is not None:
            object.__setattr__(self, "effects", tuple(float(e) for e in self.effects))
        sigma = NOISE_FRACTION * float(np.ptp(t)) if self.sigma is None else float(self.sigma)
        if not sigma >= 0:
            raise GeneratorError("sigma must be non-negative")
        object.__setattr__(self, "sigma", sigma)
        if (isinstance(self.replicates, bool) or not isinstance(self.replicates, (int, np.integer))
                or self.replicates < 1):
            raise GeneratorError("replicates must be a positive integer")

    @classmethod
    def reference_design(cls, grid: WavenumberGrid = DEFAULT_GRID, **overrides) -> "GenerativeParams":
        """Built-in template and pattern with 9 coupons x 3 replicates."""
        kw = dict(template=builtin_template(grid), grid=grid, pattern=builtin_pattern(grid),
                  effects=DEFAULT_EFFECTS, replicates=DEFAULT_REPLICATES)
        kw.update(overrides)
        return cls(**kw)

    def evolve(self, **changes) -> "GenerativeParams":
        return replace(self, **changes)


def _signal_rng(seed: int, stream: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, i]))


def _draw_scale(law: Law, rng: np.random.Generator) -> float:
    for _ in range(MAX_REJECTIONS):
        a = law.draw(rng)
        if a > 0:
            return a
    raise GeneratorError(f"scale law produced {MAX_REJECTIONS} non-positive draws in a row")


def _draw_signal(params: GenerativeParams, mean: np.ndarray, rng: np.random.Generator):
    a = _draw_scale(params.scale_law, rng)
    b = params.offset_law.draw(rng)
    if params.sigma > 0:
        eps = rng.normal(0.0, params.sigma, size=mean.size)
        return a * (mean + eps) + b, a, b
    return a * mean + b, a, b


@dataclass(frozen=True)
class Draws:
    """Per-signal nuisance draws, kept for closed-loop checks."""

    scales: np.ndarray
    offsets: np.ndarray


def generate_pretreatment(params: GenerativeParams, n: int, seed: int,
                          return_draws: bool = False):
    """Draw ``n`` replicate pre-treatment signals of the template.

    Each signal has its own generator derived from ``(seed, i)`` so the output
    is bit-identical for identical arguments.
    """
    if n < 1:
        raise GeneratorError("n must be >= 1")
    rows, scales, offsets = [], [], []
    for i in range(n):
        x, a, b = _draw_signal(params, params.template, _signal_rng(seed, _PRE, i))
        rows.append(x)
        scales.append(a)
        offsets.append(b)
    out = SpectrumSet(params.grid, np.array(rows), tuple(f"pre{i + 1}" for i in range(n)))
    if return_draws:
        return out, Draws(np.array(scales), np.array(offsets))
    return out


def post_label(coupon: int, effect: float, replicate: int) -> str:
    return f"coupon{coupon}_delta{format_float(effect)}#{replicate}"


def generate_posttreatment(params: GenerativeParams, seed: int, return_draws: bool = False):
    """Emit ``replicates`` signals per entry of ``params.effects``.

    Labels read ``coupon<k>_delta<value>#<replicate>``; the part before ``#``
    groups the replicates of one coupon.
    """
    if params.pattern is None or params.effects is None:
        raise GeneratorError("post-treatment generation needs a pattern and effects")
    rows, labels, scales, offsets = [], [], [], []
    k = 0
    for c, delta in enumerate(params.effects, start=1):
        mean = params.template + delta * params.pattern
        for r in range(1, params.replicates + 1):
            x, a, b = _draw_signal(params, mean, _signal_rng(seed, _POST, k))
            rows.append(x)
            labels.append(post_label(c, delta, r))
            scales.append(a)
            offsets.append(b)
            k += 1
    out = SpectrumSet(params.grid, np.array(rows), tuple(labels))
    if return_draws:
        return out, Draws(np.array(scales), np.array(offsets))
    return out


# ---------------------------------------------------------------------------
# JSON configuration

_BUILTINS = {"template": builtin_template, "pattern": builtin_pattern}


def _load_vector(cfg: dict, key: str, grid: WavenumberGrid | None, base_dir: str):
    """Resolve ``<key>_file`` (spectra CSV, first column) or ``<key>_builtin``."""
    path = cfg.get(f"{key}_file")
    name = cfg.get(f"{key}_builtin")
    if path is not None and name is not None:
        raise GeneratorError(f"give only one of {key}_file and {key}_builtin")
    if path is not None:
        spec = read_spectra(os.path.join(base_dir, path))
        if grid is not None and spec.grid != grid:
            raise DimensionMismatch(f"{key} file grid differs from the template grid")
        v = spec.values[0]
        return (standardize(v) if key == "template" else v / np.linalg.norm(v)), spec.grid
    if name is not None:
        if name != "default":
            raise GeneratorError(f"unknown builtin {key} {name!r}")
        g = grid or DEFAULT_GRID
        return _BUILTINS[key](g), g
    return None, grid


def params_from_config(cfg: dict, base_dir: str = ".") -> GenerativeParams:
    """Build :class:`GenerativeParams` from the JSON-config dictionary.

    Recognised keys: ``template_file | template_builtin``, ``scale_law``,
    ``offset_law``, ``sigma``, ``pattern_file | pattern_builtin``,
    ``effects``, ``replicates`` and optionally ``grid`` (start/end/count,
    only used with builtins). Missing keys fall back to the built-in
    template and pattern, 9 coupons with effects 8,5,3,2,...,2 and 3
    replicates each.
    """
    grid = None
    if "grid" in cfg:
        g = cfg["grid"]
        grid = WavenumberGrid(float(g["start"]), float(g["end"]), int(g["count"]))
    if "template_file" not in cfg and "template_builtin" not in cfg:
        cfg = {**cfg, "template_builtin": "default"}
    template, grid = _load_vector(cfg, "template", grid, base_dir)
    pattern, _ = _load_vector(cfg, "pattern", grid, base_dir)
    effects = cfg.get("effects", DEFAULT_EFFECTS)
    if pattern is None and effects is not None:
        pattern = builtin_pattern(grid)
    kw = dict(template=template, grid=grid, pattern=pattern,
              effects=None if effects is None else tuple(effects),
              replicates=cfg.get("replicates", DEFAULT_REPLICATES), sigma=cfg.get("sigma"))
    if "scale_law" in cfg:
        kw["scale_law"] = Law.from_dict(cfg["scale_law"])
    if "offset_law" in cfg:
        kw["offset_law"] = Law.from_dict(cfg["offset_law"])
    return GenerativeParams(**kw)


def load_params(path) -> tuple[GenerativeParams, dict]:
    with open(path) as fh:
        cfg = json.load(fh)
    return params_from_config(cfg, os.path.dirname(os.path.abspath(path))), cfg
