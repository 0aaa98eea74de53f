"""Command implementations: read inputs, run the estimators, write artifacts.

Every command writes into one output directory, refuses to overwrite
existing artifacts unless ``force`` is set, and finishes with a
``report-<command>.json`` listing input digests, emitted files and stage
timings. Failures are raised as :class:`CommandError` carrying the exit code.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .baselines import msc_correct
from .effect import BcdOptions, bcd_fit
from .errors import (DegenerateSignal, EmptyCandidates, FtirError, NearZeroSlope,
                     NonFiniteSignal, ParseError)
from .simulate import (DEFAULT_N_PRE, generate_posttreatment, generate_pretreatment,
                       params_from_config)
from .spectra import (SpectrumSet, WavenumberGrid, label_group, spectra_from_csv,
                      spectra_to_csv, validate_set, write_csv_text)
from .sparsify import Frame, TWO_PI, compute_landscape, find_candidates, select_and_polish
from .template import aligned_signals, estimate_template

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4
EXIT_NO_CANDIDATES = 5
EXIT_EXISTS = 6


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    """Resolved inputs, solver options and generator settings for one command."""

    out: str
    pre: str | None = None
    post: str | None = None
    template: str | None = None
    effect: str | None = None
    config_path: str | None = None
    config: dict = field(default_factory=dict)
    seed: int | None = None
    exclude_labels: tuple = ()
    force: bool = False
    tol: float = 1e-10
    max_iter: int = 500
    bcd_method: str = "joint"
    bcd_restarts: int = 0
    grid_theta: int = 720
    grid_phi: int = 360
    cos_phi_floor: float = 0.5
    with_msc: bool = False

    def validate(self):
        if not self.tol > 0:
            raise CommandError("--tol must be > 0", EXIT_INVALID)
        if self.max_iter < 1:
            raise CommandError("--max-iter must be >= 1", EXIT_INVALID)
        if self.grid_theta < 16 or self.grid_phi < 16:
            raise CommandError("landscape grid counts must be >= 16", EXIT_INVALID)
        if not 0 <= self.cos_phi_floor <= 1:
            raise CommandError("--cos-phi-floor must lie in [0, 1]", EXIT_INVALID)
        if self.bcd_restarts < 0:
            raise CommandError("--bcd-restarts must be >= 0", EXIT_INVALID)
        if self.bcd_method not in ("joint", "plain"):
            raise CommandError(f"unknown bcd_method {self.bcd_method!r}", EXIT_INVALID)
        if self.seed is not None and not (0 <= self.seed < 2 ** 64):
            raise CommandError("--seed must be an unsigned 64-bit integer", EXIT_INVALID)

    def bcd_options(self) -> BcdOptions:
        return BcdOptions(tol=self.tol, max_iter=self.max_iter, method=self.bcd_method,
                          restarts=self.bcd_restarts)

    def in_out(self, name):
        return os.path.join(self.out, name)


# ---------------------------------------------------------------------------
# file helpers

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dumps(obj) -> str:
    """Deterministic JSON; floats use the shortest round-trip representation."""
    return json.dumps(_clean(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def atomic_write(path, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def grid_dict(grid: WavenumberGrid) -> dict:
    return {"start": grid.start, "end": grid.end, "count": grid.count}


class Run:
    """Collects digests, artifacts, timings and warnings of one command."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.inputs: dict[str, str] = {}
        self.artifacts: list[dict] = []
        self.timings: dict[str, float] = {}
        self.warnings: list[str] = []

    def digest(self, role: str, path: str) -> str:
        self.inputs[role] = sha256_file(path)
        return self.inputs[role]

    def emit(self, name: str, role: str, text: str):
        path = self.cfg.in_out(name)
        try:
            atomic_write(path, text)
        except OSError as exc:
            raise CommandError(f"cannot write {path}: {exc}", EXIT_IO) from None
        self.artifacts.append({"path": name, "role": role,
                               "sha256": hashlib.sha256(text.encode()).hexdigest()})

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            yield
        self.timings[name] = round((time.perf_counter() - t0) * 1000.0, 3)
        for w in caught:
            self.warnings.append(f"{name}: {w.category.__name__}: {w.message}")

    def report(self) -> dict:
        return {
            "command": self.command,
            "inputs": dict(self.inputs),
            "artifacts": list(self.artifacts),
            "timings_ms": dict(self.timings),
            "warnings": list(self.warnings),
            "kernel_backend": kernels.BACKEND,
        }

    def finish(self) -> str:
        name = f"report-{self.command}.json"
        path = self.cfg.in_out(name)
        self.artifacts.append({"path": name, "role": "report", "sha256": None})
        try:
            atomic_write(path, dumps(self.report()))
        except OSError as exc:
            raise CommandError(f"cannot write {path}: {exc}", EXIT_IO) from None
        return path


# ---------------------------------------------------------------------------
# input loading

def _require_file(path, what):
    if path is None:
        raise CommandError(f"missing {what} input", EXIT_INVALID)
    if not os.path.isfile(path):
        raise CommandError(f"{what} file not found: {path}", EXIT_INVALID)


def _load_spectra(path, what, exclude=()) -> SpectrumSet:
    try:
        with open(path, newline="") as fh:
            signals = spectra_from_csv(fh.read())
    except ParseError as exc:
        raise CommandError(f"{path}: {exc}", EXIT_INVALID) from None
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc}", EXIT_IO) from None
    if exclude:
        signals = signals.exclude(exclude)
    report = validate_set(signals)
    if report.nonfinite:
        i, j = report.nonfinite[0]
        raise CommandError(
            f"{path}: signal {signals.labels[i]!r} has a non-finite value at row {j + 2}",
            EXIT_INVALID)
    if report.degenerate:
        i = report.degenerate[0]
        raise CommandError(f"{path}: signal {signals.labels[i]!r} is constant; cannot align",
                           EXIT_DEGENERATE)
    if signals.n < 2:
        raise CommandError(f"{path}: need at least 2 {what} signals, got {signals.n}",
                           EXIT_INVALID)
    return signals


def _load_json(path, what) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CommandError(f"{path}: invalid {what} JSON ({exc})", EXIT_INVALID) from None
    except OSError as exc:
        raise CommandError(f"cannot read {path}: {exc}", EXIT_IO) from None


def _load_template(cfg: RunConfig, run: Run, grid: WavenumberGrid) -> np.ndarray:
    path = cfg.template or cfg.in_out("template.json")
    _require_file(path, "template.json")
    doc = _load_json(path, "template")
    run.digest("template", path)
    try:
        x0 = np.asarray(doc["template"], dtype=float)
        tgrid = WavenumberGrid(**doc["grid"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CommandError(f"{path}: malformed template ({exc})", EXIT_INVALID) from None
    if tgrid != grid:
        raise CommandError(f"{path}: template grid does not match the spectra grid", EXIT_INVALID)
    return x0


def _check_outputs(cfg: RunConfig, names):
    try:
        os.makedirs(cfg.out, exist_ok=True)
    except OSError as exc:
        raise CommandError(f"cannot create output directory {cfg.out}: {exc}", EXIT_IO) from None
    if cfg.force:
        return
    existing = [n for n in names if os.path.exists(cfg.in_out(n))]
    if existing:
        raise CommandError(
            f"refusing to overwrite {', '.join(existing)} in {cfg.out} (use --force)", EXIT_EXISTS)


_ERROR_CODES = (
    (DegenerateSignal, EXIT_DEGENERATE),
    (NearZeroSlope, EXIT_DEGENERATE),
    (EmptyCandidates, EXIT_NO_CANDIDATES),
    (NonFiniteSignal, EXIT_INVALID),
)


@contextmanager
def _mapped_errors():
    try:
        yield
    except CommandError:
        raise
    except FtirError as exc:
        for kind, code in _ERROR_CODES:
            if isinstance(exc, kind):
                raise CommandError(str(exc), code) from None
        raise CommandError(str(exc), EXIT_INVALID) from None


# ---------------------------------------------------------------------------
# stages shared by the single commands and the pipeline

TEMPLATE_OUTPUTS = ("template.json", "aligned.csv")
EFFECT_OUTPUTS = ("effect.json", "delta.csv", "delta_by_group.csv")
SPARSIFY_OUTPUTS = ("pattern.json", "pattern.csv", "landscape.csv")
MSC_OUTPUTS = ("msc.json", "msc_corrected.csv")


def _template_stage(run: Run, pre: SpectrumSet):
    with run.stage("estimate_template"), _mapped_errors():
        fit = estimate_template(pre)
        aligned = aligned_signals(fit, pre)
    doc = {"grid": grid_dict(pre.grid), "inputs": dict(run.inputs), **fit.to_dict()}
    run.emit("template.json", "template", dumps(doc))
    run.emit("aligned.csv", "aligned pre-treatment signals", spectra_to_csv(aligned))
    return fit


def _group_means(labels, values):
    groups: dict[str, list[float]] = {}
    for lab, v in zip(labels, values):
        groups.setdefault(label_group(lab), []).append(float(v))
    return [(g, float(np.mean(vs)), len(vs)) for g, vs in groups.items()]


def _effect_stage(run: Run, post: SpectrumSet, x0: np.ndarray, template_digest: str):
    with run.stage("bcd_fit"), _mapped_errors():
        fit = bcd_fit(post, x0, run.cfg.bcd_options())
    if fit.no_effect:
        run.warnings.append("bcd_fit: NoEffect: post-treatment signals carry no effect pattern")
    if not fit.converged:
        run.warnings.append(f"bcd_fit: not converged after {fit.iterations} iterations")
    doc = {"grid": grid_dict(post.grid), "inputs": dict(run.inputs),
           "template_sha256": template_digest,
           "options": {"tol": run.cfg.tol, "max_iter": run.cfg.max_iter,
                       "method": run.cfg.bcd_method}, **fit.to_dict()}
    run.emit("effect.json", "effect fit", dumps(doc))
    run.emit("delta.csv", "effects per signal", _delta_csv(fit))
    rows = ["group,mean_delta,count"]
    rows += [f"{_csv_field(g)},{repr(m)},{k}" for g, m, k in _group_means(fit.labels, fit.effects)]
    run.emit("delta_by_group.csv", "effects per label group", "\n".join(rows) + "\n")
    return fit


def _csv_field(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _delta_csv(fit) -> str:
    lines = ["label,delta,delta_normalized"]
    for lab, d, dn in zip(fit.labels, fit.effects, fit.normalized_effects):
        lines.append(f"{_csv_field(lab)},{repr(float(d))},{repr(float(dn))}")
    return "\n".join(lines) + "\n"


def _sparsify_stage(run: Run, grid: WavenumberGrid, pattern_tilde, x0):
    cfg = run.cfg
    with run.stage("scan_landscape"), _mapped_errors():
        frame = Frame(pattern_tilde, x0)
        landscape = compute_landscape(frame, cfg.grid_theta, cfg.grid_phi)
        candidates = find_candidates(landscape)
    with run.stage("select_and_polish"), _mapped_errors():
        step = max(TWO_PI / cfg.grid_theta, math.pi / (cfg.grid_phi - 1))
        result = select_and_polish(candidates, frame, cfg.cos_phi_floor, step)
    if result.cos_phi_floor != cfg.cos_phi_floor:
        run.warnings.append(
            f"select_and_polish: cos(phi) floor relaxed to {result.cos_phi_floor!r}")
    doc = {"grid": grid_dict(grid), "inputs": dict(run.inputs),
           "grid_theta": cfg.grid_theta, "grid_phi": cfg.grid_phi,
           "requested_cos_phi_floor": cfg.cos_phi_floor, **result.to_dict()}
    run.emit("pattern.json", "sparsified pattern and candidates", dumps(doc))
    run.emit("pattern.csv", "pattern on the wavenumber grid",
             write_csv_text({"pattern": result.pattern, "pattern_tilde": pattern_tilde},
                            "wavenumber", grid.points))
    th = np.repeat(landscape.thetas, landscape.phis.size)
    ph = np.tile(landscape.phis, landscape.thetas.size)
    lines = ["theta,phi,G"]
    lines += [f"{a!r},{b!r},{c!r}" for a, b, c in
              zip(th.tolist(), ph.tolist(), landscape.values.ravel().tolist())]
    run.emit("landscape.csv", "G landscape", "\n".join(lines) + "\n")
    return result


def _msc_stage(run: Run, pre: SpectrumSet):
    with run.stage("msc_correct"), _mapped_errors():
        fit = msc_correct(pre)
    run.emit("msc.json", "MSC fit",
             dumps({"grid": grid_dict(pre.grid), "inputs": dict(run.inputs), **fit.to_dict()}))
    run.emit("msc_corrected.csv", "MSC-corrected signals", spectra_to_csv(fit.corrected))
    return fit


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig) -> str:
    seed = cfg.seed if cfg.seed is not None else cfg.config.get("seed")
    if seed is None:
        raise CommandError("simulate needs a seed (--seed or config 'seed')", EXIT_INVALID)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        raise CommandError("seed must be an unsigned 64-bit integer", EXIT_INVALID)
    n_pre = cfg.config.get("n_pre", DEFAULT_N_PRE)
    if not isinstance(n_pre, int) or n_pre < 1:
        raise CommandError("n_pre must be a positive integer", EXIT_INVALID)
    run = Run("simulate", cfg)
    if cfg.config_path:
        run.digest("config", cfg.config_path)
    base = os.path.dirname(os.path.abspath(cfg.config_path)) if cfg.config_path else "."
    try:
        params = params_from_config(cfg.config, base)
    except (FtirError, KeyError, TypeError, ValueError) as exc:
        raise CommandError(f"invalid generator config: {exc}", EXIT_INVALID) from None
    except OSError as exc:
        raise CommandError(f"cannot read generator input: {exc}", EXIT_IO) from None
    _check_outputs(cfg, ("pre.csv", "post.csv", "truth.json"))
    with run.stage("generate"), _mapped_errors():
        pre, pre_draws = generate_pretreatment(params, n_pre, seed, return_draws=True)
        post, post_draws = generate_posttreatment(params, seed, return_draws=True)
    per_signal = [e for e in params.effects for _ in range(params.replicates)]
    truth = {
        "seed": seed,
        "grid": grid_dict(params.grid),
        "sigma": params.sigma,
        "scale_law": params.scale_law.to_dict(),
        "offset_law": params.offset_law.to_dict(),
        "template": params.template,
        "pattern": params.pattern,
        "effects": list(params.effects),
        "replicates": params.replicates,
        "pre": {"labels": list(pre.labels), "scales": pre_draws.scales,
                "offsets": pre_draws.offsets},
        "post": {"labels": list(post.labels), "scales": post_draws.scales,
                 "offsets": post_draws.offsets, "effects": per_signal},
        "inputs": dict(run.inputs),
    }
    run.emit("pre.csv", "pre-treatment signals", spectra_to_csv(pre))
    run.emit("post.csv", "post-treatment signals", spectra_to_csv(post))
    run.emit("truth.json", "generating parameters", dumps(truth))
    return run.finish()


def cmd_template(cfg: RunConfig) -> str:
    _require_file(cfg.pre, "pre-treatment CSV")
    run = Run("template", cfg)
    run.digest("pre", cfg.pre)
    pre = _load_spectra(cfg.pre, "pre-treatment", cfg.exclude_labels)
    _check_outputs(cfg, TEMPLATE_OUTPUTS)
    _template_stage(run, pre)
    return run.finish()


def cmd_effect(cfg: RunConfig) -> str:
    _require_file(cfg.post, "post-treatment CSV")
    run = Run("effect", cfg)
    run.digest("post", cfg.post)
    post = _load_spectra(cfg.post, "post-treatment", cfg.exclude_labels)
    x0 = _load_template(cfg, run, post.grid)
    _check_outputs(cfg, EFFECT_OUTPUTS)
    _effect_stage(run, post, x0, run.inputs["template"])
    return run.finish()


def cmd_sparsify(cfg: RunConfig) -> str:
    run = Run("sparsify", cfg)
    eff_path = cfg.effect or cfg.in_out("effect.json")
    _require_file(eff_path, "effect.json")
    doc = _load_json(eff_path, "effect")
    run.digest("effect", eff_path)
    try:
        grid = WavenumberGrid(**doc["grid"])
        no_effect = bool(doc["no_effect"])
        pattern_tilde = doc["pattern_tilde"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CommandError(f"{eff_path}: malformed effect fit ({exc})", EXIT_INVALID) from None
    if no_effect or pattern_tilde is None:
        raise CommandError(f"{eff_path}: fit reports no effect; nothing to sparsify",
                           EXIT_INVALID)
    x0 = _load_template(cfg, run, grid)
    recorded = doc.get("template_sha256")
    if recorded is not None and recorded != run.inputs["template"]:
        raise CommandError("effect.json was computed from a different template.json",
                           EXIT_INVALID)
    _check_outputs(cfg, SPARSIFY_OUTPUTS)
    _sparsify_stage(run, grid, np.asarray(pattern_tilde, dtype=float), x0)
    return run.finish()


def cmd_msc(cfg: RunConfig) -> str:
    _require_file(cfg.pre, "pre-treatment CSV")
    run = Run("msc", cfg)
    run.digest("pre", cfg.pre)
    pre = _load_spectra(cfg.pre, "pre-treatment", cfg.exclude_labels)
    _check_outputs(cfg, MSC_OUTPUTS)
    _msc_stage(run, pre)
    return run.finish()


def cmd_pipeline(cfg: RunConfig) -> str:
    """template -> effect -> sparsify (+ MSC) with a single report.

    Inputs are checked before any computation; stages run in order and the
    first failure aborts the rest.
    """
    _require_file(cfg.pre, "pre-treatment CSV")
    _require_file(cfg.post, "post-treatment CSV")
    run = Run("pipeline", cfg)
    run.digest("pre", cfg.pre)
    run.digest("post", cfg.post)
    pre = _load_spectra(cfg.pre, "pre-treatment", cfg.exclude_labels)
    post = _load_spectra(cfg.post, "post-treatment", cfg.exclude_labels)
    if pre.grid != post.grid:
        raise CommandError("pre- and post-treatment grids differ", EXIT_INVALID)
    outputs = TEMPLATE_OUTPUTS + EFFECT_OUTPUTS + SPARSIFY_OUTPUTS
    if cfg.with_msc:
        outputs += MSC_OUTPUTS
    _check_outputs(cfg, outputs + ("report-pipeline.json",))
    tfit = _template_stage(run, pre)
    efit = _effect_stage(run, post, tfit.template, run.artifacts[0]["sha256"])
    if efit.no_effect:
        run.warnings.append("sparsify: skipped because no effect was detected")
    else:
        _sparsify_stage(run, pre.grid, efit.pattern_tilde, tfit.template)
    if cfg.with_msc:
        _msc_stage(run, pre)
    return run.finish()


COMMANDS = {
    "simulate": cmd_simulate,
    "template": cmd_template,
    "effect": cmd_effect,
    "sparsify": cmd_sparsify,
    "msc": cmd_msc,
    "pipeline": cmd_pipeline,
}
