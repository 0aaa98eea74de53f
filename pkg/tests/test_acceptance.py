"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
under output capture) or directly with ``python3 tests/test_acceptance.py``.
Criteria 7 and 8 audit every template, effect and sparsify result produced
by the earlier criteria, so the module is meant to run top to bottom.
"""
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

import oracles
from conftest import make_set, project_admissible, small_grid, unit_zero_mean
from ftir_effects.baselines import msc_correct
from ftir_effects.effect import (BcdOptions, bcd_fit, bcd_iteration, bcd_objective,
                                 project_out, rank1_step)
from ftir_effects.simulate import (GenerativeParams, Law, generate_posttreatment,
                                   generate_pretreatment)
from ftir_effects.sparsify import Frame, sparsify
from ftir_effects.template import estimate_template

SEEDS = range(10)
SINGLE_THREAD_ENV = {"OMP_NUM_THREADS": "1", "OPENBLAS_NUM_THREADS": "1",
                     "MKL_NUM_THREADS": "1"}

TEMPLATES: list = []      # every template fit made by the suite
EFFECTS: list = []        # (signals, template, fit) for every bcd_fit run
PATTERNS: list = []       # every sparsified pattern


def fit_template(pre):
    with threadpool_limits(1):
        t0 = time.perf_counter()
        fit = estimate_template(pre)
        elapsed = time.perf_counter() - t0
    TEMPLATES.append(fit)
    return fit, elapsed


def fit_effect(post, x0, **kw):
    fit = bcd_fit(post, x0, **kw)
    EFFECTS.append((post, x0, fit))
    return fit


def fit_pattern(fit, x0):
    res = sparsify(fit.pattern_tilde, x0, 720, 360)
    PATTERNS.append(res)
    return res


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def params():
    return GenerativeParams.reference_design()


@pytest.fixture(scope="module")
def design_runs(params):
    runs = []
    for seed in SEEDS:
        pre = generate_pretreatment(params, 33, seed=seed)
        post = generate_posttreatment(params, seed=seed)
        tfit, elapsed = fit_template(pre)
        efit = fit_effect(post, tfit.template)
        runs.append(dict(seed=seed, pre=pre, post=post, template=tfit, seconds=elapsed,
                         effect=efit, pattern=fit_pattern(efit, tfit.template)))
    return runs


def sign_aligned(a, b):
    return a if a @ b >= 0 else -a


def test_01_template_recovery(design_runs, params, report):
    cosines = [abs(r["template"].template @ params.template) for r in design_runs]
    slowest = max(r["seconds"] for r in design_runs)
    ok = min(cosines) >= 0.999 and slowest <= 2.0
    report(1, ok, f"min |cos| = {min(cosines):.6f} over {len(cosines)} seeds (>= 0.999), "
                  f"slowest estimate_template = {slowest:.3f} s (<= 2 s)")


def test_02_noise_free_exactness(params, report):
    x0 = params.template
    g = project_admissible(params.pattern, x0)
    clean = params.evolve(sigma=0.0, pattern=g)
    worst = {"template": 0.0, "delta g": 0.0, "pre alignments": 0.0, "post alignments": 0.0}
    for seed in range(3):
        pre, pre_draws = generate_pretreatment(clean, 33, seed=seed, return_draws=True)
        post, post_draws = generate_posttreatment(clean, seed=seed, return_draws=True)
        tfit, _ = fit_template(pre)
        xh = tfit.template
        worst["template"] = max(worst["template"], np.abs(sign_aligned(xh, x0) - x0).max())
        err = max(np.abs(tfit.c - 1 / pre_draws.scales).max(),
                  np.abs(tfit.d + pre_draws.offsets / pre_draws.scales).max())
        worst["pre alignments"] = max(worst["pre alignments"], err)
        efit = fit_effect(post, xh)
        delta = np.repeat(clean.effects, clean.replicates)
        err = np.abs(np.outer(efit.effects, efit.pattern_tilde) - np.outer(delta, g)).max()
        worst["delta g"] = max(worst["delta g"], err)
        err = max(np.abs(efit.c - 1 / post_draws.scales).max(),
                  np.abs(efit.d + post_draws.offsets / post_draws.scales).max())
        worst["post alignments"] = max(worst["post alignments"], err)
    ok = max(worst.values()) <= 1e-8
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(2, ok, f"max-abs errors with sigma=0: {detail} (<= 1e-8)")


def test_03_effect_trend(design_runs, params, report):
    rs = []
    for r in design_runs:
        fit = r["effect"]
        means = fit.effects.reshape(len(params.effects), params.replicates).mean(axis=1)
        rs.append(abs(np.corrcoef(means, params.effects)[0, 1]))
    report(3, min(rs) >= 0.95,
           f"min Pearson r (sign aligned) = {min(rs):.4f} over {len(rs)} seeds (>= 0.95)")


def test_04_pattern_recovery(design_runs, params, report):
    x0 = params.template
    truth = project_admissible(params.pattern, x0)
    cosines = [abs(project_admissible(r["pattern"].pattern, x0) @ truth) for r in design_runs]
    report(4, min(cosines) >= 0.95,
           f"min |cos| after projection = {min(cosines):.4f} over {len(cosines)} seeds (>= 0.95)")


def test_05_step1_oracle(report):
    gaps = []
    for trial in range(20):
        X = np.random.default_rng(500 + trial).standard_normal((3, 4))
        fit, _ = fit_template(make_set(X))
        gaps.append(abs(fit.objective - oracles.two_angle_grid_min(X)))
    report(5, max(gaps) <= 1e-5,
           f"max |objective - grid oracle| = {max(gaps):.2e} over 20 trials (<= 1e-5)")


def test_06_step2_oracle(report):
    gaps = []
    for trial in range(20):
        rng = np.random.default_rng(600 + trial)
        x0 = unit_zero_mean(rng, 7)
        M = rng.standard_normal((4, 7))
        r = rank1_step(M, x0)
        f = float(np.sum((project_out(M, x0) - np.outer(r.delta, r.pattern)) ** 2))
        gaps.append(abs(f - oracles.als_rank1(M, x0)))
    report(6, max(gaps) <= 1e-9,
           f"max |objective - 100-restart ALS oracle| = {max(gaps):.2e} over 20 trials (<= 1e-9)")


def test_07_descent(design_runs, report):
    # a few model instances with restarts so that path is audited too
    for seed in range(3):
        rng = np.random.default_rng(700 + seed)
        x0 = unit_zero_mean(rng, 12)
        pr = GenerativeParams(x0, small_grid(12), Law.uniform(0.5, 2),
                              Law.uniform(-1, 1), sigma=0.05,
                              pattern=project_admissible(rng.standard_normal(12), x0),
                              effects=tuple(rng.uniform(-3, 3, 4)), replicates=2)
        fit_effect(generate_posttreatment(pr, seed=seed), x0, options=BcdOptions(restarts=5))
    worst_rise, worst_extra, audited = 0.0, 0.0, 0
    for signals, x0, fit in EFFECTS:
        trace = fit.objective_trace
        worst_rise = max([worst_rise] + [b - a for a, b in zip(trace, trace[1:])])
        if fit.no_effect:
            continue
        c, d, step, _ = bcd_iteration(signals.values, x0, fit.effects, fit.pattern_tilde,
                                      joint=True)
        f = bcd_objective(signals.values, x0, c, d, step.delta, step.pattern)
        worst_extra = max(worst_extra, abs(fit.objective - f))
        audited += 1
    ok = worst_rise <= 1e-12 and worst_extra <= 1e-12
    report(7, ok, f"{len(EFFECTS)} bcd_fit runs: largest trace increase {worst_rise:.1e}, "
                  f"largest extra-iteration change {worst_extra:.1e} ({audited} audited, <= 1e-12)")


def test_08_constraints(design_runs, report):
    worst = 0.0
    for fit in TEMPLATES:
        x = fit.template
        worst = max(worst, abs(np.linalg.norm(x) - 1), abs(x.sum()))
    for _, x0, fit in EFFECTS:
        if fit.no_effect:
            continue
        g = fit.pattern_tilde
        worst = max(worst, abs(np.linalg.norm(g) - 1), abs(g.sum()), abs(g @ x0))
    for res in PATTERNS:
        worst = max(worst, abs(np.linalg.norm(res.pattern) - 1))
    run = design_runs[0]
    frame = Frame(run["effect"].pattern_tilde, run["template"].template)
    rng = np.random.default_rng(8)
    angles = zip(rng.uniform(-10, 10, 1000), rng.uniform(-10, 10, 1000))
    worst_angle = max(abs(np.linalg.norm(frame.pattern(t, p)) - 1) for t, p in angles)
    ok = worst <= 1e-8 and worst_angle <= 1e-9
    report(8, ok, f"{len(TEMPLATES)} templates, {len(EFFECTS)} patterns, {len(PATTERNS)} "
                  f"rotations: worst violation {worst:.1e} (<= 1e-8); 1000 random angle "
                  f"pairs: worst | ||g|| - 1 | = {worst_angle:.1e} (<= 1e-9)")


def test_09_affine_invariance(params, report):
    worst_t, worst_e = 0.0, 0.0
    for seed in range(3):
        pre = generate_pretreatment(params, 33, seed=900 + seed)
        post = generate_posttreatment(params, seed=900 + seed)
        rng = np.random.default_rng(seed)

        def warp(s):
            k = rng.uniform(0.5, 2.0, (s.n, 1))
            m = rng.uniform(-1.0, 1.0, (s.n, 1))
            return s.with_values(k * s.values + m)

        a, _ = fit_template(pre)
        b, _ = fit_template(warp(pre))
        worst_t = max(worst_t, np.abs(sign_aligned(b.template, a.template) - a.template).max())
        ea = fit_effect(post, a.template)
        eb = fit_effect(warp(post), b.template)
        worst_e = max(worst_e, np.abs(ea.effects - eb.effects).max(),
                      np.abs(ea.pattern_tilde - eb.pattern_tilde).max())
    ok = worst_t <= 1e-8 and worst_e <= 1e-8
    report(9, ok, f"max-abs change: template {worst_t:.1e}, (delta, g~) {worst_e:.1e} (<= 1e-8)")


def test_10_msc_comparison(params, report):
    het = params.evolve(scale_law=Law.choice([0.5, 2.0]))
    wins = 0
    for seed in range(20):
        pre = generate_pretreatment(het, 33, seed=1000 + seed)
        ours = abs(fit_template(pre)[0].template @ het.template)
        msc = abs(msc_correct(pre).normalized_reference() @ het.template)
        wins += ours >= msc
    report(10, wins >= 18, f"template at least as close as MSC reference in {wins}/20 seeds "
                           "(>= 18)")


def _cli(*args):
    env = dict(os.environ, **SINGLE_THREAD_ENV)
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "ftir_effects", *map(str, args)],
                          capture_output=True, text=True, env=env)
    return proc, time.perf_counter() - t0


def test_11_end_to_end(tmp_path, report):
    proc, _ = _cli("simulate", "--seed", 11, "--out", tmp_path / "data")
    assert proc.returncode == 0, proc.stderr
    outs, times, codes = [], [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        proc, seconds = _cli("pipeline", "--pre", tmp_path / "data" / "pre.csv",
                             "--post", tmp_path / "data" / "post.csv", "--out", out)
        codes.append(proc.returncode)
        times.append(seconds)
        outs.append(out)
    names = sorted(n for n in os.listdir(outs[0]) if not n.startswith("report-"))
    identical = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    grid = json.loads((outs[0] / "pattern.json").read_text())
    ok = (codes == [0, 0] and identical and max(times) <= 30.0
          and (grid["grid_theta"], grid["grid_phi"]) == (720, 360))
    report(11, ok, f"pipeline wall time {max(times):.2f} s single-threaded (<= 30 s), "
                   f"{len(names)} artifacts byte-identical across reruns: {identical}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
