import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_set, small_grid, unit_zero_mean
from ftir_effects.errors import DegenerateSignal, DimensionMismatch, EigenGapWarning
from ftir_effects.simulate import GenerativeParams, Law, generate_pretreatment
from ftir_effects.template import (AffineAlignment, align_to_target, aligned_signals,
                                   alignment_objective, build_quadratic_form,
                                   estimate_template)


def sign_aligned(a, b):
    return a if a @ b >= 0 else -a


def random_feasible(rng, p, k):
    V = rng.standard_normal((k, p))
    V -= V.mean(axis=1, keepdims=True)
    return V / np.linalg.norm(V, axis=1, keepdims=True)


class TestAlignToTarget:
    def test_identity(self):
        t = unit_zero_mean(np.random.default_rng(0), 9)
        al = align_to_target(t, t)
        assert al.c == pytest.approx(1.0, abs=1e-14)
        assert al.d == pytest.approx(0.0, abs=1e-14)

    def test_exact_affine_inverse(self):
        t = unit_zero_mean(np.random.default_rng(1), 9)
        al = align_to_target(2 * t + 3, t)
        assert al.c == pytest.approx(0.5, abs=1e-14)
        assert al.d == pytest.approx(-1.5, abs=1e-14)
        assert al.scale == pytest.approx(2.0)
        assert al.offset == pytest.approx(3.0)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_matches_grid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        t = unit_zero_mean(rng, 6)
        x = 0.8 * t + 0.3 * rng.standard_normal(6) + 0.2
        c_o, d_o, f_o = oracles.grid_align(x, t)
        al = align_to_target(x, t)
        f = float(np.sum((al.apply(x) - t) ** 2))
        assert abs(f - f_o) <= 1e-6
        assert al.c == pytest.approx(c_o, abs=1e-6)
        assert al.d == pytest.approx(d_o, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 32), st.integers(3, 30))
    def test_residual_orthogonal_to_span(self, seed, p):
        rng = np.random.default_rng(seed)
        x, t = rng.standard_normal(p) * 5, rng.standard_normal(p)
        r = align_to_target(x, t).apply(x) - t
        nr = np.linalg.norm(r)
        assert abs(x @ r) <= 1e-8 * np.linalg.norm(x) * nr + 1e-12
        assert abs(r.sum()) <= 1e-8 * np.sqrt(p) * nr + 1e-12

    def test_constant_signal_raises(self):
        with pytest.raises(DegenerateSignal):
            align_to_target(np.full(5, 2.0), np.arange(5.0))

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            align_to_target(np.arange(5.0), np.arange(4.0))


class TestQuadraticForm:
    def test_orthogonal_direction_gives_full_residual(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(7)
        M = build_quadratic_form(make_set([x, x]))
        v = rng.standard_normal(7)
        xc = x - x.mean()
        v -= v.mean()
        v -= (v @ xc) / (xc @ xc) * xc
        v /= np.linalg.norm(v)
        assert M.quad(v) == pytest.approx(2.0, abs=1e-12)

    def test_perfect_fit_direction(self):
        x = np.random.default_rng(3).standard_normal(7)
        v = (x - x.mean()) / np.linalg.norm(x - x.mean())
        assert build_quadratic_form(make_set([x])).quad(v) == pytest.approx(0.0, abs=1e-14)

    def test_matches_per_signal_least_squares(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((3, 5))
        M = build_quadratic_form(make_set(X))
        for v in random_feasible(rng, 5, 20) * rng.uniform(0.5, 2, (20, 1)):
            assert M.quad(v) == pytest.approx(oracles.profiled_objective(X, v), abs=1e-9)

    def test_dense_matches_explicit_projectors(self):
        X = np.random.default_rng(5).standard_normal((4, 6))
        np.testing.assert_allclose(build_quadratic_form(make_set(X)).to_dense(),
                                   oracles.dense_profiled_form(X), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32))
    def test_symmetric_psd(self, seed):
        rng = np.random.default_rng(seed)
        M = build_quadratic_form(make_set(rng.standard_normal((3, 6)))).to_dense()
        np.testing.assert_allclose(M, M.T, atol=1e-12)
        for v in rng.standard_normal((10, 6)):
            assert v @ M @ v >= -1e-10

    def test_constant_signal_raises(self):
        X = np.random.default_rng(6).standard_normal((3, 5))
        X[2] = 1.0
        with pytest.raises(DegenerateSignal):
            build_quadratic_form(make_set(X))


class TestEstimateTemplate:
    def test_noise_free_recovery(self, noise_free_params):
        pre = generate_pretreatment(noise_free_params, 6, seed=1)
        fit = estimate_template(pre)
        x0 = noise_free_params.template
        assert np.abs(sign_aligned(fit.template, x0) - x0).max() <= 1e-9
        assert fit.objective <= 1e-20

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_two_angle_grid(self, seed):
        X = np.random.default_rng(100 + seed).standard_normal((3, 4))
        fit = estimate_template(make_set(X))
        assert abs(fit.objective - oracles.two_angle_grid_min(X)) <= 1e-5

    def test_full_scale_recovery(self, design_data, design_params):
        fit = estimate_template(design_data[0])
        assert abs(fit.template @ design_params.template) >= 0.999

    def test_stored_fields_consistent(self, design_data):
        pre = design_data[0]
        fit = estimate_template(pre)
        assert abs(np.linalg.norm(fit.template) - 1) <= 1e-9
        assert abs(fit.template.sum()) <= 1e-9
        f = alignment_objective(pre.values, fit.template, fit.c, fit.d)
        assert f == pytest.approx(fit.objective, rel=1e-9)
        assert fit.c.sum() > 0
        assert fit.eigenvalue == pytest.approx(fit.objective, rel=1e-9, abs=1e-12)
        assert fit.eigen_gap > 0

    def test_eigen_residual(self):
        X = np.random.default_rng(7).standard_normal((5, 8))
        fit = estimate_template(make_set(X))
        M = build_quadratic_form(make_set(X))
        v = fit.template
        Pmv = M.matvec(v)
        Pmv -= Pmv.mean()
        assert np.linalg.norm(Pmv - fit.eigenvalue * v) <= 1e-10 * max(1.0, fit.eigenvalue)

    def test_optimality_certificate(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((6, 12))
        fit = estimate_template(make_set(X))
        M = build_quadratic_form(make_set(X))
        f0 = M.quad(fit.template)
        for u in random_feasible(rng, 12, 100):
            assert M.quad(u) >= f0 - 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32))
    def test_affine_invariance(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((5, 10))
        k = rng.uniform(0.5, 2, 5) * rng.choice([-1, 1], 5)
        m = rng.uniform(-1, 1, 5)
        a = estimate_template(make_set(X)).template
        b = estimate_template(make_set(k[:, None] * X + m[:, None])).template
        assert np.abs(sign_aligned(b, a) - a).max() <= 1e-8

    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((6, 10))
        perm = rng.permutation(6)
        a = estimate_template(make_set(X))
        b = estimate_template(make_set(X[perm]))
        np.testing.assert_allclose(b.template, a.template, atol=1e-12)
        np.testing.assert_allclose(b.c, a.c[perm], atol=1e-10)

    def test_sign_convention(self):
        X = np.random.default_rng(10).standard_normal((4, 9))
        assert estimate_template(make_set(X)).c.sum() > 0
        assert estimate_template(make_set(-X)).c.sum() > 0

    def test_eigen_gap_warning_for_identical_signals(self):
        x = np.random.default_rng(11).standard_normal(6)
        y = np.random.default_rng(12).standard_normal(6)
        # two signals with orthogonal centered parts: both singular values are 1
        xc, yc = x - x.mean(), y - y.mean()
        yc -= (yc @ xc) / (xc @ xc) * xc
        X = np.vstack([xc / np.linalg.norm(xc), yc / np.linalg.norm(yc)])
        with pytest.warns(EigenGapWarning):
            estimate_template(make_set(X))

    def test_no_warning_on_regular_input(self, design_data):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            estimate_template(design_data[0])

    @pytest.mark.parametrize("shape", [(1, 5), (3, 2)])
    def test_size_preconditions(self, shape):
        with pytest.raises(ValueError):
            estimate_template(make_set(np.random.default_rng(0).standard_normal(shape)))

    def test_constant_signal_named(self):
        X = np.random.default_rng(13).standard_normal((3, 6))
        X[1] = 0.5
        with pytest.raises(DegenerateSignal) as exc:
            estimate_template(make_set(X, ("a", "b", "c")))
        assert exc.value.index == 1


class TestAlignedSignals:
    def test_noise_free_all_equal_template(self, noise_free_params):
        pre = generate_pretreatment(noise_free_params, 5, seed=2)
        fit = estimate_template(pre)
        al = aligned_signals(fit, pre).values
        assert np.abs(al - fit.template).max() <= 1e-9

    def test_aligned_means_are_zero(self):
        X = np.random.default_rng(14).standard_normal((5, 11)) + 3
        fit = estimate_template(make_set(X))
        assert np.abs(aligned_signals(fit, make_set(X)).values.mean(axis=1)).max() <= 1e-8

    def test_spread_reduced_on_full_scale(self, design_data):
        pre = design_data[0]
        fit = estimate_template(pre)
        raw = pre.values.std(axis=0)
        al = aligned_signals(fit, pre).values.std(axis=0)
        assert np.mean(al <= raw) >= 0.95

    def test_shape_mismatch(self):
        X = np.random.default_rng(15).standard_normal((3, 6))
        fit = estimate_template(make_set(X))
        with pytest.raises(DimensionMismatch):
            aligned_signals(fit, make_set(X[:2]))

    def test_affine_alignment_helpers(self):
        al = AffineAlignment(0.5, -1.5)
        np.testing.assert_allclose(al.apply([2.0, 4.0]), [-0.5, 0.5])


def test_noise_free_parameters_recovered():
    rng = np.random.default_rng(16)
    x0 = unit_zero_mean(rng, 20)
    pr = GenerativeParams(x0, small_grid(20), Law.uniform(0.5, 2), Law.uniform(-1, 1), sigma=0.0)
    pre, draws = generate_pretreatment(pr, 4, seed=3, return_draws=True)
    fit = estimate_template(pre)
    np.testing.assert_allclose([a.scale for a in fit.alignments], draws.scales, atol=1e-9)
    np.testing.assert_allclose([a.offset for a in fit.alignments], draws.offsets, atol=1e-9)
