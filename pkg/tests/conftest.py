import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ftir_effects.simulate import (GenerativeParams, Law, generate_posttreatment,  # noqa: E402
                                   generate_pretreatment, standardize)
from ftir_effects.spectra import SpectrumSet, WavenumberGrid  # noqa: E402


def small_grid(p):
    return WavenumberGrid(1000.0, 1000.0 + (p - 1), p)


def make_set(X, labels=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = labels or tuple(f"s{i}" for i in range(X.shape[0]))
    return SpectrumSet(small_grid(X.shape[1]), X, tuple(labels))


def unit_zero_mean(rng, p):
    return standardize(rng.standard_normal(p))


def feasible_pattern(rng, template):
    """Random unit vector orthogonal to 1 and the template."""
    g = rng.standard_normal(template.size)
    g -= g.mean()
    g -= (g @ template) * template
    return g / np.linalg.norm(g)


def project_admissible(v, template):
    v = v - v.mean()
    v = v - (v @ template) * template
    return v / np.linalg.norm(v)


@pytest.fixture(scope="session")
def design_params():
    return GenerativeParams.reference_design()


@pytest.fixture(scope="session")
def design_data(design_params):
    """Full-scale simulation (33 pre, 27 post signals, p = 1798) at seed 11."""
    pre = generate_pretreatment(design_params, 33, seed=11)
    post = generate_posttreatment(design_params, seed=11)
    return pre, post


@pytest.fixture(scope="session")
def noise_free_params():
    rng = np.random.default_rng(5)
    grid = small_grid(40)
    x0 = unit_zero_mean(rng, 40)
    g = feasible_pattern(rng, x0)
    return GenerativeParams(x0, grid, Law.uniform(0.7, 1.3), Law.uniform(-0.1, 0.1),
                            sigma=0.0, pattern=g, effects=(4.0, 2.0, 1.0, -0.5),
                            replicates=2)
