from dataclasses import replace

import numpy as np
import pytest

from ssrkit.baselines import (
    RegressionModel,
    apply_regression,
    fit_regression,
    ms_dictionary_baseline,
    nearest_columns,
    pwc,
    regression_objective,
)
from ssrkit.datamodel import SpectralCube, box_srf, simulate_ms, split_overlap
from ssrkit.numkit import FactorizationError
from ssrkit.sparsecode import SStepParams

from oracles import brute_nearest, naive_product


def small_split(rng, p=6, q=2, height=3, width=6, overlap=(0, 3)):
    hs = SpectralCube(rng.random((p, height, width)))
    return split_overlap(hs, simulate_ms(hs, box_srf(p, q)), overlap)


# --- pwc ------------------------------------------------------------------------


def test_pwc_exact_member_copies_partner(rng):
    split = small_split(rng)
    idx = rng.integers(0, split.n, split.n1)
    split = replace(split, m_out=split.m_in[:, idx])
    np.testing.assert_array_equal(pwc(split), split.h_in[:, idx])


def test_pwc_tie_goes_to_lowest_index():
    m_in = np.array([[0.0, 2.0, 1.0, 3.0, 2.0]])  # 5-pixel toy, query 1.5 ties columns 1 and 2
    queries = np.array([[1.5, 2.5, 0.5]])
    assert list(nearest_columns(queries, m_in)) == list(brute_nearest(queries, m_in)) == [1, 1, 0]


def test_pwc_single_overlap_pixel(rng):
    split = small_split(rng, height=1, overlap=(0, 1))
    assert split.n == 1
    out = pwc(split)
    np.testing.assert_array_equal(out, np.repeat(split.h_in, split.n1, axis=1))


def test_pwc_matches_brute_oracle_and_membership(rng):
    split = small_split(rng, height=6, width=9, overlap=(2, 5))
    out = pwc(split)
    assert list(nearest_columns(split.m_out, split.m_in, chunk=1)) == list(brute_nearest(split.m_out, split.m_in))
    for col in out.T:
        assert np.any(np.all(split.h_in == col[:, None], axis=0))


# --- regression ------------------------------------------------------------------


def test_regression_recovers_planted_transform(rng):
    split = small_split(rng, q=3)
    t0 = rng.standard_normal((split.p, split.q))
    split = replace(split, h_in=t0 @ split.m_in)
    model = fit_regression(split, ridge=0.0)
    np.testing.assert_allclose(model.t, t0, atol=1e-8)


def test_regression_singular_without_ridge(rng):
    split = small_split(rng, q=3)
    split = replace(split, m_in=np.vstack([split.m_in[:2], split.m_in[:1]]))
    with pytest.raises(FactorizationError):
        fit_regression(split, ridge=0.0)
    assert np.all(np.isfinite(fit_regression(split, ridge=1e-3).t))


def test_regression_ridge_dominance(rng):
    split = small_split(rng)
    t = fit_regression(split, ridge=1e9).t
    scale = np.linalg.norm(split.h_in @ split.m_in.T)
    assert np.linalg.norm(t) <= scale / 1e9 * (1 + 1e-6)


def test_regression_gradient_vanishes(rng):
    split = small_split(rng, q=3)
    ridge = 0.05
    t = fit_regression(split, ridge=ridge).t
    grad = -2 * (split.h_in - t @ split.m_in) @ split.m_in.T + 2 * ridge * t
    assert np.linalg.norm(grad) <= 1e-8


def test_regression_beats_perturbations(rng):
    split = small_split(rng, q=3)
    model = fit_regression(split)
    best = regression_objective(model.t, split, model.ridge)
    for _ in range(100):
        e = rng.standard_normal(model.t.shape)
        e *= 1e-3 / np.linalg.norm(e)
        assert best <= regression_objective(model.t + e, split, model.ridge)


def test_apply_regression_cases(rng):
    m = rng.random((3, 7))
    assert not np.any(apply_regression(RegressionModel(np.zeros((5, 3)), 0.0), m))
    embed = np.eye(5)[:, :3]
    np.testing.assert_array_equal(apply_regression(RegressionModel(embed, 0.0), m)[:3], m)
    t = rng.standard_normal((5, 3))
    np.testing.assert_allclose(apply_regression(RegressionModel(t, 0.0), m), naive_product(t, m), atol=1e-12)


# --- MS-as-dictionary ---------------------------------------------------------------


def test_ms_dictionary_membership(planted_split):
    pick = np.random.default_rng(11).choice(planted_split.n, planted_split.n1, replace=False)
    split = replace(planted_split, m_out=planted_split.m_in[:, pick])
    result = ms_dictionary_baseline(split, SStepParams(eta=1e-6), atom_budget=split.n)
    rmse = np.sqrt(np.mean((result.estimate - planted_split.h_in[:, pick]) ** 2))
    assert rmse <= 1e-3


def test_ms_dictionary_single_atom(rng):
    split = small_split(rng)
    result = ms_dictionary_baseline(split, SStepParams(), atom_budget=1, seed=4)
    np.testing.assert_allclose(result.codes, 1.0, atol=1e-12)
    atom = split.h_in[:, result.atoms[0]]
    np.testing.assert_allclose(result.estimate, np.repeat(atom[:, None], split.n1, axis=1), atol=1e-12)


def test_ms_dictionary_deterministic_and_simplex(rng):
    split = small_split(rng, height=5, width=8, overlap=(0, 4))
    a = ms_dictionary_baseline(split, SStepParams(), atom_budget=8, seed=3)
    b = ms_dictionary_baseline(split, SStepParams(), atom_budget=8, seed=3)
    assert np.array_equal(a.estimate, b.estimate) and np.array_equal(a.atoms, b.atoms)
    assert np.max(np.abs(a.codes.sum(axis=0) - 1)) <= 1e-10


def test_ms_dictionary_budget_bounds(rng):
    split = small_split(rng)
    for bad in (0, split.n + 1):
        with pytest.raises(ValueError):
            ms_dictionary_baseline(split, SStepParams(), atom_budget=bad)
