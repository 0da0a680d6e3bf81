import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svikit.core import (
    INSTANCE,
    ConfigError,
    DomainError,
    Draw,
    InvalidDimensionError,
    InvalidRangeError,
    VIProblem,
    evaluate_map,
    gaussian_vector,
    uniform_vector,
)
from svikit.geometry import Box
from svikit.problems import gen_rate_cournot, gen_watson


def test_gaussian_deterministic():
    d = Draw(123, path=4, iteration=7, half_step=1)
    assert np.array_equal(gaussian_vector(d, 5), gaussian_vector(Draw(123, 4, 7, 1), 5))


def test_gaussian_moments():
    x = gaussian_vector(Draw(9), 100_000)
    assert abs(x.mean()) < 0.02
    assert abs(x.var() - 1) < 0.05


def test_gaussian_zero_dim():
    with pytest.raises(InvalidDimensionError):
        gaussian_vector(Draw(0), 0)


def test_uniform_mean_and_range():
    x = uniform_vector(Draw(3), 100_000)
    assert abs(x.mean() - 0.5) < 0.01
    assert x.min() >= 0 and x.max() < 1


def test_uniform_degenerate_interval():
    x = uniform_vector(Draw(3), 50, 2.0, 2.0 + 1e-12)
    assert np.allclose(x, 2.0)


def test_uniform_bad_range():
    with pytest.raises(InvalidRangeError):
        uniform_vector(Draw(0), 3, 1.0, 1.0)


def test_distinct_paths_distinct_vectors():
    a = uniform_vector(Draw(5, path=0, iteration=3), 8)
    b = uniform_vector(Draw(5, path=1, iteration=3), 8)
    assert not np.array_equal(a, b)


def test_half_steps_independent():
    a = np.array([gaussian_vector(Draw(1, iteration=k, half_step=0), 1)[0] for k in range(1, 5001)])
    b = np.array([gaussian_vector(Draw(1, iteration=k, half_step=1), 1)[0] for k in range(1, 5001)])
    # correlation of independent samples is O(1/sqrt(N))
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(5000)


def test_purpose_separates_streams():
    assert not np.array_equal(gaussian_vector(Draw(1), 4), gaussian_vector(Draw(1, purpose=INSTANCE), 4))


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**32), st.integers(0, 2**32), st.integers(0, 1))
@settings(max_examples=50, deadline=None)
def test_draw_equal_fields_equal_output(seed, path, it, half):
    a = Draw(seed, path, it, half).rng().random(3)
    b = Draw(seed, path, it, half).rng().random(3)
    assert np.array_equal(a, b)


def test_draw_rejects_negative_seed():
    with pytest.raises(InvalidRangeError):
        Draw(-1)


def test_draw_stream_id():
    assert Draw(0, 2, 3, 1).stream_id == (2, 3, 1)


def test_evaluate_rate_cournot_noiseless():
    p = gen_rate_cournot(5).without_noise()
    np.testing.assert_allclose(evaluate_map(p, np.ones(5), Draw(0)), 0.02 * np.ones(5), atol=1e-15)


def test_evaluate_watson_at_zero():
    p = gen_watson(3)
    d = Draw(11, iteration=2)
    rng = d.rng()
    rng.standard_normal((10, 10))
    qw = rng.standard_normal(10)
    np.testing.assert_allclose(evaluate_map(p, np.zeros(10), d), p.params["q"] + 0.025 * qw)


def test_evaluate_shape_check():
    p = VIProblem(Box.uniform(3, 0, 1), lambda x, d: np.zeros(2))
    with pytest.raises(InvalidDimensionError):
        evaluate_map(p, np.zeros(3), Draw(0))


def test_evaluate_nonfinite():
    p = VIProblem(Box.uniform(2, 0, 1), lambda x, d: np.array([np.nan, 0.0]))
    with pytest.raises(DomainError):
        evaluate_map(p, np.zeros(2), Draw(0))


def test_without_noise_needs_mean():
    p = VIProblem(Box.uniform(2, 0, 1), lambda x, d: x)
    with pytest.raises(ConfigError):
        p.without_noise()


def test_noiseless_equals_mean_for_all_draws():
    p = gen_rate_cournot(6)
    q = p.without_noise()
    x = np.linspace(0, 1, 6)
    for k in range(5):
        assert np.array_equal(evaluate_map(q, x, Draw(k, iteration=k)), p.mean_map(x))


def test_mean_of_draws_matches_mean_map():
    p = gen_rate_cournot(5)
    x = np.full(5, 0.3)
    draws = np.array([evaluate_map(p, x, Draw(2, iteration=k)) for k in range(10_000)])
    assert np.all(np.abs(draws.mean(0) - p.mean_map(x)) <= 5 * np.sqrt(p.noise_bound / 10_000))


def test_problem_pickles():
    p = gen_rate_cournot(5)
    q = pickle.loads(pickle.dumps(p))
    x = np.full(5, 0.5)
    assert np.array_equal(q.sample_map(x, Draw(1)), p.sample_map(x, Draw(1)))
