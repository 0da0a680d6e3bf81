import math
import pickle

import numpy as np
import pytest

from svikit.core import DataError, Draw, GenerationError, ParameterError
from svikit.diagnostics import natural_residual, pseudomonotonicity_sampler, sample_feasible
from svikit.problems import (
    CournotMap,
    gen_cournot,
    gen_frac_nonlin,
    gen_frac_quad,
    gen_rate_cournot,
    gen_watson,
    load_watson_matrix,
)
import svikit.problems as problems_mod


def fd_grad(f, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def feasible_points(problem, count, seed):
    return sample_feasible(problem.set, count, np.random.default_rng(seed))


@pytest.mark.parametrize("gen", [gen_frac_quad, gen_frac_nonlin], ids=["quad", "nonlin"])
def test_frac_gradient_fd(gen):
    p = gen(10, 3)
    fmap = p.sample_map
    for j, x in enumerate(feasible_points(p, 10, 1)):
        d = Draw(7, iteration=j)
        h = 1e-6 * (1 + np.linalg.norm(x))
        fd = fd_grad(lambda z: fmap.objective(z, d), x, h)
        an = fmap(x, d)
        assert np.linalg.norm(an - fd) <= 1e-5 * np.linalg.norm(an)


def test_frac_quad_positive_at_origin():
    p = gen_frac_quad(12, 1)
    g, _ = p.sample_map.denominator(np.zeros(12))
    assert g == pytest.approx(p.params["t"] + 48)


def test_frac_nonlin_lambda():
    p = gen_frac_nonlin(10)
    assert p.sample_map.lam_g == pytest.approx(1.0418521055454795, rel=1e-14)
    g, _ = p.sample_map.denominator(np.zeros(10))
    assert g > 0


@pytest.mark.parametrize("gen", [gen_frac_quad, gen_frac_nonlin], ids=["quad", "nonlin"])
def test_frac_mean_map_matches_draw_average(gen):
    p = gen(10, 2)
    for x in feasible_points(p, 3, 4):
        vals = np.array([p.sample_map(x, Draw(1, iteration=k)) for k in range(10_000)])
        se = vals.std(0) / math.sqrt(len(vals))
        assert np.all(np.abs(vals.mean(0) - p.mean_map(x)) <= 5 * se + 1e-12)


def test_frac_quad_pseudomonotone_samples():
    p = gen_frac_quad(10, 0)
    rep = pseudomonotonicity_sampler(p.mean_map, p.set, 10_000, draw=Draw(3))
    assert rep.violations == []


def test_frac_generation_limit(monkeypatch):
    monkeypatch.setattr(problems_mod, "MAX_RESAMPLES", 0)
    with pytest.raises(GenerationError):
        gen_frac_quad(10)


def test_cournot_at_zero():
    p = gen_cournot(10)
    d = Draw(2)
    np.testing.assert_allclose(p.sample_map(np.zeros(10), d), -p.params["a"] ** 0.5 * np.ones(10), rtol=1e-14)


def test_cournot_gradient_fd():
    p = gen_cournot(10, 0.5, 1)
    fmap = p.sample_map
    for j, x in enumerate(feasible_points(p, 10, 2)):
        d = Draw(5, iteration=j)
        h = 1e-6 * (1 + np.linalg.norm(x))
        an = fmap(x, d)
        fd = np.empty(10)
        for i in range(10):
            e = np.zeros(10)
            e[i] = h
            fd[i] = -(fmap.payoffs(x + e, d)[i] - fmap.payoffs(x - e, d)[i]) / (2 * h)
        assert np.linalg.norm(an - fd) <= 1e-5 * np.linalg.norm(an)


def test_cournot_affine_limit():
    m = CournotMap(50.0, 1.0 - 1e-9, eps=0.0)
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(-m._at(x, 1.0), 50 - 6 - x, rtol=1e-7)


def test_cournot_price_base_certified():
    for n in (10, 15, 19):
        p = gen_cournot(n)
        assert p.params["a"] - 1.15 * p.params["xbar_max"] > 0


def test_cournot_mean_quadrature():
    p = gen_cournot(10)
    x = feasible_points(p, 1, 9)[0]
    vals = np.array([p.sample_map(x, Draw(3, iteration=k)) for k in range(10_000)])
    se = vals.std(0) / 100
    assert np.all(np.abs(vals.mean(0) - p.mean_map(x)) <= 5 * se + 1e-12)


def test_cournot_parameter_checks():
    with pytest.raises(ParameterError):
        gen_cournot(10, kappa=1.0)
    with pytest.raises(ParameterError):
        gen_cournot(1)


def test_watson_structure():
    M = load_watson_matrix()
    assert M.shape == (10, 10)
    assert np.linalg.eigvalsh((M + M.T) / 2).min() < 0
    for i in range(1, 11):
        p = gen_watson(i)
        np.testing.assert_array_equal(p.mean_map(np.zeros(10)), np.eye(10)[i - 1])


def test_watson_residual_is_min_form():
    p = gen_watson(4)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(0, 2, 10)
        F = p.mean_map(x)
        assert natural_residual(p, x) == pytest.approx(np.linalg.norm(np.minimum(x, F)), abs=1e-12)
    assert natural_residual(p, np.zeros(10)) == 0.0


def test_watson_checksum(tmp_path, monkeypatch):
    import shutil
    from importlib import resources

    src = resources.files("svikit") / "data"
    fake = tmp_path / "svikit" / "data"
    fake.mkdir(parents=True)
    shutil.copy(src / "MANIFEST.json", fake / "MANIFEST.json")
    (fake / "watson_M.txt").write_text("1 2 3\n")
    monkeypatch.setattr(problems_mod.resources, "files", lambda pkg: tmp_path / "svikit")
    with pytest.raises(DataError, match="checksum"):
        load_watson_matrix()


def test_watson_index_range():
    with pytest.raises(ParameterError):
        gen_watson(0)


def test_rate_instance_constants():
    p = gen_rate_cournot(5)
    a, b = p.params["a"], p.params["b"]
    assert (a, b) == pytest.approx((0.1, 0.02))
    c = p.constants
    assert c.sigma == pytest.approx(0.02) and c.B == pytest.approx(0.2 * math.sqrt(5))
    assert p.noise_bound == pytest.approx(4.5e-5)
    assert c.L == pytest.approx(0.12)


def test_rate_solution():
    for n in (5, 10, 19):
        p = gen_rate_cournot(n)
        np.testing.assert_allclose(p.solution, n / (n + 1) * np.ones(n))
        assert np.max(np.abs(p.mean_map(p.solution))) <= 1e-15
        assert np.all((p.solution > 0) & (p.solution < 1))


def test_rate_solution_extragradient_oracle():
    # deterministic extragradient with a fixed safe step
    p = gen_rate_cournot(7)
    x = np.zeros(7)
    g = 0.5 / p.constants.L
    for _ in range(20_000):
        xh = p.set.project(x - g * p.mean_map(x))
        x = p.set.project(x - g * p.mean_map(xh))
    np.testing.assert_allclose(x, p.solution, atol=1e-8)


def test_rate_noise_identity():
    p = gen_rate_cournot(5)
    rng = np.random.default_rng(1)
    n = 5
    for k in range(50):
        x = rng.uniform(0, 1, n)
        d = Draw(4, iteration=k)
        w = p.sample_map(x, d) - p.mean_map(x)
        bw = p.sample_map.slope(d)
        np.testing.assert_allclose(w, (bw - p.params["b"]) * (x + x.sum()), atol=1e-15)
        assert w @ w <= (bw - p.params["b"]) ** 2 * (n + 1) ** 2 * n + 1e-18


def test_rate_strong_monotonicity():
    p = gen_rate_cournot(8)
    rng = np.random.default_rng(2)
    b = p.params["b"]
    for _ in range(1000):
        x, y = rng.uniform(0, 1, (2, 8))
        assert (p.mean_map(x) - p.mean_map(y)) @ (x - y) >= b * (x - y) @ (x - y) - 1e-15


@pytest.mark.parametrize("family", ["frac-quad", "frac-nonlin", "cournot"])
def test_instance_determinism(family):
    from svikit.problems import generate

    a, b = generate(family, 11, 5), generate(family, 11, 5)
    for key in a.params:
        assert np.array_equal(np.asarray(a.params[key]), np.asarray(b.params[key]))
    c = generate(family, 11, 6)
    assert not np.array_equal(a.params["A"], c.params["A"])


def test_problems_pickle():
    for p in (gen_frac_quad(10), gen_cournot(10), gen_watson(2)):
        q = pickle.loads(pickle.dumps(p))
        x = feasible_points(p, 1, 0)[0]
        np.testing.assert_array_equal(q.sample_map(x, Draw(1)), p.sample_map(x, Draw(1)))
