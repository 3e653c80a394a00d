import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gammaln

from conftest import assert_mean, const_seq
from fitpa.analytics import (
    degree_pmf_ancestor,
    degree_pmf_root,
    finite_degree_law,
    finite_degree_tv,
    mori_conditional_mean,
    pmf_table,
    s_deviation_profile,
    s_moment_exact,
    tail_constant_ancestor,
    tail_constant_root,
)
from fitpa.errors import ValidationError
from fitpa.fitness import FitnessSequence, make_fitness_model, sample_fitness_sequence
from fitpa.generators import _profile_distribution, sequential_parents_batch, urn_betas, partial_products

MODELS = [
    make_fitness_model("point_mass", 1.0, value=1.0),
    make_fitness_model("point_mass", 2.0, value=2.5),
    make_fitness_model("uniform_interval", 0.0, lo=0.5, hi=1.5),
    make_fitness_model("discrete", 1.0, values=[0.5, 3.0], probs=[0.3, 0.7]),
]


def test_root_pmf_closed_form(unit_model):
    assert degree_pmf_root(unit_model, 1) == pytest.approx(2 / 3, abs=1e-12)
    assert degree_pmf_root(unit_model, 2) == pytest.approx(1 / 6, abs=1e-12)
    assert degree_pmf_root(unit_model, 3) == pytest.approx(1 / 15, abs=1e-12)
    ks = np.arange(1, 50)
    assert np.allclose(degree_pmf_root(unit_model, ks), 4 / (ks * (ks + 1) * (ks + 2)), rtol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3, 7, 20])
def test_root_pmf_geometric_mixture(unit_model, k):
    # independent route: P(Geo(sqrt U) = k) integrated over U
    val, _ = integrate.quad(lambda u: math.sqrt(u) * (1 - math.sqrt(u)) ** (k - 1), 0, 1, epsabs=1e-14)
    assert degree_pmf_root(unit_model, k) == pytest.approx(val, rel=1e-9)


def test_root_pmf_normalisation_and_tail(unit_model):
    ks = np.arange(1, 10**6 + 1)
    assert degree_pmf_root(unit_model, ks).sum() == pytest.approx(1, abs=1e-6)
    k = 10**4
    assert degree_pmf_root(unit_model, k) * k**3 == pytest.approx(tail_constant_root(unit_model), rel=0.02)
    assert tail_constant_root(unit_model) == pytest.approx(4)


def test_ancestor_pmf(unit_model):
    assert degree_pmf_ancestor(unit_model, 2) == pytest.approx(1 / 6, abs=1e-12)
    assert degree_pmf_ancestor(unit_model, 3) == pytest.approx(2 / 15, abs=1e-12)
    K = 10**7
    ks = np.arange(2, K + 1)
    total = degree_pmf_ancestor(unit_model, ks).sum() + tail_constant_ancestor(unit_model) / K
    assert total == pytest.approx(1, abs=1e-5)
    k = 10**4
    assert degree_pmf_ancestor(unit_model, k) * k**2 == pytest.approx(4, rel=0.02)
    assert tail_constant_ancestor(unit_model) == pytest.approx(4)
    with pytest.raises(ValidationError):
        degree_pmf_ancestor(unit_model, 1)


def test_tail_constants():
    m = make_fitness_model("point_mass", 1.0, value=2.0)
    assert tail_constant_root(m) == pytest.approx(72)
    for m in MODELS:
        assert tail_constant_root(m) > 0 and tail_constant_ancestor(m) > 0


@pytest.mark.parametrize("model", MODELS)
def test_pmfs_sum_to_one(model):
    for kind in ("root", "ancestor"):
        t = pmf_table(model, 20_000, kind)
        assert t.values.sum() + t.tail_estimate() == pytest.approx(1, abs=2e-4)
        assert np.all(t.values > 0)
    assert pmf_table(model, 5).to_csv().startswith("# kind=root")


def test_uniform_fitness_pmf_by_direct_integration():
    m = MODELS[2]
    mu = m.mu

    def f(x, k):
        return (mu + 1) * math.exp(gammaln(x + k - 1) + gammaln(x + mu + 1) - gammaln(x) - gammaln(x + mu + k + 1))

    for k in (1, 4, 30):
        val, _ = integrate.quad(lambda x: f(x, k), 0.5, 1.5, epsabs=1e-14)
        assert degree_pmf_root(m, k) == pytest.approx(val, rel=1e-10)


# ------------------------------------------------------------ moments


def test_s_moment_trivial_cases():
    seq = const_seq(10)
    for p in (1, 2, 3):
        assert s_moment_exact(seq, 10, p) == 1.0
    assert s_moment_exact(const_seq(2), 1, 1) == pytest.approx(2 / 3, abs=1e-12)
    with pytest.raises(ValidationError):
        s_moment_exact(seq, 0, 1)


def test_s_moment_monte_carlo():
    seq = const_seq(50)
    rng = np.random.default_rng(3)
    vals = np.concatenate([partial_products(urn_betas(seq, rng, size=100_000))[:, 10] ** 2 for _ in range(10)])
    assert_mean(vals, s_moment_exact(seq, 10, 2))


def test_mori_trivial_cases():
    seq = const_seq(5)
    assert mori_conditional_mean(seq, 2, 4, 4, 3) == 3 + 1
    assert mori_conditional_mean(const_seq(3), 1, 2, 3, 1) == pytest.approx(8 / 3, abs=1e-12)
    with pytest.raises(ValidationError):
        mori_conditional_mean(seq, 3, 2, 4, 0)


def test_mori_simulation():
    n, k, l, m = 20, 2, 6, 20
    seq = FitnessSequence(np.array([1.0, 0.7, 1.3, 0.9, 1.1] * 4), 1.0)
    par = sequential_parents_batch(seq, 10**6, 4)
    w_l = (par[:, 2 : l + 1] == k).sum(axis=1)
    w_m = (par[:, 2 : m + 1] == k).sum(axis=1)
    for w in range(0, 4):
        sel = w_l == w
        assert sel.sum() > 1000
        assert_mean(w_m[sel] + seq.x[k], mori_conditional_mean(seq, k, l, m, w))


def test_s_deviation_profile():
    seq = const_seq(200)
    prof = s_deviation_profile(seq, 50, 1)
    assert prof.per_k_dev[-1] == 0 and np.all(prof.per_k_dev >= 0)
    assert prof.max_abs_dev >= 0 and prof.k_min == math.ceil(200**0.5)
    small = s_deviation_profile(const_seq(10), 200, 2).max_abs_dev
    big = s_deviation_profile(const_seq(10**4), 200, 2).max_abs_dev
    assert big < small


# ------------------------------------------------------------ exact finite-n degree law


@pytest.mark.parametrize("value,x1", [(1.0, 1.0), (1.0, 0.0), (2.5, 0.4), (0.5, -0.5)])
def test_finite_degree_law_matches_enumeration(value, x1):
    n = 9
    seq = FitnessSequence(np.array([x1] + [value] * (n - 1)), value)
    exact = np.zeros(n + 2)
    for prof, p in _profile_distribution(seq, n).items():
        for v, w in enumerate(prof, start=1):
            exact[w + (v >= 2)] += p / n
    got = finite_degree_law(value, x1, n, k_cap=n + 1)
    assert got == pytest.approx(exact, abs=1e-12)


def test_finite_degree_tv_decreases(unit_model):
    tvs = [finite_degree_tv(1.0, 1.0, n, unit_model) for n in (10, 100, 1000)]
    assert tvs[0] > tvs[1] > tvs[2] > 0
    assert finite_degree_law(1.0, 1.0, 500).sum() == pytest.approx(1, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 60), p=st.integers(1, 3), seed=st.integers(0, 2**32), lo=st.floats(0.2, 2.0))
def test_moment_bounds_property(n, p, seed, lo):
    seq = sample_fitness_sequence(make_fitness_model("uniform_interval", 0.5, lo=lo, hi=lo + 1), n, seed)
    vals = [s_moment_exact(seq, k, p) for k in range(1, n + 1)]
    assert all(0 < v <= 1 for v in vals)
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
