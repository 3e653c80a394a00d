import math

import numpy as np
import pytest
from scipy import stats as sps

from conftest import assert_freq, assert_mean
from fitpa.errors import ValidationError
from fitpa.exploration import TYPE_L, TYPE_R
from fitpa.fitness import make_fitness_model, sample_fitness_sequence
from fitpa.pointtree import (
    age_label,
    sample_ancestor_degree_vector,
    sample_ancestor_degree_vectors,
    sample_intermediate_point_tree,
    sample_pi_polya_point_tree,
    sample_root_degree_limit,
    sample_root_degree_limits,
)
from fitpa.stats import EmpiricalDistribution, tv_distance


def p_root(k):
    return 4 / (k * (k + 1) * (k + 2))


def test_radius_zero_root_age(unit_model):
    rng = np.random.default_rng(0)
    ages = []
    for _ in range(5000):
        nb = sample_pi_polya_point_tree(unit_model, 0, seed=rng)
        assert list(nb.nodes) == [(0,)]
        ages.append(nb.nodes[(0,)].age)
    # a_0 = U^chi, chi = 1/2
    assert sps.kstest(np.array(ages) ** 2, "uniform").pvalue > 1e-3


def test_root_tau_mean_and_poisson_dispersion(unit_model):
    rng = np.random.default_rng(1)
    tau, mean = [], []
    for _ in range(100_000):
        rec = sample_pi_polya_point_tree(unit_model, 1, seed=rng).nodes[(0,)]
        tau.append(rec.child_count_R)
        mean.append(rec.gamma * (rec.age ** (-1 / unit_model.mu) - 1))
    tau, mean = np.array(tau, float), np.array(mean)
    assert_mean(tau, 1.0)
    # given (Z_0, a_0) the count is Poisson: E[tau - m] = 0 and E[(tau - m)^2 - m] = 0
    assert_mean(tau - mean, 0.0)
    assert_mean((tau - mean) ** 2 - mean, 0.0)


def test_point_tree_structure():
    m = make_fitness_model("uniform_interval", 1.0, lo=0.5, hi=1.5)
    rng = np.random.default_rng(2)
    for _ in range(300):
        nb = sample_pi_polya_point_tree(m, 3, seed=rng)
        kids = nb.children()
        for lab, rec in nb.nodes.items():
            depth = len(lab) - 1
            if depth == 3:
                assert rec.child_count_R is None
                continue
            ch = kids[lab]
            n_l = sum(nb.nodes[c].vertex_type == TYPE_L for c in ch)
            assert n_l == (0 if rec.vertex_type == TYPE_R else 1)
            assert len(ch) - n_l == rec.child_count_R
            for c in ch:
                child = nb.nodes[c]
                if child.vertex_type == TYPE_L:
                    assert child.age < rec.age and c[-1] == 1
                else:
                    assert rec.age < child.age <= 1


def test_node_cap_truncates(unit_model):
    nb = sample_pi_polya_point_tree(unit_model, 6, node_cap=5, seed=3)
    assert nb.truncated and len(nb.nodes) <= 6 + 5
    with pytest.raises(ValidationError):
        sample_pi_polya_point_tree(unit_model, -1, seed=0)


def test_age_label_bins():
    n, chi = 1000, 0.5
    rng = np.random.default_rng(4)
    for a in rng.random(2000):
        k = age_label(a, n, chi)
        assert ((k - 1) / n) ** chi < a <= (k / n) ** chi
    assert age_label(1.0, n, chi) == n


def test_intermediate_root_label_uniform(unit_model):
    n = 7
    seq = sample_fitness_sequence(unit_model, n, 0)
    rng = np.random.default_rng(5)
    labels = np.array([sample_intermediate_point_tree(seq, 0, seed=rng).nodes[(0,)].pa_label for _ in range(70_000)])
    counts = np.bincount(labels, minlength=n + 1)[1:]
    assert sps.chisquare(counts).pvalue > 1e-3


def test_intermediate_labels_consistent_with_ages():
    m = make_fitness_model("uniform_interval", 1.0, lo=0.5, hi=1.5)
    n = 5000
    seq = sample_fitness_sequence(m, n, 1)
    rng = np.random.default_rng(6)
    seen_r = 0
    for _ in range(300):
        nb = sample_intermediate_point_tree(seq, 2, seed=rng)
        for lab, rec in nb.nodes.items():
            if rec.vertex_type == TYPE_R:
                k = rec.pa_label
                assert ((k - 1) / n) ** seq.chi < rec.age <= (k / n) ** seq.chi
                seen_r += 1
            if rec.vertex_type == TYPE_L and rec.pa_label is not None:
                parent = nb.nodes[lab[:-1]]
                assert rec.pa_label < parent.pa_label
        if nb.contains_vertex_one:
            assert any(r.pa_label == 1 for r in nb.nodes.values())
    assert seen_r > 100


@pytest.mark.slow
def test_intermediate_root_degree_matches_limit(unit_model):
    n, reps = 10**5, 10**5
    seq = sample_fitness_sequence(unit_model, n, 2)
    rng = np.random.default_rng(7)
    inter = EmpiricalDistribution()
    for _ in range(reps):
        nb = sample_intermediate_point_tree(seq, 1, seed=rng, label_frontier=False)
        root = nb.nodes[(0,)]
        inter.add(root.child_count_R + (0 if root.pa_label == 1 else 1))
    lim = EmpiricalDistribution.from_samples(sample_root_degree_limits(unit_model, reps, 8))
    assert tv_distance(inter, lim) < 0.02


def test_root_degree_limit_law(unit_model):
    N = 10**6
    xi = sample_root_degree_limits(unit_model, N, 9)
    assert xi.min() >= 1
    assert_mean(xi, 2.0)
    for k in range(1, 6):
        assert_freq(int(np.sum(xi == k)), N, p_root(k))
    assert sample_root_degree_limit(unit_model, 3) >= 1


def test_ancestor_degree_vector_law(unit_model):
    N = 10**6
    v = sample_ancestor_degree_vectors(unit_model, 2, N, 10)
    assert v.shape == (N, 3) and v[:, 1:].min() >= 2
    for k in range(2, 7):
        assert_freq(int(np.sum(v[:, 1] == k)), N, 4 * (k - 1) / (k * (k + 1) * (k + 2)))
    assert sample_ancestor_degree_vector(unit_model, 0, 5).tolist() == [sample_root_degree_limit(unit_model, 5)]
    assert np.array_equal(sample_ancestor_degree_vectors(unit_model, 0, 100, 6)[:, 0], sample_root_degree_limits(unit_model, 100, 6))
