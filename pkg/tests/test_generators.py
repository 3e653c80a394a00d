import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_freq, assert_mean, const_seq
from fitpa.errors import ValidationError
from fitpa.fitness import FitnessSequence, make_fitness_model, sample_fitness_sequence
from fitpa.generators import (
    EXACT_ORACLE_MAX_N,
    Embellishment,
    PATree,
    _sequential_ball_list,
    _sequential_fenwick,
    classical_polya_urn,
    embellished_parents_batch,
    generate_embellished_urn_tree,
    generate_sequential,
    generate_urn_tree,
    partial_products,
    sequential_edge_probability_exact,
    sequential_parents_batch,
    sequential_tree_probability,
    urn_parents_batch,
)

N = 10**6


def all_parent_arrays(n):
    for choice in itertools.product(*[range(1, k) for k in range(2, n + 1)]):
        yield [0, 0, *choice]


# ------------------------------------------------------------ small cases


@pytest.mark.parametrize("gen", [generate_sequential, lambda s, r: generate_urn_tree(s, r)[0]])
def test_n2_single_edge(gen):
    t = gen(const_seq(2), 1)
    assert t.parent[2] == 1 and t.to_edge_list() == "2 1\n"


def test_n1_tree():
    t = generate_sequential(const_seq(1), 0)
    assert t.n == 1 and t.to_edge_list() == ""


@pytest.mark.parametrize("batch", [sequential_parents_batch, lambda s, r, seed: urn_parents_batch(s, r, seed)[0]])
def test_n3_attachment_frequency(batch):
    p = batch(const_seq(3), N, 4)
    assert_freq(int(np.sum(p[:, 3] == 1)), N, 2 / 3)


def test_urn_partial_products_endpoints():
    seq = sample_fitness_sequence(make_fitness_model("uniform_interval", 0.2, lo=0.5, hi=1.5), 30, 1)
    _, S = urn_parents_batch(seq, 1000, 2)
    assert np.all(S[:, 0] == 0) and np.all(S[:, -1] == 1)
    assert np.all(np.diff(S, axis=1) >= 0)
    _, urn = generate_urn_tree(seq, 5)
    assert urn.S[0] == 0 and urn.S[-1] == 1
    assert urn.interval_lengths[1:].sum() == pytest.approx(1.0)


def test_partial_products_definition():
    beta = np.array([0.0, 1.0, 0.5, 0.25, 0.1])
    S = partial_products(beta)
    assert S.tolist() == pytest.approx([0, 0.5 * 0.75 * 0.9, 0.75 * 0.9, 0.9, 1.0])


# ------------------------------------------------------------ exact oracle


def test_edge_probability_exact_values():
    assert sequential_edge_probability_exact(const_seq(2), 1, 2) == 1.0
    assert sequential_edge_probability_exact(const_seq(3), 1, 3) == pytest.approx(2 / 3, abs=1e-15)
    seq = FitnessSequence(np.array([0.3, 1.7, 0.4, 2.2, 0.9, 1.1]), 1.0)
    for k in range(2, 7):
        assert sum(sequential_edge_probability_exact(seq, j, k) for j in range(1, k)) == pytest.approx(1, abs=1e-12)


def test_exact_oracle_agrees_with_full_enumeration():
    seq = FitnessSequence(np.array([0.5, 1.2, 0.7, 2.0, 1.0]), 1.0)
    marg = np.zeros((6, 6))
    total = 0.0
    for par in all_parent_arrays(5):
        p = sequential_tree_probability(seq, par)
        total += p
        for k in range(2, 6):
            marg[par[k], k] += p
    assert total == pytest.approx(1, abs=1e-12)
    for k in range(2, 6):
        for j in range(1, k):
            assert marg[j, k] == pytest.approx(sequential_edge_probability_exact(seq, j, k), abs=1e-12)


def test_exact_oracle_cap():
    with pytest.raises(ValidationError):
        sequential_edge_probability_exact(const_seq(EXACT_ORACLE_MAX_N + 1), 1, 3)
    assert 0 < sequential_edge_probability_exact(const_seq(EXACT_ORACLE_MAX_N), 1, EXACT_ORACLE_MAX_N) < 1


# ------------------------------------------------------------ law of the generators


def test_sequential_and_urn_full_tree_law():
    """Every parent array at n=5 with non-constant real fitness."""
    seq = FitnessSequence(np.array([0.4, 1.5, 0.6, 2.5, 0.8]), 1.2)
    reps = 400_000
    ps = sequential_parents_batch(seq, reps, 1)
    pu, _ = urn_parents_batch(seq, reps, 2)
    for par in all_parent_arrays(5):
        p = sequential_tree_probability(seq, par)
        for sample in (ps, pu):
            hit = np.all(sample[:, 2:] == np.array(par[2:]), axis=1).sum()
            assert_freq(int(hit), reps, p, z=5)


@pytest.mark.parametrize("impl", [_sequential_ball_list, _sequential_fenwick])
def test_single_tree_samplers_match_oracle(impl):
    seq = const_seq(5, 1.0, 2.0)
    reps = 40_000
    rng = np.random.default_rng(9)
    counts = np.zeros((6, 6))
    for _ in range(reps):
        par = impl(seq, rng)
        counts[par[2:], np.arange(2, 6)] += 1
    for k in range(3, 6):
        for j in range(1, k):
            assert_freq(int(counts[j, k]), reps, sequential_edge_probability_exact(seq, j, k), z=5)


def test_fenwick_used_for_real_fitness():
    seq = FitnessSequence(np.array([0.5, 1.5, 0.5, 1.5]), 1.0)
    assert not seq.is_integer
    t = generate_sequential(seq, 3)
    assert t.n == 4 and t.in_degree.sum() == 3


def test_root_attractiveness_at_most_zero():
    # x1 <= 0: the second vertex attaches to 1 deterministically and vertex 1 then keeps weight W_1 + x_1
    seq = FitnessSequence(np.array([-0.5, 1.0, 1.0, 1.0]), 1.0)
    reps = 200_000
    for sample in (sequential_parents_batch(seq, reps, 3), urn_parents_batch(seq, reps, 4)[0]):
        assert np.all(sample[:, 2] == 1)
        assert_freq(int(np.sum(sample[:, 3] == 1)), reps, sequential_edge_probability_exact(seq, 1, 3))
        assert_freq(int(np.sum(sample[:, 4] == 2)), reps, sequential_edge_probability_exact(seq, 2, 4))


# ------------------------------------------------------------ embellished


def test_embellished_n3_forced():
    emb = Embellishment.build([2], [[2, 1]])
    p = embellished_parents_batch(const_seq(3), emb, 10_000, 0)
    assert np.all(p[:, 3] == 1) and np.all(p[:, 2] == 1)


def test_embellished_n4_conditional():
    emb = Embellishment.build([2], [[2, 1]])
    reps = N
    p = embellished_parents_batch(const_seq(4), emb, reps, 1)
    assert np.all(p[:, 3] == 1)
    assert_freq(int(np.sum(p[:, 4] == 1)), reps, 3 / 4)
    # rejection sampling from the unconditioned sequential model
    raw = sequential_parents_batch(const_seq(4), reps, 2)
    ok = emb.event_holds(raw)
    acc = raw[ok]
    assert_freq(int(np.sum(acc[:, 4] == 1)), len(acc), 3 / 4)


def exact_conditional_marginals(seq, emb):
    n = seq.n
    marg = np.zeros((n + 1, n + 1))
    total = 0.0
    for par in all_parent_arrays(n):
        if emb.event_holds(np.array(par))[0]:
            p = sequential_tree_probability(seq, par)
            total += p
            marg[par[2:], np.arange(2, n + 1)] += p
    return marg / total


@pytest.mark.parametrize(
    "probed,edges",
    [([5], [[5, 2]]), ([2], [[2, 1]]), ([3], [[3, 1]]), ([3, 4], [[3, 2], [4, 3]]), ([3, 4], [[3, 2], [4, 3], [3, 5]])],
)
def test_embellished_matches_exact_conditioning(probed, edges):
    seq = FitnessSequence(np.array([1.0, 0.5, 2.0, 1.5, 1.0]), 1.0)
    emb = Embellishment.build(probed, edges)
    reps = 200_000
    p = embellished_parents_batch(seq, emb, reps, 5)
    assert emb.event_holds(p).all()
    marg = exact_conditional_marginals(seq, emb)
    for k in range(2, 6):
        for j in range(1, k):
            assert_freq(int(np.sum(p[:, k] == j)), reps, marg[j, k], z=5)


def test_embellished_last_vertex_size_biases_history():
    # conditioning on the last edge is not neutral for the earlier vertices
    seq = FitnessSequence(np.array([1.0, 0.5, 2.0, 1.5, 1.0]), 1.0)
    marg = exact_conditional_marginals(seq, Embellishment.build([5], [[5, 2]]))
    assert marg[1, 3] < sequential_edge_probability_exact(seq, 1, 3) - 0.1


def test_embellishment_validation():
    with pytest.raises(ValidationError):
        Embellishment.build([], [])
    with pytest.raises(ValidationError):
        Embellishment.build([2], [[2, 2]])
    with pytest.raises(ValidationError):
        Embellishment.build([2], [[2, 1]]).validate(2)  # probed set plus boundary covers every vertex
    with pytest.raises(ValidationError):
        Embellishment.build([2], [[2, 1]]).validate(1)
    with pytest.raises(ValidationError):
        # smallest boundary vertex 3 does not precede smallest probed vertex 1
        Embellishment.build([1], [[1, 3]]).validate(6)
    e = Embellishment.from_dict(Embellishment.build([2], [[1, 2]]).to_dict())
    assert e.edges == frozenset({(1, 2)}) and e.v_s == 2 and e.v_star == 1
    t = generate_embellished_urn_tree(const_seq(6), e, 3)
    assert e.event_holds(t.parent).all()


# ------------------------------------------------------------ PATree and urn helpers


def test_patree_validation_and_views():
    seq = const_seq(4)
    with pytest.raises(ValidationError):
        PATree.from_parents([0, 0, 1, 3, 1], seq)
    t = PATree.from_parents([0, 0, 1, 1, 2], seq)
    assert t.degree.tolist() == [0, 2, 2, 1, 1]
    assert t.children(1).tolist() == [2, 3] and t.children(3).tolist() == []
    assert t.to_dict() == {"n": 4, "parents": [1, 1, 2], "fitness": [1.0] * 4}


def test_classical_polya_urn():
    assert classical_polya_urn(2, 1, 0, 0) == 1
    w = classical_polya_urn(2, 1, 1, 3, size=N)
    assert_freq(int(np.sum(w == 2)), N, 1 / 3)
    frac = classical_polya_urn(2.0, 3.0, 200, 4, size=100_000) / 205.0
    assert_mean(frac, 3 / 5 * (1 - 0) + 0, z=4)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**32), lo=st.floats(0.1, 3), w=st.floats(0.1, 3), x1=st.floats(-0.9, 3))
def test_tree_invariants_property(n, seed, lo, w, x1):
    seq = sample_fitness_sequence(make_fitness_model("uniform_interval", x1, lo=lo, hi=lo + w), n, seed)
    for t in (generate_sequential(seq, seed), generate_urn_tree(seq, seed)[0]):
        k = np.arange(2, n + 1)
        assert np.all((t.parent[2:] >= 1) & (t.parent[2:] < k))
        assert t.in_degree.sum() == n - 1 and t.degree[1:].sum() == 2 * (n - 1)
    assert generate_urn_tree(seq, seed)[0].parent.tolist() == generate_urn_tree(seq, seed)[0].parent.tolist()
