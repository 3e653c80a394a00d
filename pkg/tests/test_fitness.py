import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_mean
from fitpa.errors import ValidationError
from fitpa.fitness import (
    FitnessSequence,
    check_concentration_event,
    chi,
    make_fitness_model,
    sample_fitness_sequence,
)


@pytest.mark.parametrize(
    "kind,x1,params,mu,kappa",
    [
        ("point_mass", 1, {"value": 1.0}, 1.0, 1.0),
        ("uniform_interval", 0, {"lo": 0.5, "hi": 1.5}, 1.0, 1.5),
        ("discrete", 2, {"values": [1, 3], "probs": [0.5, 0.5]}, 2.0, 3.0),
    ],
)
def test_model_moments(kind, x1, params, mu, kappa):
    m = make_fitness_model(kind, x1, **params)
    assert m.mu == pytest.approx(mu) and m.kappa == pytest.approx(kappa)
    assert make_fitness_model(m.to_dict()).to_dict() == m.to_dict()


@pytest.mark.parametrize("mu,expected", [(1, 0.5), (2, 2 / 3), (0.25, 0.2)])
def test_chi(mu, expected):
    assert chi(make_fitness_model("point_mass", 0, value=mu)) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "config,field",
    [
        ({"kind": "nope", "x1": 1}, "kind"),
        ({"kind": "point_mass", "params": {"value": 1}}, "x1"),
        ({"kind": "point_mass", "params": {"value": 1}, "x1": -1}, "x1"),
        ({"kind": "point_mass", "params": {"value": 0}, "x1": 1}, "value"),
        ({"kind": "uniform_interval", "params": {"lo": 2, "hi": 1}, "x1": 1}, "hi"),
        ({"kind": "discrete", "params": {"values": [1, 2], "probs": [0.5, 0.6]}, "x1": 1}, "probs"),
    ],
)
def test_model_errors_name_field(config, field):
    with pytest.raises(ValidationError) as e:
        make_fitness_model(config)
    assert e.value.field == field


def test_point_mass_sequence():
    m = make_fitness_model("point_mass", 0, value=1)
    s = sample_fitness_sequence(m, 4, 0)
    assert s.values.tolist() == [0, 1, 1, 1]
    assert s.prefix_sums.tolist() == [0, 0, 1, 2, 3]  # T[0]=0, T_k = x_1 + ... + x_k
    assert s.is_integer


def test_single_vertex():
    m = make_fitness_model("uniform_interval", 0.3, lo=0.5, hi=1.5)
    assert sample_fitness_sequence(m, 1, 3).values.tolist() == [0.3]


def test_uniform_sample_mean():
    m = make_fitness_model("uniform_interval", 0, lo=0.5, hi=1.5)
    s = sample_fitness_sequence(m, 10_000, 11)
    assert_mean(s.values[1:], 1.0)
    assert np.all((s.values[1:] >= 0.5) & (s.values[1:] <= 1.5))


def test_discrete_frequencies():
    m = make_fitness_model("discrete", 1, values=[1, 3], probs=[0.25, 0.75])
    s = sample_fitness_sequence(m, 100_001, 5)
    assert_mean(s.values[1:] == 3, 0.75)


def test_seed_required():
    m = make_fitness_model("point_mass", 1, value=1)
    with pytest.raises(ValueError):
        sample_fitness_sequence(m, 3, None)


def test_concentration_event():
    m = make_fitness_model("point_mass", 1, value=1)
    s = sample_fitness_sequence(m, 100, 0)
    for alpha in (0.55, 0.7, 0.95):
        assert check_concentration_event(s, alpha, 2)
    bad = FitnessSequence(np.array([1.0] + [3.0] * 99), 1.0)
    assert not check_concentration_event(bad, 0.6, 2)
    # with phi_n = n only the last index is examined
    tail = FitnessSequence(np.array([1.0] * 99 + [50.0]), 1.0)
    assert not check_concentration_event(tail, 0.6, 100)
    head = FitnessSequence(np.array([1.0, 3.0] + [1.0] * 98), 1.0)
    assert check_concentration_event(head, 0.6, 100)


def test_csv_round_trip(tmp_path):
    m = make_fitness_model("uniform_interval", 0.5, lo=0.5, hi=1.5)
    s = sample_fitness_sequence(m, 50, 2)
    text = s.to_csv()
    back = FitnessSequence.from_csv(text, s.mu)
    assert np.array_equal(back.values, s.values) and back.mu == s.mu


@settings(max_examples=50, deadline=None)
@given(
    lo=st.floats(0.05, 5), width=st.floats(0.01, 5), n=st.integers(1, 200), seed=st.integers(0, 2**32)
)
def test_prefix_sums_property(lo, width, n, seed):
    m = make_fitness_model("uniform_interval", 0.0, lo=lo, hi=lo + width)
    s = sample_fitness_sequence(m, n, seed)
    assert s.n == n and s.x[0] == 0
    assert np.allclose(np.diff(s.prefix_sums), s.values)
    assert math.isclose(s.chi, m.mu / (m.mu + 1))
