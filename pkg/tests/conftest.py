import math
import sys

import numpy as np
import pytest

from fitpa.fitness import FitnessSequence, make_fitness_model


def assert_freq(count, total, p, z=4.0):
    """Binomial frequency ``count/total`` within ``z`` standard errors of ``p``."""
    se = math.sqrt(max(p * (1 - p), 1e-300) / total)
    assert abs(count / total - p) <= z * se + 1e-12, (count / total, p, se)


def assert_mean(samples, target, z=4.0):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(samples.mean() - target) <= z * se + 1e-12, (samples.mean(), target, se)


def const_seq(n, value=1.0, x1=1.0):
    return FitnessSequence(np.array([x1] + [value] * (n - 1)), value)


@pytest.fixture
def unit_model():
    return make_fitness_model("point_mass", 1.0, value=1.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.LINES):
        terminalreporter.write_line(line)
