import numpy as np
import pytest
from hypothesis import given, strategies as st

from imresample.core import (ConstantPolicy, GvfSpec, RegionPolicy, TabularPolicy, Transition, is_ratio,
                             max_ratio, ratio_table, td_delta)
from imresample.exceptions import CoverageViolation


def test_constant_policy_rejects_bad_distributions():
    with pytest.raises(ValueError):
        ConstantPolicy([0.5, 0.6])
    with pytest.raises(ValueError):
        ConstantPolicy([1.2, -0.2])


def test_constant_policy_sampling_frequencies(rng):
    pi = ConstantPolicy([0.1, 0.9])
    draws = np.array([pi.sample(None, rng) for _ in range(20000)])
    assert abs(draws.mean() - 0.9) < 0.01
    batch = pi.sample_batch(np.zeros(20000), rng)
    assert abs(batch.mean() - 0.9) < 0.01


def test_tabular_policy_rows_and_table():
    pi = TabularPolicy([[1.0, 0.0], [0.25, 0.75]])
    assert pi.prob(1, 1) == 0.75
    np.testing.assert_array_equal(pi.table([1, 0]), [[0.25, 0.75], [1.0, 0.0]])
    with pytest.raises(ValueError):
        TabularPolicy([[0.5, 0.4]])


def test_region_policy_first_box_wins_and_batch_matches():
    pol = RegionPolicy([0.25] * 4, [((0, 0, 1, 1), [1, 0, 0, 0]), ((0, 0, 2, 2), [0, 1, 0, 0])])
    assert pol.probs([0.5, 0.5])[0] == 1.0
    assert pol.probs([1.5, 0.5])[1] == 1.0
    assert pol.probs([3.0, 3.0])[2] == 0.25
    pts = np.array([[0.5, 0.5], [1.5, 0.5], [3.0, 3.0]])
    np.testing.assert_array_equal(pol.probs_batch(pts), np.stack([pol.probs(p) for p in pts]))


def test_is_ratio_zero_target_and_coverage():
    pi = ConstantPolicy([0.0, 1.0])
    mu = ConstantPolicy([0.5, 0.5])
    assert is_ratio(pi, mu, None, 0) == 0.0
    assert is_ratio(pi, mu, None, 1) == 2.0
    with pytest.raises(CoverageViolation):
        is_ratio(mu, pi, None, 0)


def test_ratio_table_and_max_ratio():
    pi = np.array([[0.1, 0.9]])
    mu = np.array([[0.9, 0.1]])
    np.testing.assert_allclose(ratio_table(pi, mu), [[1 / 9, 9]])
    assert max_ratio(ConstantPolicy([0.1, 0.9]), ConstantPolicy([0.9, 0.1]), [0]) == pytest.approx(9.0)
    with pytest.raises(CoverageViolation):
        ratio_table(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]]))


def test_transition_validation():
    with pytest.raises(ValueError):
        Transition(0, 0, 1, 0.0, 1.5)
    with pytest.raises(ValueError):
        Transition(0, 0, 1, 0.0, 0.5, rho=-1.0)
    assert Transition(0, 0, 1, 0.0, 0.0).terminal


def test_td_delta_does_not_bootstrap_at_termination():
    def value(s):
        if s == "end":
            raise AssertionError("terminal state value must not be read")
        return 2.0

    assert td_delta(value, Transition("a", 0, "end", 1.0, 0.0)) == -1.0
    assert td_delta(lambda s: 2.0, Transition("a", 0, "b", 1.0, 0.5)) == 0.0


def test_gvf_spec_checks_continuation_range():
    spec = GvfSpec(ConstantPolicy([1.0]), lambda s, a, s2: 1.0, lambda s, a, s2: 1.5)
    with pytest.raises(ValueError):
        spec.gamma(0, 0, 1)


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.lists(st.floats(0.01, 1.0), min_size=2,
                                                                          max_size=6))
def test_ratio_table_reweights_behavior_into_target(p, q):
    n = min(len(p), len(q))
    mu = np.array(p[:n]) / sum(p[:n])
    pi = np.array(q[:n]) / sum(q[:n])
    r = ratio_table(pi[None], mu[None])[0]
    np.testing.assert_allclose(r * mu, pi, rtol=1e-12)
    assert np.dot(r, mu) == pytest.approx(1.0)
