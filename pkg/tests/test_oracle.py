import itertools

import numpy as np
import pytest

from imresample.environments import ChainEnv, chain_pair
from imresample.environments.tabular import random_mdp
from imresample.exceptions import EmptySample, PremiseViolated
from imresample.oracle import (TrueValues, ave, bellman_residual, check_theorem3, check_theorem4,
                               closed_form_variances, dp_true_values, mave, resampling_tv,
                               rollout_horizon, stationary_distribution, trace_variance, transition_table)


def linear_solve_values(model, pi):
    reward = np.einsum("sa,sat,sat->s", pi, model.P, model.C)
    M = np.einsum("sa,sat,sat->st", pi, model.P, model.G)
    return np.linalg.solve(np.eye(model.n_states) - M, reward)


@pytest.mark.parametrize("seed", range(5))
def test_dp_matches_linear_solve_on_random_mdps(seed):
    model = random_mdp(4, 3, 3, seed=seed)
    pi = np.random.default_rng(seed).dirichlet(np.ones(3), size=4)
    v = dp_true_values(model, pi)
    np.testing.assert_allclose(v, linear_solve_values(model, pi), atol=1e-12)
    assert bellman_residual(model, pi, v) < 1e-14


def test_chain_values():
    env = ChainEnv()
    _, pi = chain_pair("mu90_pi10")
    states = np.arange(env.n_states)
    v = dp_true_values(env.model(), pi.table(states))
    np.testing.assert_allclose(v, linear_solve_values(env.model(), pi.table(states)), atol=1e-12)


def test_stationary_distribution_solves_balance_equations():
    model = random_mdp(5, 2, 3, seed=3)
    mu = np.full((5, 2), 0.5)
    d = stationary_distribution(model, mu)
    K = model.state_kernel(mu)
    A = np.vstack([K.T - np.eye(5), np.ones(5)])
    ref = np.linalg.lstsq(A, np.r_[np.zeros(5), 1.0], rcond=None)[0]
    np.testing.assert_allclose(d, ref, atol=1e-10)


def test_transition_table_probabilities():
    model = random_mdp(4, 2, 2, seed=1)
    rng = np.random.default_rng(0)
    mu = rng.dirichlet(np.ones(2), size=4)
    pi = rng.dirichlet(np.ones(2), size=4)
    tab = transition_table(model, mu, pi)
    assert tab.p.sum() == pytest.approx(1.0) and tab.q.sum() == pytest.approx(1.0)
    # rho reweights the behavior distribution into the target one (same state distribution)
    np.testing.assert_allclose(tab.p * tab.rho, tab.q * (tab.p * tab.rho).sum() / tab.q.sum(), atol=1e-12)
    np.testing.assert_allclose((tab.p * tab.rho).sum(), 1.0, atol=1e-12)


def brute_force_variance(rho, D, k, coef):
    """Exact trace variance by enumerating every ordered mini-batch."""
    n = len(rho)
    probs, vals = [], []
    for idx in itertools.product(range(n), repeat=k):
        idx = list(idx)
        p, x = coef(idx)
        probs.append(p)
        vals.append(x)
    probs = np.array(probs)
    vals = np.array(vals)
    mean = probs @ vals
    return float(probs @ np.sum((vals - mean) ** 2, axis=1))


def test_closed_forms_match_enumeration():
    rng = np.random.default_rng(4)
    n, d, k = 4, 3, 2
    rho = rng.uniform(0.1, 3.0, n)
    D = rng.normal(size=(n, d))
    cf = closed_form_variances(rho, D, k)
    rb = rho.mean()
    p = rho / rho.sum()
    v_is = brute_force_variance(rho, D, k, lambda i: (n ** -k, (rho[i, None] * D[i]).mean(0)))
    v_bc = brute_force_variance(rho, D, k, lambda i: (np.prod(p[i]), rb * D[i].mean(0)))
    v_ir = brute_force_variance(rho, D, k, lambda i: (np.prod(p[i]), D[i].mean(0)))
    assert cf["v_is"] == pytest.approx(v_is, rel=1e-12)
    assert cf["v_bc"] == pytest.approx(v_bc, rel=1e-12)
    assert cf["v_ir"] == pytest.approx(v_ir, rel=1e-12)


def test_premise_check_and_constant_norm_gap():
    rho = np.array([0.5, 1.0, 2.5])
    c = 1.0
    # norms above c/rho for large ratios, below for small ones
    D = np.sqrt(np.array([c / 0.5 * 0.5, c / 1.0 * 0.5, c / 2.5 * 2]))[:, None]
    assert check_theorem3(rho, D, c) > 0
    with pytest.raises(PremiseViolated):
        check_theorem3(rho, D * np.array([[1.0], [1.0], [0.5]]), c)
    U = rng_unit = np.random.default_rng(0).normal(size=(3, 4))
    U /= np.linalg.norm(rng_unit, axis=1, keepdims=True)
    ok, diff, pred = check_theorem4(rho, 2.0 * U, k=3)
    assert ok and diff == pytest.approx(pred)
    with pytest.raises(PremiseViolated):
        check_theorem4(rho, D)


def test_true_values_csv_roundtrip(tmp_path):
    tv = TrueValues(np.array([1, 4, 7]), np.array([0.1, 1 / 3, -2.0]))
    tv.to_csv(tmp_path / "t.csv")
    back = TrueValues.from_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.states, tv.states)
    np.testing.assert_array_equal(back.values, tv.values)
    cont = TrueValues(np.array([[0.5, 1.25], [3.0, 2.0]]), np.array([0.7, 0.2]), np.array([0.01, 0.02]))
    cont.to_csv(tmp_path / "c.csv")
    back = TrueValues.from_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.states, cont.states)
    np.testing.assert_array_equal(back.stderr, cont.stderr)


def test_error_metrics():
    assert ave([1.0, 2.0], TrueValues(np.arange(2), np.array([0.5, 3.0]))) == pytest.approx(0.75)
    assert mave([1.0, 2.0, 3.0]) == 2.0
    assert rollout_horizon(0.9) == 66
    with pytest.raises(ValueError):
        rollout_horizon(1.0)


def test_resampling_tv(rng):
    q = np.array([0.25, 0.75])
    assert resampling_tv([0, 1], [1.0, 3.0], q, None, rng) == pytest.approx(0.0)
    assert resampling_tv([0, 0], [1.0, 1.0], q, None, rng) == pytest.approx(0.75)
    with pytest.raises(EmptySample):
        resampling_tv([0], [1.0], q, 0, rng)


def test_trace_variance():
    var, se = trace_variance(np.ones((10, 3)))
    assert var == 0.0 and se == 0.0
    x = np.random.default_rng(0).normal(size=(200_000, 2)) * [1.0, 2.0]
    var, se = trace_variance(x)
    assert abs(var - 5.0) < 4 * se
