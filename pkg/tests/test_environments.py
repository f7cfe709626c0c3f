import numpy as np
import pytest

from imresample.environments import (DOWN, LEFT, RIGHT, UP, ChainEnv, ContFourRoomsEnv, FourRoomsEnv, chain_pair,
                                     fourrooms_behavior, load_layout, make_env, make_policy, random_mdp)
from imresample.environments.policies import fourrooms_special_states
from imresample.exceptions import InvalidState


class TestChain:
    def test_reset_is_uniform_over_nonterminals(self):
        env = ChainEnv(rng=0)
        starts = np.array([env.reset() for _ in range(8000)])
        assert starts.min() == 1 and starts.max() == 8
        assert np.all(np.abs(np.bincount(starts, minlength=10)[1:9] / 8000 - 1 / 8) < 0.02)

    def test_terminations_and_cumulants(self):
        env = ChainEnv(rng=0, auto_reset=False)
        env.state = 8
        t = env.step(1)
        assert (t.s_next, t.cumulant, t.gamma_next) == (9, 1.0, 0.0)
        env.state = 1
        t = env.step(0)
        assert (t.s_next, t.cumulant, t.gamma_next) == (0, 0.0, 0.0)
        env.state = 4
        t = env.step(1)
        assert (t.s_next, t.cumulant, t.gamma_next) == (5, 0.0, 1.0)

    def test_stepping_from_terminal_raises(self):
        env = ChainEnv(rng=0, auto_reset=False)
        env.state = 8
        env.step(1)
        with pytest.raises(InvalidState):
            env.step(0)

    def test_auto_reset_continues(self):
        env = ChainEnv(rng=1)
        for _ in range(500):
            t = env.step(int(env.rng.integers(2)))
            assert 1 <= t.s <= 8
            assert 1 <= env.state <= 8

    def test_model_is_stochastic(self):
        m = ChainEnv().model()
        rows = m.P[1:9].sum(axis=2)
        np.testing.assert_allclose(rows, 1.0)
        np.testing.assert_array_equal(m.states, np.arange(1, 9))


class TestFourRooms:
    def test_layout(self):
        grid = load_layout()
        assert grid.shape == (11, 11)
        env = FourRoomsEnv()
        assert env.n_states == 104
        assert len(env.hallways) == 4

    def test_wall_hit_terminates_in_place_and_resets(self):
        env = FourRoomsEnv(rng=0)
        top_left = env.index[(0, 0)]
        env.state = top_left
        t = env.step(UP)
        assert (t.s, t.s_next, t.cumulant, t.gamma_next) == (top_left, top_left, 1.0, 0.0)
        env.state = top_left
        t = env.step(RIGHT)
        assert t.s_next == env.index[(0, 1)] and t.gamma_next == 0.9 and t.cumulant == 0.0

    def test_wall_distance_down(self):
        env = FourRoomsEnv()
        assert env.wall_distance(env.index[(10, 0)], DOWN) == 0
        assert env.wall_distance(env.index[(6, 0)], DOWN) == 4
        # the vertical hallway column passes through two rooms
        assert max(env.wall_distance(s) for s in range(env.n_states)) == 10

    def test_model_rows(self):
        m = FourRoomsEnv().model()
        np.testing.assert_allclose(m.P.sum(axis=2), 1.0)
        assert set(np.unique(m.G)) == {0.0, 0.9}


class TestContinuousRooms:
    def test_moves_never_end_inside_walls(self, rng):
        env = ContFourRoomsEnv(rng=0)
        pos = env.random_free_points(2000, rng)
        assert not env.collides(pos).any()
        acts = rng.integers(0, 4, size=2000)
        end, hit, first = env.move(pos, env.sample_displacements(acts, rng))
        assert not env.collides(end).any()
        assert np.all((first > 0) == hit)

    def test_displacement_statistics(self, rng):
        env = ContFourRoomsEnv()
        d = env.sample_displacements(np.full(20000, DOWN), rng)
        assert d[:, 1].mean() == pytest.approx(-0.5, abs=0.01)
        assert d[:, 0].std() == pytest.approx(0.1, abs=0.01)
        assert np.all(np.abs(d[:, 1] + 0.5) <= 0.1)

    def test_wall_hit_gives_termination(self):
        env = ContFourRoomsEnv(rng=0)
        env.state = np.array([0.5, 0.15])
        t = env.step(DOWN)
        assert t.cumulant == 1.0 and t.gamma_next == 0.0
        assert not env.collides(env.state)

    def test_coordinates_put_row_zero_on_top(self):
        env = ContFourRoomsEnv()
        assert env.cell_box(0, 0) == (0.0, 10.0, 1.0, 11.0)
        # the wall cell at row 0, col 5 blocks the centre of that box
        assert env.collides(np.array([5.5, 10.5]))


class TestPolicies:
    def test_chain_pairs(self):
        mu, pi = chain_pair("mu90_pi10")
        assert mu.prob(3, 0) == 0.9 and pi.prob(3, 1) == 0.9

    def test_special_states_fixed_by_seed(self):
        a = fourrooms_special_states(104, seed=3)
        b = fourrooms_special_states(104, seed=3)
        np.testing.assert_array_equal(a, b)
        assert len(np.unique(a)) == 25
        mu = fourrooms_behavior(104, seed=3)
        assert mu.prob(int(a[0]), DOWN) == pytest.approx(0.05)

    def test_make_policy_names(self):
        env = FourRoomsEnv()
        for name in ("uniform", "persistent_down", "favored_down", "fourrooms_skewed", "chain:0.3,0.7"):
            make_policy(name, env)
        cenv = ContFourRoomsEnv()
        for name in ("state_variant", "state_weight_variant"):
            pol = make_policy(name, cenv, seed=1)
            assert len(pol.regions) == 25
        with pytest.raises(KeyError):
            make_policy("nope", env)

    def test_state_variant_down_probability(self):
        cenv = ContFourRoomsEnv()
        pol = make_policy("state_variant", cenv, seed=0)
        box, p = pol.regions[0]
        centre = [(box[0] + box[2]) / 2, (box[1] + box[3]) / 2]
        assert pol.probs(centre)[DOWN] == pytest.approx(0.1)


def test_make_env_kinds():
    assert isinstance(make_env("chain", rng=0), ChainEnv)
    assert isinstance(make_env("fourrooms", rng=0), FourRoomsEnv)
    assert isinstance(make_env("cont_fourrooms", rng=0), ContFourRoomsEnv)
    with pytest.raises(KeyError):
        make_env("maze")


def test_random_mdp_is_stochastic():
    m = random_mdp(n_states=4, seed=3)
    np.testing.assert_allclose(m.P.sum(axis=2), 1.0)
