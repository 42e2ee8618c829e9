import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanirl import envs
from scanirl.envs import EnvSpec, MDPModel
from scanirl.errors import ConfigError, UnsupportedError, UsageError
from scanirl.oracles import brute_force_optimal_values


def grid(h=3, w=3, **kw):
    return EnvSpec(kind="gridworld", height=h, width=w, **kw)


def test_reset_is_deterministic():
    spec = EnvSpec(corridor_length=3)
    (s1, o1), (s2, o2) = envs.env_reset(spec, 7), envs.env_reset(spec, 7)
    assert s1 == s2
    assert np.array_equal(o1, o2)


def test_gridworld_reset_encodes_start():
    state, obs = envs.env_reset(grid())
    assert state.position == (0, 0)
    assert obs[0] == 1.0 and obs.sum() == 1.0


def test_cue_frequency_is_balanced():
    spec = EnvSpec(corridor_length=3)
    cues = [envs.env_reset(spec, seed)[0].cue for seed in range(10_000)]
    assert 0.47 <= np.mean(np.array(cues) == 1) <= 0.53


@pytest.mark.parametrize("bad", [dict(corridor_length=0), dict(kind="gridworld", height=1),
                                 dict(kind="maze"), dict(discount=1.0),
                                 dict(kind="gridworld", goal=(5, 5))])
def test_invalid_specs_raise(bad):
    with pytest.raises(ConfigError):
        EnvSpec(**bad)


def test_wall_move_leaves_position():
    state, _ = envs.env_reset(grid())
    state, _, done, _ = envs.env_step(state, envs.UP)
    assert state.position == (0, 0) and not done


def test_tmaze_correct_choice_rewarded():
    spec = EnvSpec(corridor_length=2)
    seed = next(s for s in range(100) if envs.env_reset(spec, s)[0].cue == -1)
    state, obs = envs.env_reset(spec, seed)
    assert obs[2] == -1.0
    for _ in range(2):
        state, obs, done, _ = envs.env_step(state, envs.FORWARD)
        assert obs[2] == 0.0 and not done
    state, _, done, reward = envs.env_step(state, envs.LEFT)
    assert done and reward == 1.0


def test_tmaze_corridor_length_steps_reach_junction():
    spec = EnvSpec(corridor_length=5)
    state, obs = envs.env_reset(spec, 0)
    for t in range(5):
        assert obs[1] == 0.0
        state, obs, _, _ = envs.env_step(state, envs.FORWARD)
    assert obs[1] == 1.0 and obs[0] == 1.0


def test_step_after_done_is_usage_error():
    spec = EnvSpec(corridor_length=1)
    state, _ = envs.env_reset(spec, 0)
    state, *_ = envs.env_step(state, envs.FORWARD)
    state, _, done, _ = envs.env_step(state, envs.RIGHT)
    assert done
    with pytest.raises(UsageError):
        envs.env_step(state, envs.RIGHT)


def test_tabular_2x2_is_stochastic_and_deterministic():
    mdp = envs.tabular_build(grid(2, 2))
    assert mdp.n_states == 4 and mdp.n_actions == 4
    np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)
    assert set(np.unique(mdp.transition)) <= {0.0, 1.0}


def test_tabular_rejects_tmaze():
    with pytest.raises(UnsupportedError):
        envs.tabular_build(EnvSpec())


def test_env_step_agrees_with_transition_matrix():
    spec = grid(3, 4)
    mdp = envs.tabular_build(spec)
    rng = np.random.default_rng(0)
    state, _ = envs.env_reset(spec)
    for _ in range(1000):
        if state.done:
            state, _ = envs.env_reset(spec)
        s = envs.grid_state_index(spec, state.position)
        a = int(rng.integers(4))
        state, *_ = envs.env_step(state, a)
        assert mdp.transition[s, a, envs.grid_state_index(spec, state.position)] == 1.0


def test_episodes_are_bit_deterministic():
    def run():
        spec = EnvSpec(corridor_length=4)
        out = []
        for seed in range(20):
            state, obs = envs.env_reset(spec, seed)
            out.append(obs.tobytes())
            while not state.done:
                state, obs, _, r = envs.env_step(state, envs.FORWARD if obs[1] == 0 else envs.LEFT)
                out.append(obs.tobytes() + np.float64(r).tobytes())
        return b"".join(out)

    assert run() == run()


# ---------------------------------------------------------------------------
# value iteration


def single_state(reward=1.0, discount=0.9, actions=1):
    return MDPModel(np.ones((1, actions, 1)), np.ones(1), np.array([reward]), discount)


def test_geometric_series_value():
    values, policy = envs.value_iteration(single_state(), tol=1e-10)
    assert abs(values[0] - 10.0) < 1e-10
    assert policy.tolist() == [0]


def test_zero_reward_fixed_point():
    mdp = envs.tabular_build(grid()).with_reward(np.zeros(9))
    values, policy = envs.value_iteration(mdp, tol=1e-8)
    assert np.array_equal(values, np.zeros(9))
    assert np.array_equal(policy, np.zeros(9, dtype=int))


def test_value_iteration_matches_exhaustive_enumeration():
    mdp = envs.tabular_build(grid())
    values, policy = envs.value_iteration(mdp, tol=1e-12)
    best = brute_force_optimal_values(mdp)
    np.testing.assert_allclose(values, best, atol=1e-10)
    np.testing.assert_allclose(envs.policy_evaluation(mdp, policy), best, atol=1e-10)


def test_value_iteration_rejects_bad_tol():
    with pytest.raises(ConfigError):
        envs.value_iteration(single_state(), tol=0.0)


def test_malformed_mdp_rejected():
    with pytest.raises(ConfigError):
        MDPModel(np.full((2, 1, 2), 0.4), np.array([1.0, 0.0]), np.zeros(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sweeps_monotone_from_lower_bound(seed):
    rng = np.random.default_rng(seed)
    S, A = 5, 3
    P = rng.random((S, A, S))
    P /= P.sum(axis=2, keepdims=True)
    mdp = MDPModel(P, np.full(S, 1 / S), rng.normal(size=S), 0.9)
    prev = np.full(S, mdp.reward.min() / (1 - mdp.discount))
    for _, values in zip(range(60), envs.value_sweeps(mdp)):
        assert np.all(values >= prev - 1e-12)
        prev = values


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6))
def test_transition_rows_sum_to_one(h, w):
    mdp = envs.tabular_build(grid(h, w))
    assert np.max(np.abs(mdp.transition.sum(axis=2) - 1.0)) <= 1e-12
