import numpy as np
import pytest

from mcrl import envs


def test_tabular_reset_is_one_hot_and_deterministic():
    mdp = envs.TabularMdp.random_instance(0)
    s1 = mdp.reset(np.random.default_rng(5))
    s2 = mdp.reset(np.random.default_rng(5))
    assert s1.shape == (2,)
    assert sorted(s1.tolist()) == [0.0, 1.0]
    np.testing.assert_array_equal(s1, s2)


def test_tabular_deterministic_row_lookup():
    P = np.zeros((2, 2, 2))
    P[0, 0, 1] = 1.0  # s0, a0 -> s1
    P[0, 1, 0] = 1.0
    P[1, 0, 0] = 1.0
    P[1, 1, 1] = 1.0
    R = np.array([[0.25, 0.5], [0.75, 1.0]])
    mdp = envs.TabularMdp(P, R, horizon=3)
    s = mdp.reset(np.random.default_rng(0))
    s2, r, done = mdp.step(s, np.array([-0.3]), np.random.default_rng(0))  # bin 0
    assert r == 0.25
    np.testing.assert_array_equal(s2, [0.0, 1.0])
    assert not done


def test_tabular_tables_validated():
    bad_p = np.full((2, 2, 2), 0.4)
    with pytest.raises(ValueError):
        envs.TabularMdp(bad_p, np.zeros((2, 2)))
    ok_p = np.zeros((2, 2, 2))
    ok_p[..., 0] = 1.0
    with pytest.raises(ValueError):
        envs.TabularMdp(ok_p, np.array([[np.inf, 0], [0, 0]]))


def test_nan_action_rejected():
    env = envs.PointMass()
    s = env.reset(np.random.default_rng(0))
    with pytest.raises(ValueError):
        env.step(s, np.array([np.nan, 0.0]), np.random.default_rng(0))


def test_pointmass_reset_within_box():
    env = envs.PointMass()
    rng = np.random.default_rng(0)
    for _ in range(1000):
        s = env.reset(rng)
        assert np.all(np.abs(s[:2]) <= env.INIT_BOX)
        assert np.all(s[2:] == 0.0)


def test_pointmass_at_goal_zero_force_zero_reward():
    env = envs.PointMass()
    env.reset(np.random.default_rng(0))
    s = np.zeros(4)
    _, r, _ = env.step(s, np.zeros(2), np.random.default_rng(0))
    assert r == 0.0


def test_pendulum_equilibrium():
    env = envs.Pendulum()
    env.reset(np.random.default_rng(0))
    s2, r, done = env.step(np.zeros(2), np.zeros(1), np.random.default_rng(0))
    assert r == 0.0
    np.testing.assert_array_equal(s2, np.zeros(2))
    assert not done


def test_pendulum_angle_wraps():
    env = envs.Pendulum()
    env.reset(np.random.default_rng(0))
    s = np.array([np.pi - 0.01, 5.0])
    s2, _, _ = env.step(s, np.zeros(1), np.random.default_rng(0))
    assert -np.pi <= s2[0] <= np.pi


def test_horizon_done_flags():
    env = envs.PointMass(horizon=3)
    rng = np.random.default_rng(1)
    s = env.reset(rng)
    dones = []
    for _ in range(3):
        s, _, d = env.step(s, np.zeros(2), rng)
        dones.append(d)
    assert dones == [False, False, True]


def test_reward_bounds_respected():
    rng = np.random.default_rng(7)
    for name in envs.ENV_NAMES:
        env = envs.make_env(name, env_seed=3)
        s = env.reset(rng)
        for _ in range(200):
            a = rng.uniform(-2 * env.spec.action_bound, 2 * env.spec.action_bound,
                            size=env.spec.action_dim)
            s, r, done = env.step(s, a, rng)
            assert env.spec.reward_min - 1e-12 <= r <= env.spec.reward_max + 1e-12
            if done:
                s = env.reset(rng)


def test_determinism_identical_trajectories():
    for name in envs.ENV_NAMES:
        env = envs.make_env(name, env_seed=11)
        trajs = []
        for _ in range(2):
            rng = np.random.default_rng(99)
            s = env.reset(rng)
            tr = [s.copy()]
            for _ in range(20):
                a = np.tanh(s[: env.spec.action_dim])  # a fixed policy of the state
                s, r, done = env.step(s, a, rng)
                tr.append(s.copy())
                if done:
                    s = env.reset(rng)
            trajs.append(np.stack(tr))
        np.testing.assert_array_equal(trajs[0], trajs[1])


def test_optimal_return_zero_rewards():
    P = np.zeros((2, 2, 2))
    P[..., 0] = 1.0
    mdp = envs.TabularMdp(P, np.zeros((2, 2)))
    assert envs.tabular_optimal_return(mdp) == 0.0


def test_optimal_return_rewarding_self_loop():
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0  # stay via action 0
    P[0, 1, 1] = 1.0
    P[1, :, 1] = 1.0
    R = np.array([[1.0, 0.0], [0.0, 0.0]])
    mdp = envs.TabularMdp(P, R, gamma=0.9)
    v = envs.tabular_optimal_return(mdp, gamma=0.9, horizon=10_000)
    assert v == pytest.approx(10.0, abs=1e-8)


def test_value_iteration_contracts():
    rng = np.random.default_rng(17)
    for seed in range(5):
        mdp = envs.TabularMdp.random_instance(seed)
        gamma = 0.9
        V = rng.normal(size=2)
        W = rng.normal(size=2)
        for _ in range(10):
            V2 = (mdp.R + gamma * (mdp.P @ V)).max(axis=1)
            W2 = (mdp.R + gamma * (mdp.P @ W)).max(axis=1)
            lhs = np.max(np.abs(V2 - W2))
            rhs = gamma * np.max(np.abs(V - W))
            assert lhs <= rhs + 1e-12
            V, W = V2, W2


def test_random_instance_oracle_is_reproducible():
    a = envs.tabular_optimal_return(envs.TabularMdp.random_instance(123))
    b = envs.tabular_optimal_return(envs.TabularMdp.random_instance(123))
    assert a == b


def test_make_env_unknown_name():
    with pytest.raises(ValueError):
        envs.make_env("mujoco")
