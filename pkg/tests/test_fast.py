"""The compiled runner must reproduce the pure-Python learner bit for bit."""

import numpy as np
import pytest

from hoc import fast
from hoc.core import HierarchyConfig, TopPolicy
from hoc.envs import FourRooms, StochasticDP
from hoc.learn import Learner


def python_reference(config, env_name, seed, episodes, cap=10_000):
    env = FourRooms() if env_name == "four_rooms" else StochasticDP()
    learner = Learner(config, seed=seed)
    logs = [learner.run_episode(env, step_cap=cap) for _ in range(episodes)]
    return learner, logs


def assert_bit_identical(config, env_name, seed, episodes, cap=10_000):
    learner, logs = python_reference(config, env_name, seed, episodes, cap)
    result = fast.run_learning(config, env_name, seed, episodes, step_cap=cap)
    assert np.array_equal(np.array([l.steps for l in logs]), result.steps)
    assert np.array_equal(
        np.array([l.total_reward for l in logs]), result.reward
    )
    assert np.array_equal(
        np.array([l.discounted_return for l in logs]),
        result.discounted_return,
    )
    assert np.array_equal(
        np.array([l.truncated for l in logs]), result.truncated
    )
    if config.depth > 1:
        assert np.array_equal(
            np.array([l.terminations for l in logs]), result.terminations
        )
        assert np.array_equal(
            np.array([l.switches for l in logs]), result.switches
        )
    ref_p, ref_c = learner.params, learner.critics
    got_p, got_c = result.params(), result.critics()
    for a, b in zip(ref_p.policy_logits, got_p.policy_logits):
        assert np.array_equal(a, b)
    for a, b in zip(ref_p.termination_logits, got_p.termination_logits):
        assert np.array_equal(a, b)
    for a, b in zip(ref_c.q_u, got_c.q_u):
        assert np.array_equal(a, b)


class TestBitIdentity:
    def test_stochastic_dp_depth3(self):
        cfg = HierarchyConfig(
            depth=3, options_per_level=(2, 2), num_actions=2, num_states=12,
            gamma=0.99, temperature_per_level=(1.0,) * 3, lr_critic=0.5,
            lr_policy=1.0, lr_termination=10.0, epsilon=0.1, critic_init=0.5,
        )
        assert_bit_identical(cfg, "stochastic_dp", seed=123, episodes=500)

    def test_stochastic_dp_depth2_with_eta(self):
        cfg = HierarchyConfig(
            depth=2, options_per_level=(4,), num_actions=2, num_states=12,
            gamma=0.99, temperature_per_level=(0.1, 0.1), lr_critic=0.5,
            lr_policy=0.1, lr_termination=0.01, epsilon=0.1, eta=0.02,
            use_advantage_baseline=True,
        )
        assert_bit_identical(cfg, "stochastic_dp", seed=7, episodes=400)

    def test_four_rooms_depth3(self):
        cfg = HierarchyConfig(
            depth=3, options_per_level=(2, 2), num_actions=4, num_states=104,
            gamma=0.99, temperature_per_level=(1.0,) * 3, lr_critic=0.5,
            lr_policy=0.5, lr_termination=0.25, epsilon=0.1, eta=0.01,
            use_advantage_baseline=True,
        )
        assert_bit_identical(cfg, "four_rooms", seed=17, episodes=60)

    def test_four_rooms_actor_critic(self):
        cfg = HierarchyConfig(
            depth=1, options_per_level=(), num_actions=4, num_states=104,
            gamma=0.99, temperature_per_level=(0.1,), lr_critic=0.01,
            lr_policy=0.01, top_policy_mode=TopPolicy.POLICY_GRADIENT,
            use_advantage_baseline=True,
        )
        assert_bit_identical(cfg, "four_rooms", seed=29, episodes=25)

    def test_four_rooms_depth4(self):
        cfg = HierarchyConfig(
            depth=4, options_per_level=(2, 2, 2), num_actions=4,
            num_states=104, gamma=0.99, temperature_per_level=(1.0,) * 4,
            lr_critic=0.5, lr_policy=0.5, lr_termination=0.25, epsilon=0.1,
        )
        assert_bit_identical(cfg, "four_rooms", seed=41, episodes=30)

    def test_step_cap_truncation_matches(self):
        cfg = HierarchyConfig(
            depth=2, options_per_level=(2,), num_actions=4, num_states=104,
            gamma=0.99, temperature_per_level=(1.0, 1.0), lr_critic=0.5,
            lr_policy=0.5, lr_termination=0.25, epsilon=0.1,
        )
        assert_bit_identical(cfg, "four_rooms", seed=3, episodes=30, cap=40)


class TestWarmStart:
    def test_params_preload_round_trips(self):
        cfg = HierarchyConfig(
            depth=2, options_per_level=(2,), num_actions=2, num_states=12,
            gamma=0.99, temperature_per_level=(1.0, 1.0), lr_critic=0.0,
            lr_policy=0.0, lr_termination=0.0, epsilon=0.0,
        )
        rng = np.random.default_rng(0)
        from conftest import randomize

        params, critics = randomize(rng, cfg)
        res = fast.run_learning(
            cfg, "stochastic_dp", seed=1, episodes=5,
            params=params, critics=critics,
        )
        got_p, got_c = res.params(), res.critics()
        for a, b in zip(params.policy_logits, got_p.policy_logits):
            assert np.array_equal(a, b)
        for a, b in zip(params.termination_logits, got_p.termination_logits):
            assert np.array_equal(a, b)
        for a, b in zip(critics.q_u, got_c.q_u):
            assert np.array_equal(a, b)

    def test_env_size_mismatch_rejected(self):
        cfg = HierarchyConfig(
            depth=1, options_per_level=(), num_actions=2, num_states=5,
            gamma=0.9, temperature_per_level=(1.0,),
        )
        with pytest.raises(ValueError):
            fast.run_learning(cfg, "stochastic_dp", 0, 1)
