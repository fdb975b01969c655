import numpy as np
import pytest

from hoc import core, oracle, verify
from hoc.core import CriticSet, HierarchyConfig, ParameterSet, TopPolicy
from hoc.envs import FourRooms, SampledModelEnv, StochasticDP, TabularModel
from hoc.learn import Learner, StepRecord

from conftest import make_config, randomize


def micro_model(rng, **kw):
    return verify.random_micro_model(rng, **kw)


class TestBuildChain:
    def test_depth_one_kernel_is_policy_averaged_mdp(self, np_rng):
        model = micro_model(np_rng)
        cfg = verify.random_micro_config(np_rng, model, depth=1)
        params = verify.random_params(np_rng, cfg)
        chain = oracle.build_chain(model, cfg, params)
        pi = oracle.policy_tables(cfg, params)[0]
        expected = np.einsum("sa,saz->sz", pi, model.transitions)
        np.testing.assert_allclose(chain.kernel, expected, atol=1e-14)

    def test_frozen_options_make_kernel_block_diagonal(self, np_rng):
        model = micro_model(np_rng)
        cfg = verify.random_micro_config(np_rng, model, depth=3)
        params = verify.random_params(np_rng, cfg)
        for t in params.termination_logits:
            t[:] = -500.0  # beta -> 0: options never change
        chain = oracle.build_chain(model, cfg, params)
        k = chain.num_stacks
        m = chain.size
        for y1 in range(m):
            for y2 in range(m):
                if y1 % k != y2 % k:
                    # beta = sigmoid(-500) is denormal-tiny, not exactly 0
                    assert chain.kernel[y1, y2] <= 1e-100

    def test_rows_sum_to_one(self, np_rng):
        for depth in (1, 2, 3, 4):
            model = micro_model(np_rng)
            cfg = verify.random_micro_config(np_rng, model, depth)
            params = verify.random_params(np_rng, cfg)
            chain = oracle.build_chain(model, cfg, params)
            np.testing.assert_allclose(
                chain.kernel.sum(axis=1), 1.0, atol=1e-12
            )
            np.testing.assert_allclose(
                chain.discounted_kernel, cfg.gamma * chain.kernel
            )

    def test_kernel_matches_learner_frequencies(self, np_rng):
        # Frozen parameters, zero learning rates: empirical transition
        # frequencies of the real learning loop must match the kernel rows.
        model = TabularModel(
            np_rng.dirichlet(np.ones(3), size=(3, 2)),
            np_rng.uniform(-1, 1, size=(3, 2)),
            np.zeros(3, dtype=bool),
            start=0,
        )
        cfg = HierarchyConfig(
            depth=3, options_per_level=(2, 2), num_actions=2, num_states=3,
            gamma=0.9, temperature_per_level=(1.0,) * 3,
            lr_critic=0.0, lr_policy=0.0, lr_termination=0.0,
            top_policy_mode=TopPolicy.POLICY_GRADIENT,
        )
        params = verify.random_params(np_rng, cfg, scale=0.5)
        chain = oracle.build_chain(model, cfg, params)
        lr = Learner(cfg, seed=5)
        lr.load(params=params)
        env = SampledModelEnv(model)
        state = env.reset(lr.rng)
        lr.select_initial_stack(state)
        n_steps = 200_000
        counts = np.zeros((chain.size, chain.size))
        for _ in range(n_steps):
            y_from = chain.y_index(state, tuple(lr.stack))
            action = lr.select_action(state)
            s2, r, done = env.step(action, lr.rng)
            lr.learn_step(StepRecord(state, tuple(lr.stack), action, r, s2,
                                     done))
            counts[y_from, chain.y_index(s2, tuple(lr.stack))] += 1
            state = s2
        totals = counts.sum(axis=1, keepdims=True)
        visited = totals[:, 0] > 500
        freq = counts[visited] / totals[visited]
        probs = chain.kernel[visited]
        n = totals[visited]
        sigma = np.sqrt(np.maximum(probs * (1 - probs), 1e-12) / n)
        assert np.abs(freq - probs).max() <= np.maximum(4 * sigma, 4e-3).max()
        # every visited row individually within 4 sigma (plus tiny floor)
        assert (np.abs(freq - probs) <= 4 * sigma + 1e-3).all()

    def test_model_config_mismatch_rejected(self, np_rng):
        model = micro_model(np_rng)
        cfg = make_config(1, num_actions=model.num_actions + 1,
                          num_states=model.num_states)
        with pytest.raises(ValueError):
            oracle.build_chain(model, cfg, ParameterSet.zeros(cfg))


class TestExactValues:
    def test_zero_rewards_give_zero_values(self, np_rng):
        model = micro_model(np_rng)
        model.rewards[:] = 0.0
        cfg = verify.random_micro_config(np_rng, model, 3)
        params = verify.random_params(np_rng, cfg)
        chain = oracle.build_chain(model, cfg, params)
        vals = oracle.exact_values(chain, cfg, params)
        assert np.abs(vals.full_values).max() == 0.0
        assert vals.rho == 0.0

    def test_single_state_geometric_series(self):
        model = TabularModel(
            np.ones((1, 2, 1)), np.ones((1, 2)), np.array([False]), 0
        )
        cfg = HierarchyConfig(
            depth=2, options_per_level=(2,), num_actions=2, num_states=1,
            gamma=0.9, temperature_per_level=(1.0, 1.0),
            top_policy_mode=TopPolicy.POLICY_GRADIENT,
        )
        params = ParameterSet.zeros(cfg)
        chain = oracle.build_chain(model, cfg, params)
        vals = oracle.exact_values(chain, cfg, params)
        np.testing.assert_allclose(vals.full_values, 1.0 / (1.0 - 0.9),
                                   rtol=1e-12)
        assert vals.residual <= 1e-10

    def test_monte_carlo_cross_check_small(self, np_rng):
        model = micro_model(np_rng, state_rewards=True)
        cfg = verify.random_micro_config(np_rng, model, 2, gamma=0.8)
        params = verify.random_params(np_rng, cfg)
        chain = oracle.build_chain(model, cfg, params)
        vals = oracle.exact_values(chain, cfg, params)
        returns = oracle.simulate_chain_returns(chain, 200_000, 140, seed=9)
        se = returns.std(ddof=1) / np.sqrt(len(returns))
        assert abs(returns.mean() - vals.rho) <= 3.5 * se

    def test_contraction_guard(self, np_rng):
        model = micro_model(np_rng)
        with pytest.raises(ValueError):
            verify.random_micro_config(np_rng, model, 2, gamma=1.0)

    def test_critic_set_satisfies_level_recursion(self, np_rng):
        # Q_Omega view of each level's exact table reproduces the level
        # above: the defining property of the marginal fixed point.
        model = micro_model(np_rng)
        cfg = verify.random_micro_config(np_rng, model, 4)
        params = verify.random_params(np_rng, cfg)
        chain = oracle.build_chain(model, cfg, params)
        vals = oracle.exact_values(chain, cfg, params)
        critics = vals.critic_set()
        for d in range(cfg.depth - 1):
            table = vals.q_marginal[d]
            for idx in np.ndindex(table.shape):
                got = core.eval_q_omega(
                    cfg, params, critics, idx[0], idx[1:]
                )
                assert abs(got - table[idx]) <= 1e-10


class TestGradients:
    def test_gamma_zero_kills_structural_gradients(self, np_rng):
        model = micro_model(np_rng)
        cfg = verify.random_micro_config(np_rng, model, 3, gamma=0.0)
        params = verify.random_params(np_rng, cfg)
        for level in (1, 2):
            ana = oracle.analytic_policy_gradient(model, cfg, params, level)
            fd = oracle.fd_return_gradient(model, cfg, params, "policy",
                                           level)
            assert np.abs(ana).max() == 0.0
            assert np.abs(fd).max() <= 1e-9
            ana_t = oracle.analytic_termination_gradient(
                model, cfg, params, level
            )
            assert np.abs(ana_t).max() == 0.0

    def test_primitive_level_gradient_nonzero_at_gamma_zero(self, np_rng):
        model = micro_model(np_rng)
        cfg = verify.random_micro_config(np_rng, model, 2, gamma=0.0)
        params = verify.random_params(np_rng, cfg)
        ana = oracle.analytic_policy_gradient(model, cfg, params, 2)
        fd = oracle.fd_return_gradient(model, cfg, params, "policy", 2)
        assert np.abs(fd).max() > 1e-4
        assert verify._gradient_errors(ana, fd) <= 1.0

    def test_saturated_termination_gates_zero_gradient(self, np_rng):
        model = micro_model(np_rng)
        cfg = verify.random_micro_config(np_rng, model, 3)
        params = verify.random_params(np_rng, cfg)
        params.termination_logits[1][:] = -500.0  # beta^2 -> 0 gates level 1
        ana = oracle.analytic_termination_gradient(model, cfg, params, 1)
        fd = oracle.fd_return_gradient(model, cfg, params, "termination", 1)
        assert np.abs(ana).max() <= 1e-12
        assert np.abs(fd).max() <= 1e-8

    def test_symmetric_options_give_antisymmetric_gradient(self):
        # two identical options: relabeling them flips the level-1 score
        model = TabularModel(
            np.ones((1, 1, 1)), np.ones((1, 1)), np.array([False]), 0
        )
        cfg = HierarchyConfig(
            depth=2, options_per_level=(2,), num_actions=1, num_states=1,
            gamma=0.9, temperature_per_level=(1.0, 1.0),
            top_policy_mode=TopPolicy.POLICY_GRADIENT,
        )
        params = ParameterSet.zeros(cfg)
        grad = oracle.analytic_policy_gradient(model, cfg, params, 1)
        assert grad[0, 0] == pytest.approx(-grad[0, 1], abs=1e-14)

    def test_fd_step_bounds(self, np_rng):
        model = micro_model(np_rng)
        cfg = verify.random_micro_config(np_rng, model, 2)
        params = verify.random_params(np_rng, cfg)
        with pytest.raises(ValueError):
            oracle.fd_return_gradient(model, cfg, params, "policy", 1,
                                      h=1e-2)


class TestValueIteration:
    def test_stochastic_dp_optimum_and_policy(self):
        model = StochasticDP().exact_model()
        v, policy, start_value = oracle.value_iteration(model, 0.99)
        obs = StochasticDP.obs
        # optimal: press right before the flag, walk left after it
        for s in range(2, 6):
            assert policy[obs(s, False)] == StochasticDP.RIGHT
        for s in range(2, 7):
            assert policy[obs(s, True)] == StochasticDP.LEFT
        assert 0.15 <= start_value <= 0.21
        # Bellman residual at the reported fixed point
        q = model.rewards + 0.99 * (model.transitions @ v)
        live = ~model.terminal
        assert np.abs(np.where(live, q.max(axis=1), 0.0) - v).max() <= 1e-10

    def test_zero_rewards_give_zero(self, np_rng):
        model = micro_model(np_rng)
        model.rewards[:] = 0.0
        v, _, start = oracle.value_iteration(model, 0.9)
        assert np.abs(v).max() == 0.0 and start == 0.0

    def test_adjacent_goal_closed_form_at_gamma_zero(self):
        # With no continuation value the optimal one-step value of a cell
        # next to the goal is 2/3 + (1/3) * (goal share of the neighbours).
        env = FourRooms()
        start = env.cell_index[(1, 2)]
        goal = env.cell_index[(1, 1)]
        model = env.frozen_model(start, goal)
        v, policy, start_value = oracle.value_iteration(model, 0.0)
        n_nbrs = len(env.neighbors[start])
        expected = 2 / 3 + (1 / 3) * (1 / n_nbrs)
        assert start_value == pytest.approx(expected, abs=1e-12)
        # and at the learning discount the value only improves
        _, _, v99 = oracle.value_iteration(model, 0.99)
        assert v99 >= start_value

    def test_gamma_bound(self):
        model = StochasticDP().exact_model()
        with pytest.raises(oracle.ContractionError):
            oracle.value_iteration(model, 1.0)


class TestPrefixKernels:
    def test_direct_equals_marginalized(self, np_rng):
        for depth in (2, 3, 4):
            model = micro_model(np_rng)
            cfg = verify.random_micro_config(np_rng, model, depth)
            params = verify.random_params(np_rng, cfg)
            chain = oracle.build_chain(model, cfg, params)
            for level in range(0, depth):
                direct = oracle.prefix_kernel(chain, level)
                marg = chain.kernel @ oracle.prefix_marginalizer(chain, level)
                np.testing.assert_allclose(direct, marg, atol=1e-12)
                np.testing.assert_allclose(direct.sum(axis=1), 1.0,
                                           atol=1e-12)

    def test_kstep_recursion(self, np_rng):
        model = micro_model(np_rng)
        cfg = verify.random_micro_config(np_rng, model, 3)
        params = verify.random_params(np_rng, cfg)
        chain = oracle.build_chain(model, cfg, params)
        pg = chain.discounted_kernel
        recursive = pg.copy()
        for k in range(2, 6):
            recursive = pg @ recursive
            np.testing.assert_allclose(
                recursive, np.linalg.matrix_power(pg, k), atol=1e-12
            )
