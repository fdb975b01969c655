"""Acceptance criteria, one test per criterion, run at full stated size.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output).  Tolerances and sample sizes are pinned here, not
configurable.
"""

import time

import numpy as np
import pytest

from hoc import core, experiment, oracle, verify
from hoc.core import HierarchyConfig, TopPolicy
from hoc.envs import StochasticDP
from hoc.experiment import ExperimentSpec, default_agent
from hoc.learn import Learner, StepRecord

from conftest import make_config, randomize


def _report(num, name, passed, detail=""):
    line = f"ACCEPTANCE {num} {name}: {'PASS' if passed else 'FAIL'} {detail}"
    print(line)
    assert passed, line


class TestCriterion1TheoremVerification:
    def test_both_gradient_theorems_match_finite_differences(self):
        t0 = time.time()
        t1 = verify.check_theorem("policy", n_models=50)
        t2 = verify.check_theorem("termination", n_models=50)
        elapsed = time.time() - t0
        detail = (
            f"(worst scaled errors {t1.worst:.4f} / {t2.worst:.4f}, "
            f"bound 1.0 at tolerance 1e-4 rel, 1e-7 floor; {elapsed:.0f}s)"
        )
        _report(1, "theorem verification",
                t1.passed and t2.passed and elapsed < 120.0, detail)


class TestCriterion2ValueRecursion:
    def test_enumeration_equivalence_and_partition(self):
        enum = verify.check_enumeration(n_instances=1000)
        part = verify.check_partition(n_vectors=1000)
        detail = f"(enum worst {enum.worst:.2e}, partition worst {part.worst:.2e})"
        _report(2, "value-recursion equivalence",
                enum.passed and part.passed, detail)


class TestCriterion3Reductions:
    def test_actor_critic_and_option_critic_reductions(self):
        n1 = verify.check_n1_reduction()
        n2 = verify.check_n2_reduction()
        _report(3, "depth-1/depth-2 reductions", n1.passed and n2.passed,
                f"({n1.detail}; {n2.detail})")


def _crossing_median(summary, threshold, episodes):
    crossings = []
    for row in summary.per_run_windowed:
        above = np.flatnonzero(row >= threshold)
        crossings.append(
            (above[0] + 1) * 100 if len(above) else episodes + 1
        )
    return float(np.median(crossings)), crossings


class TestCriterion4StochasticDP:
    def test_benchmark_reaches_optimum_and_depth3_is_no_slower(self, tmp_path):
        t0 = time.time()
        model = StochasticDP().exact_model()
        _, _, optimum = oracle.value_iteration(model, 0.99)
        threshold = 0.8 * optimum
        summaries = {}
        for depth in (2, 3):
            spec = ExperimentSpec(
                env="stochastic_dp",
                agent=default_agent("stochastic_dp", depth),
                num_runs=10,
                episodes=10_000,
                base_seed=0,
                output_dir=tmp_path / f"dp{depth}",
            )
            summaries[depth] = experiment.run_experiment(
                spec, write_files=False
            )
        elapsed = time.time() - t0
        final2 = summaries[2].final_mean
        final3 = summaries[3].final_mean
        med2, _ = _crossing_median(summaries[2], threshold, 10_000)
        med3, _ = _crossing_median(summaries[3], threshold, 10_000)
        ok = (
            final2 >= threshold
            and final3 >= threshold
            and med3 <= med2
            and elapsed < 600.0
        )
        detail = (
            f"(optimum {optimum:.4f}, threshold {threshold:.4f}; finals "
            f"N=2 {final2:.3f}, N=3 {final3:.3f}; crossing medians "
            f"N=3 {med3:.0f} <= N=2 {med2:.0f} episodes; {elapsed:.0f}s)"
        )
        _report(4, "stochastic decision process benchmark", ok, detail)


class TestCriterion5FourRooms:
    def test_final_episode_lengths_ordered_by_depth(self, tmp_path):
        t0 = time.time()
        finals = {}
        for depth in (1, 2, 3):
            spec = ExperimentSpec(
                env="four_rooms",
                agent=default_agent("four_rooms", depth),
                num_runs=50,
                episodes=20_000,
                base_seed=0,
                output_dir=tmp_path / f"fr{depth}",
            )
            summary = experiment.run_experiment(spec, write_files=False)
            finals[depth] = summary.final_mean
        elapsed = time.time() - t0
        ok = (
            finals[3] <= finals[2]
            and finals[2] < finals[1]
            and finals[1] - finals[2] >= 0.1 * finals[1]
            and elapsed < 1800.0
        )
        detail = (
            f"(final mean steps N=1 {finals[1]:.0f}, N=2 {finals[2]:.0f}, "
            f"N=3 {finals[3]:.0f}; margin "
            f"{(finals[1] - finals[2]) / finals[1]:.0%} >= 10%; {elapsed:.0f}s)"
        )
        _report(5, "four rooms ordering", ok, detail)


class TestCriterion6ChainCorrectness:
    def test_row_stochasticity_and_monte_carlo(self):
        rows = verify.check_chain_rows(n_instances=200)
        mc = verify.check_monte_carlo(n_episodes=1_000_000, n_models=5)
        detail = f"(rows worst {rows.worst:.2e}; MC ratios {mc.detail})"
        _report(6, "chain correctness", rows.passed and mc.passed, detail)


def _update_correctness_holds() -> bool:
    """One learn_step equals the core closed forms (tiny replay harness)."""
    rng = np.random.default_rng(8)
    cfg = make_config(
        3, options=(2, 2), num_actions=3, num_states=4, gamma=0.9,
        lr_critic=0.3, lr_policy=0.2, lr_termination=0.4, eta=0.05,
    )
    lr = Learner(cfg, seed=11)
    params, critics = randomize(rng, cfg)
    lr.load(params=params, critics=critics)
    lr.select_initial_stack(2)
    stack = tuple(lr.stack)
    before_p, before_c = lr.params, lr.critics
    lr.learn_step(StepRecord(2, stack, 1, 0.7, 3, False))
    after_p = lr.params

    p, c = before_p.copy(), before_c.copy()
    target = 0.7 + cfg.gamma * core.eval_u(cfg, p, c, 3, stack)
    for j in (1, 2):
        idx = (2,) + stack[:j]
        c.q_u[j - 1][idx] += cfg.lr_critic * (target - c.q_u[j - 1][idx])
    c.q_u[2][(2,) + stack + (1,)] += cfg.lr_critic * (
        target - c.q_u[2][(2,) + stack + (1,)]
    )
    for j in (1, 2, 3):
        chosen = stack[j - 1] if j < 3 else 1
        scale = c.q_u[j - 1][(2,) + stack[: j - 1] + (chosen,)]
        p.policy_logits[j - 1][(2,) + stack[: j - 1]] += core.policy_grad_step(
            cfg, p, j, 2, stack[: j - 1], chosen, scale
        )
    for j in (1, 2):
        gate = 1.0
        for i in range(j + 1, 3):
            gate *= core.termination_prob(cfg, p, i, 3, stack)
        adv = core.advantage(cfg, p, c, 3, stack[:j])
        p.termination_logits[j - 1][(3,) + stack[:j]] += (
            core.termination_grad_step(cfg, p, j, 3, stack[:j], gate, adv)
        )
    for got, want in zip(after_p.termination_logits, p.termination_logits):
        if np.abs(got - want).max() > 1e-12:
            return False
    for got, want in zip(after_p.policy_logits, p.policy_logits):
        if np.abs(got - want).max() > 1e-12:
            return False
    return True


class TestCriterion7MutationSensitivity:
    """Injected bugs must each trip at least one verification check."""

    def test_unmutated_baseline_is_green(self):
        assert _update_correctness_holds()
        assert verify.check_theorem("termination", n_models=6).passed
        assert verify.check_partition(100).passed
        assert verify.check_enumeration(100).passed

    def test_sign_flipped_termination_update_detected(self, monkeypatch):
        true_step = core.termination_grad_step

        def flipped(*args, **kwargs):
            return -true_step(*args, **kwargs)

        monkeypatch.setattr(core, "termination_grad_step", flipped)
        caught = not _update_correctness_holds()
        _report(7, "mutation: sign-flipped termination update", caught,
                "(update-correctness check fails)")

    def test_dropped_gate_detected(self, monkeypatch):
        monkeypatch.setattr(
            oracle, "termination_gate", lambda *a, **k: 1.0
        )
        result = verify.check_theorem("termination", n_models=6)
        _report(7, "mutation: dropped termination gate", not result.passed,
                f"(theorem-2 check fails, worst {result.worst:.1f})")

    @pytest.mark.parametrize(
        "kind",
        [
            core.EventKind.NONE_TERMINATE,
            core.EventKind.ALL_TERMINATE,
            core.EventKind.LOWER_ONLY,
            core.EventKind.HIGHER,
        ],
    )
    def test_dropped_arrival_term_detected(self, monkeypatch, kind):
        true_partition = core.termination_partition

        def missing_term(betas, level):
            return [
                e for e in true_partition(betas, level) if e.kind is not kind
            ]

        monkeypatch.setattr(core, "termination_partition", missing_term)
        part = verify.check_partition(100)
        enum = verify.check_enumeration(100)
        caught = (not part.passed) or (not enum.passed)
        _report(
            7, f"mutation: dropped {kind.value} term", caught,
            "(partition/enumeration checks fail)",
        )
