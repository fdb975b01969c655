"""The verification suite: every equation checked against an independent route.

Each check returns a :class:`CheckResult` with the worst observed error so
the CLI can print one line per check and write a residual CSV.  The checks
are deliberately redundant with the unit tests -- this module is the
executable statement of what "correct" means for this package:

* partition        -- termination-event weights are a probability partition
* enumeration      -- the arrival value equals a brute-force average over all
                      joint termination outcomes under bottom-up gating
* u_consistency    -- exact arrival values equal the library evaluation at
                      the exact critic fixed point
* theorem1 / theorem2 -- analytic gradients match central finite differences
                      of the exact discounted return
* chain rows, k-step recursion, prefix kernels -- augmented-chain algebra
* n1 / n2 reductions -- the general learner collapses to actor-critic and to
                      the stand-alone option-critic, bit for bit
* monte_carlo      -- exact values match simulated returns within 3 SE
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import core, oracle
from .core import CriticSet, HierarchyConfig, ParameterSet, TopPolicy
from .envs import FourRooms, StochasticDP, TabularModel
from .learn import Learner
from .oc_reference import OptionCritic
from .rng import TraceRng


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    worst: float = 0.0
    seconds: float = 0.0


def random_micro_model(rng: np.random.Generator, max_states: int = 4,
                       max_actions: int = 3,
                       state_rewards: bool = False) -> TabularModel:
    """A random continuing MDP small enough for dense verification."""
    n_s = int(rng.integers(2, max_states + 1))
    n_a = int(rng.integers(2, max_actions + 1))
    p = rng.dirichlet(np.ones(n_s), size=(n_s, n_a))
    if state_rewards:
        r = np.repeat(rng.uniform(-1.0, 1.0, size=(n_s, 1)), n_a, axis=1)
    else:
        r = rng.uniform(-1.0, 1.0, size=(n_s, n_a))
    return TabularModel(p, r, np.zeros(n_s, dtype=bool), start=0)


def random_micro_config(rng: np.random.Generator, model: TabularModel,
                        depth: int, gamma: float = 0.9) -> HierarchyConfig:
    options = tuple(int(rng.integers(2, 4)) for _ in range(depth - 1))
    return HierarchyConfig(
        depth=depth,
        options_per_level=options,
        num_actions=model.num_actions,
        num_states=model.num_states,
        gamma=gamma,
        temperature_per_level=(1.0,) * depth,
        top_policy_mode=TopPolicy.POLICY_GRADIENT,
    )


def random_params(rng: np.random.Generator, config: HierarchyConfig,
                  scale: float = 1.0) -> ParameterSet:
    params = ParameterSet.zeros(config)
    for t in params.policy_logits:
        t += rng.normal(0.0, scale, t.shape)
    for t in params.termination_logits:
        t += rng.normal(0.0, scale, t.shape)
    return params


def enumerate_arrival_value(config: HierarchyConfig, params: ParameterSet,
                            critics: CriticSet, state: int,
                            stack: tuple[int, ...], level: int) -> float:
    """Brute-force U: average over all 2^(N-1) joint termination coin draws.

    A level's coin only takes effect when every deeper level terminated
    (bottom-up gating); the surviving prefix maps to a continuation value by
    the same regrouping rule the library uses, but the probability of each
    outcome is assembled coin by coin with no partition algebra.
    """
    n = config.depth - 1
    betas = [
        core.termination_prob(config, params, j, state, stack)
        for j in range(1, n + 1)
    ]
    total = 0.0
    for coins in itertools.product((0, 1), repeat=n):
        prob = 1.0
        for j in range(1, n + 1):
            prob *= betas[j - 1] if coins[j - 1] else 1.0 - betas[j - 1]
        if prob == 0.0:
            continue
        # effective suffix: deepest-first run of terminations
        q = n + 1
        for j in range(n, 0, -1):
            if coins[j - 1]:
                q = j
            else:
                break
        if q == n + 1:          # nothing terminates
            cont = core.eval_q_omega(config, params, critics, state, stack)
        elif q == 1:            # everything terminates
            cont = core.eval_q_omega(config, params, critics, state, ())
        elif q > level:         # only levels deeper than `level` terminate
            cont = core.eval_q_omega(
                config, params, critics, state, stack[:level]
            )
        else:                   # some levels at or above `level` terminate
            cont = core.eval_q_omega(
                config, params, critics, state, stack[: q - 1]
            )
        total += prob * cont
    return total


def check_partition(n_vectors: int = 1000, seed: int = 0) -> CheckResult:
    t0 = time.time()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for depth in (2, 3, 4, 5):
        n = depth - 1
        for _ in range(n_vectors // 4):
            betas = rng.uniform(0.0, 1.0, n)
            for level in range(0, n + 1):
                events = core.termination_partition(list(betas), level)
                s = sum(e.weight for e in events)
                worst = max(worst, abs(s - 1.0))
                if any(not 0.0 <= e.weight <= 1.0 for e in events):
                    return CheckResult(
                        "partition", False,
                        f"weight outside [0,1] at depth {depth}", 1.0,
                        time.time() - t0,
                    )
    passed = worst <= 1e-12
    return CheckResult(
        "partition", passed,
        f"max |sum(weights) - 1| = {worst:.2e} over {n_vectors} draws x "
        f"depths 2..5, tolerance 1e-12", worst, time.time() - t0,
    )


def check_enumeration(n_instances: int = 1000, seed: int = 1) -> CheckResult:
    t0 = time.time()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        depth = int(rng.integers(1, 6))
        config = HierarchyConfig(
            depth=depth,
            options_per_level=tuple(
                int(rng.integers(2, 4)) for _ in range(depth - 1)
            ),
            num_actions=int(rng.integers(2, 4)),
            num_states=int(rng.integers(2, 4)),
            gamma=0.9,
            temperature_per_level=(1.0,) * depth,
            top_policy_mode=TopPolicy.POLICY_GRADIENT,
        )
        params = random_params(rng, config)
        critics = CriticSet.zeros(config)
        for t in critics.q_u:
            t += rng.normal(0.0, 1.0, t.shape)
        state = int(rng.integers(config.num_states))
        stack = tuple(
            int(rng.integers(n)) for n in config.options_per_level
        )
        level = int(rng.integers(0, depth))
        via_partition = core.eval_u(config, params, critics, state, stack, level)
        via_enum = enumerate_arrival_value(
            config, params, critics, state, stack, level
        )
        worst = max(worst, abs(via_partition - via_enum))
    passed = worst <= 1e-12
    return CheckResult(
        "enumeration", passed,
        f"max |eval_u - coin enumeration| = {worst:.2e} over "
        f"{n_instances} random instances, tolerance 1e-12",
        worst, time.time() - t0,
    )


def check_u_consistency(n_instances: int = 40, seed: int = 2) -> CheckResult:
    t0 = time.time()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        depth = int(rng.integers(1, 5))
        model = random_micro_model(rng)
        config = random_micro_config(rng, model, depth)
        params = random_params(rng, config)
        chain = oracle.build_chain(model, config, params)
        vals = oracle.exact_values(chain, config, params)
        critics = vals.critic_set()
        for level in range(0, depth):
            table = vals.arrival_values(level)
            for s in range(config.num_states):
                for ui, u in enumerate(chain.stacks):
                    lib = core.eval_u(config, params, critics, s, u, level)
                    worst = max(worst, abs(lib - table[s, ui]))
    passed = worst <= 1e-10
    return CheckResult(
        "u_consistency", passed,
        f"max |exact U - eval_u(exact critic)| = {worst:.2e} over "
        f"{n_instances} models, tolerance 1e-10", worst, time.time() - t0,
    )


def _gradient_errors(ana: np.ndarray, fd: np.ndarray) -> float:
    """Worst ratio of |analytic - fd| to max(1e-7, 1e-4 |fd|)."""
    denom = np.maximum(1e-7, 1e-4 * np.abs(fd))
    return float((np.abs(ana - fd) / denom).max())


def check_theorem(kind: str, n_models: int = 50, seed: int = 3,
                  h: float = 1e-5) -> CheckResult:
    """Analytic gradient theorem vs finite differences of the exact return.

    ``kind`` is "policy" (intra-option policy gradient) or "termination".
    50 random micro-MDPs split across depths 2..4, every level checked,
    tolerance 1e-4 relative with a 1e-7 absolute floor.
    """
    t0 = time.time()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_models):
        depth = 2 + i % 3
        model = random_micro_model(rng)
        config = random_micro_config(rng, model, depth)
        params = random_params(rng, config)
        start_stack = tuple(
            int(rng.integers(n)) for n in config.options_per_level
        )
        levels = range(1, depth + 1) if kind == "policy" else range(1, depth)
        for level in levels:
            if kind == "policy":
                ana = oracle.analytic_policy_gradient(
                    model, config, params, level, start_stack
                )
            else:
                ana = oracle.analytic_termination_gradient(
                    model, config, params, level, start_stack
                )
            fd = oracle.fd_return_gradient(
                model, config, params, kind, level, h, start_stack
            )
            worst = max(worst, _gradient_errors(ana, fd))
    passed = worst <= 1.0
    name = "theorem1" if kind == "policy" else "theorem2"
    return CheckResult(
        name, passed,
        f"worst |analytic - fd| / max(1e-7, 1e-4 |fd|) = {worst:.3f} over "
        f"{n_models} micro-MDPs, depths 2-4, all levels",
        worst, time.time() - t0,
    )


def check_chain_rows(n_instances: int = 200, seed: int = 4) -> CheckResult:
    t0 = time.time()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        depth = int(rng.integers(1, 5))
        model = random_micro_model(rng)
        config = random_micro_config(rng, model, depth)
        params = random_params(rng, config)
        chain = oracle.build_chain(model, config, params)
        rows = chain.kernel.sum(axis=1)
        worst = max(worst, float(np.abs(rows - 1.0).max()))
    passed = worst <= 1e-12
    return CheckResult(
        "chain_rows", passed,
        f"max |row sum - 1| = {worst:.2e} over {n_instances} random chains, "
        f"tolerance 1e-12", worst, time.time() - t0,
    )


def check_kstep(seed: int = 5, k_max: int = 5) -> CheckResult:
    """Matrix powers of the discounted kernel equal the step recursion, and
    direct prefix kernels equal marginalized full-stack kernels.

    The printed form of the prefix-transition bracket sums its "higher
    levels" case to level - 2 and its "lower levels" case from level + 1; as
    written those ranges leave the suffix outcome that resamples exactly the
    levels below the prefix unassigned, so the construction here pins the
    lower-only case to start at the prefix boundary (total probability is
    then conserved; verified against the marginalized kernel).
    """
    t0 = time.time()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(12):
        depth = int(rng.integers(2, 5))
        model = random_micro_model(rng)
        config = random_micro_config(rng, model, depth)
        params = random_params(rng, config)
        chain = oracle.build_chain(model, config, params)
        pg = chain.discounted_kernel
        recursive = pg.copy()
        for k in range(2, k_max + 1):
            recursive = pg @ recursive
            direct = np.linalg.matrix_power(pg, k)
            worst = max(worst, float(np.abs(recursive - direct).max()))
        for level in range(0, depth):
            direct_prefix = oracle.prefix_kernel(chain, level)
            marg = chain.kernel @ oracle.prefix_marginalizer(chain, level)
            worst = max(worst, float(np.abs(direct_prefix - marg).max()))
    passed = worst <= 1e-12
    return CheckResult(
        "kstep_recursion", passed,
        f"max deviation {worst:.2e} over matrix powers k<=5 and prefix "
        f"kernels, tolerance 1e-12", worst, time.time() - t0,
    )


def check_n1_reduction(steps: int = 400, seed: int = 6) -> CheckResult:
    """Depth-1 learner equals a directly coded one-step actor-critic."""
    t0 = time.time()
    config = HierarchyConfig(
        depth=1, options_per_level=(), num_actions=2, num_states=12,
        gamma=0.99, temperature_per_level=(0.1,), lr_critic=0.25,
        lr_policy=0.25, top_policy_mode=TopPolicy.POLICY_GRADIENT,
    )
    learner = Learner(config, seed=seed)
    env = StochasticDP()
    # Independent actor-critic trace, written from the textbook equations.
    import math as _math

    ref_rng = TraceRng(seed)
    q = [[0.0, 0.0] for _ in range(12)]
    th = [[0.0, 0.0] for _ in range(12)]
    ref_env = StochasticDP()

    def ref_probs(s):
        scaled = [x / 0.1 for x in th[s]]
        m = max(scaled[0], scaled[1])
        e = [_math.exp(x - m) for x in scaled]
        z = e[0] + e[1]
        return [e[0] / z, e[1] / z]

    done_steps = 0
    state = ref_env.reset(ref_rng)
    while done_steps < steps:
        probs = ref_probs(state)
        a = ref_rng.categorical(probs)
        s2, r, done = ref_env.step(a, ref_rng)
        if done:
            target = r
        else:
            p2 = ref_probs(s2)
            target = r + 0.99 * (p2[0] * q[s2][0] + p2[1] * q[s2][1])
        q[state][a] += 0.25 * (target - q[state][a])
        probs = ref_probs(state)
        coef = 0.25 * q[state][a] / 0.1
        for i in range(2):
            th[state][i] += coef * ((1.0 if i == a else 0.0) - probs[i])
        state = s2 if not done else ref_env.reset(ref_rng)
        done_steps += 1

    # General learner over the same number of steps.
    taken = 0
    while taken < steps:
        state_l = env.reset(learner.rng)
        learner.select_initial_stack(state_l)
        done = False
        while not done and taken < steps:
            a = learner.select_action(state_l)
            s2, r, done = env.step(a, learner.rng)
            from .learn import StepRecord

            learner.learn_step(StepRecord(state_l, (), a, r, s2, done))
            state_l = s2
            taken += 1

    ok = learner.critics.q_u[0].tolist() == q and (
        learner.params.policy_logits[0].tolist() == th
    )
    return CheckResult(
        "n1_reduction", ok,
        "depth-1 learner tables bit-identical to a direct actor-critic "
        f"trace over {steps} steps" if ok else "tables diverged",
        0.0 if ok else 1.0, time.time() - t0,
    )


def check_n2_reduction(seed: int = 7, episodes: int = 150) -> CheckResult:
    """Depth-2 learner is bit-identical to the stand-alone option-critic."""
    t0 = time.time()
    for env_name, episodes_here in (("stochastic_dp", episodes),
                                    ("four_rooms", 40)):
        if env_name == "stochastic_dp":
            config = HierarchyConfig(
                depth=2, options_per_level=(4,), num_actions=2,
                num_states=12, gamma=0.99, temperature_per_level=(0.1, 0.1),
                lr_critic=0.5, lr_policy=0.1, lr_termination=0.01,
                epsilon=0.1, eta=0.003, critic_init=0.5,
            )
            env_a, env_b = StochasticDP(), StochasticDP()
        else:
            config = HierarchyConfig(
                depth=2, options_per_level=(4,), num_actions=4,
                num_states=104, gamma=0.99, temperature_per_level=(1.0, 1.0),
                lr_critic=0.5, lr_policy=0.5, lr_termination=0.25,
                epsilon=0.1, eta=0.01, use_advantage_baseline=True,
            )
            env_a, env_b = FourRooms(), FourRooms()
        learner = Learner(config, seed=seed)
        reference = OptionCritic(
            num_states=config.num_states, num_actions=config.num_actions,
            num_options=4, gamma=config.gamma, lr_critic=config.lr_critic,
            lr_policy=config.lr_policy, lr_termination=config.lr_termination,
            epsilon=config.epsilon, temperature=config.temperature_per_level[1],
            eta=config.eta, use_baseline=config.use_advantage_baseline,
            critic_init=config.critic_init, seed=seed,
        )
        for _ in range(episodes_here):
            log = learner.run_episode(env_a)
            total, steps = reference.run_episode(env_b)
            if (log.total_reward, log.steps) != (total, steps):
                return CheckResult(
                    "n2_reduction", False,
                    f"trace diverged on {env_name}", 1.0, time.time() - t0,
                )
        crit = learner.critics
        par = learner.params
        same = (
            crit.q_u[0].tolist() == reference.q_option
            and crit.q_u[1].tolist() == reference.q_action
            and par.policy_logits[1].tolist() == reference.theta
            and par.termination_logits[0].tolist() == reference.phi
        )
        if not same:
            return CheckResult(
                "n2_reduction", False,
                f"tables diverged on {env_name}", 1.0, time.time() - t0,
            )
    return CheckResult(
        "n2_reduction", True,
        "depth-2 learner bit-identical to the stand-alone option-critic on "
        "both environments", 0.0, time.time() - t0,
    )


def check_monte_carlo(n_episodes: int = 1_000_000, seed: int = 8,
                      n_models: int = 5) -> CheckResult:
    """Exact chain values vs simulated returns, three standard errors.

    Models use state-only rewards so the per-episode simulated return is the
    realized discounted return.
    """
    t0 = time.time()
    rng = np.random.default_rng(seed)
    worst = 0.0
    detail = []
    for i in range(n_models):
        depth = 2 if i % 2 == 0 else 3
        model = random_micro_model(rng, state_rewards=True)
        gamma = 0.8 if i % 2 == 0 else 0.85
        config = random_micro_config(rng, model, depth, gamma=gamma)
        params = random_params(rng, config)
        chain = oracle.build_chain(model, config, params)
        vals = oracle.exact_values(chain, config, params)
        horizon = int(np.ceil(np.log(1e-12) / np.log(gamma))) + 4
        returns = oracle.simulate_chain_returns(
            chain, n_episodes, horizon, seed=seed + 100 + i
        )
        se = float(returns.std(ddof=1) / np.sqrt(n_episodes))
        gap = abs(float(returns.mean()) - vals.rho)
        ratio = gap / se if se > 0 else 0.0
        worst = max(worst, ratio)
        detail.append(f"{ratio:.2f}")
    passed = worst <= 3.0
    return CheckResult(
        "monte_carlo", passed,
        f"|mc - exact| / SE per model: {', '.join(detail)} "
        f"({n_episodes} episodes each, bound 3.0)",
        worst, time.time() - t0,
    )


def run_all(quick: bool = False) -> list[CheckResult]:
    """Run the whole suite; ``quick`` shrinks the statistical checks."""
    results = [
        check_partition(200 if quick else 1000),
        check_enumeration(200 if quick else 1000),
        check_u_consistency(10 if quick else 40),
        check_theorem("policy", 12 if quick else 50),
        check_theorem("termination", 12 if quick else 50),
        check_chain_rows(40 if quick else 200),
        check_kstep(),
        check_n1_reduction(),
        check_n2_reduction(episodes=40 if quick else 150),
        check_monte_carlo(n_episodes=100_000 if quick else 1_000_000),
    ]
    return results


def format_report(results: list[CheckResult]) -> str:
    lines = ["verification report", "==================="]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"[{status}] {r.name:<16} {r.detail} ({r.seconds:.1f}s)")
    lines.append("")
    note = (
        "note: the printed prefix-transition bracket leaves the suffix "
        "outcome at the prefix boundary unassigned between its lower-only "
        "(from level + 1) and higher (to level - 2) cases; the kernels here "
        "assign it to the lower-only case, which conserves total "
        "probability (see kstep_recursion)."
    )
    lines.append(note)
    return "\n".join(lines) + "\n"


def residual_csv(results: list[CheckResult]) -> str:
    lines = ["check,passed,worst,seconds"]
    for r in results:
        lines.append(f"{r.name},{int(r.passed)},{r.worst!r},{r.seconds:.3f}")
    return "\n".join(lines) + "\n"
