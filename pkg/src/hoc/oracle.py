"""Brute-force verification oracles on finite models.

Everything here is independent of the learning loop: exact values come from
dense linear algebra on the augmented Markov chain over (state, option
stack) tuples, and both gradient theorems are checked against central finite
differences of the exact discounted return.

The chain kernel composes, per step: the primitive-action mixture, the
environment transition, and the bottom-up termination/resampling of the
stack at the arrival state.  Its linear fixed point gives the full-stack
values; per-level Q tables are their policy marginals, which is the unique
assignment consistent with the value recursions at every level.

The analytic gradient builders deliberately express the theorems in their
stated shapes -- discounted occupancy times policy score times the level's Q
table for the policy theorem; occupancy times the termination gate times the
sigmoid derivative times the generalized advantage for the termination
theorem -- with the occupancy of the *decision events* (a level is only
re-chosen in outcomes where every deeper level terminated, and a termination
function is only consulted at arrival).  Finite differences then provide the
independent ground truth.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import core
from .core import CriticSet, HierarchyConfig, ParameterSet, TopPolicy
from .envs import TabularModel


class ContractionError(ValueError):
    """Discount outside [0, 1): the fixed-point operator is not a contraction."""


def policy_tables(
    config: HierarchyConfig,
    params: ParameterSet,
    critics: Optional[CriticSet] = None,
) -> list[np.ndarray]:
    """Dense per-level policy probability tables (level 1 honours the mode)."""
    out = []
    for l in range(1, config.depth + 1):
        tau = config.temperature_per_level[l - 1]
        logits = params.policy_logits[l - 1] / tau
        logits = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(logits)
        out.append(e / e.sum(axis=-1, keepdims=True))
    if config.top_policy_mode is TopPolicy.EPSILON_GREEDY and config.depth > 1:
        if critics is None:
            raise ValueError("epsilon-greedy top level needs the critic")
        pi1 = np.stack(
            [
                core.epsilon_greedy_probs(critics.q_u[0][s], config.epsilon)
                for s in range(config.num_states)
            ]
        )
        out[0] = pi1
    return out


def termination_tables(
    config: HierarchyConfig, params: ParameterSet
) -> list[np.ndarray]:
    """Dense per-level termination probability tables."""
    return [
        1.0 / (1.0 + np.exp(-params.termination_logits[l - 1]))
        for l in range(1, config.depth)
    ]


def _suffix_probs(betas: np.ndarray) -> np.ndarray:
    """Probability of each termination suffix under bottom-up gating.

    Entry 0 is the empty suffix (nothing terminates); entry q (1-based) is
    the suffix {q..N-1}.  Length N.
    """
    n = len(betas)
    out = np.zeros(n + 1)
    if n == 0:
        out[0] = 1.0
        return out
    out[0] = 1.0 - betas[n - 1]
    tail = 1.0
    for q in range(n, 0, -1):
        tail *= betas[q - 1]
        out[q] = tail * (1.0 - betas[q - 2]) if q >= 2 else tail
    return out


@dataclass
class AugmentedChain:
    """The Markov chain over (state, full option stack) tuples."""

    config: HierarchyConfig
    model: TabularModel
    stacks: list[tuple[int, ...]]
    kernel: np.ndarray
    reward: np.ndarray
    pi: list[np.ndarray]
    beta: list[np.ndarray]
    stack_index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.stack_index:
            self.stack_index = {u: i for i, u in enumerate(self.stacks)}

    @property
    def num_stacks(self) -> int:
        return len(self.stacks)

    @property
    def size(self) -> int:
        return self.kernel.shape[0]

    @property
    def discounted_kernel(self) -> np.ndarray:
        return self.config.gamma * self.kernel

    def y_index(self, state: int, stack: tuple[int, ...]) -> int:
        return state * self.num_stacks + self.stack_index[tuple(stack)]

    def suffix_probs_at(self, state: int, stack: tuple[int, ...]) -> np.ndarray:
        betas = np.array(
            [
                self.beta[j - 1][(state,) + tuple(stack[:j])]
                for j in range(1, self.config.depth)
            ]
        )
        return _suffix_probs(betas)


def build_chain(
    model: TabularModel,
    config: HierarchyConfig,
    params: ParameterSet,
    critics: Optional[CriticSet] = None,
) -> AugmentedChain:
    """Assemble the exact one-step kernel of the augmented process.

    Terminal model states are absorbing (stack kept, zero reward), matching
    the episodic convention that values vanish there.
    """
    if model.num_states != config.num_states:
        raise ValueError("model and config disagree on the state count")
    if model.num_actions != config.num_actions:
        raise ValueError("model and config disagree on the action count")
    pi = policy_tables(config, params, critics)
    beta = termination_tables(config, params)
    stacks = [
        tuple(u) for u in itertools.product(*map(range, config.options_per_level))
    ]
    k = len(stacks)
    s_count = config.num_states
    stack_index = {u: i for i, u in enumerate(stacks)}

    # refresh[s', ui, uj]: stack-transition probability on arriving at s'.
    refresh = np.zeros((s_count, k, k))
    n = config.depth - 1
    for s2 in range(s_count):
        for ui, u in enumerate(stacks):
            betas = np.array(
                [beta[j - 1][(s2,) + u[:j]] for j in range(1, n + 1)]
            )
            suf = _suffix_probs(betas)
            refresh[s2, ui, ui] += suf[0]
            for q in range(1, n + 1):
                if suf[q] == 0.0:
                    continue
                ranges = [range(c) for c in config.options_per_level[q - 1:]]
                for completion in itertools.product(*ranges):
                    u2 = u[: q - 1] + completion
                    w = suf[q]
                    for p in range(q, n + 1):
                        w *= pi[p - 1][(s2,) + u2[: p - 1] + (u2[p - 1],)]
                    refresh[s2, ui, stack_index[u2]] += w

    # env[s, ui, s']: action-marginal environment step under the stack.
    env = np.zeros((s_count, k, s_count))
    reward = np.zeros((s_count, k))
    for s in range(s_count):
        for ui, u in enumerate(stacks):
            pa = pi[config.depth - 1][(s,) + u]
            env[s, ui] = pa @ model.transitions[s]
            reward[s, ui] = float(pa @ model.rewards[s])

    kernel = np.einsum("iks,skj->iksj", env, refresh).reshape(
        s_count * k, s_count * k
    )
    rvec = reward.reshape(-1)
    for s in np.flatnonzero(model.terminal):
        for ui in range(k):
            y = s * k + ui
            kernel[y, :] = 0.0
            kernel[y, y] = 1.0
            rvec[y] = 0.0
    return AugmentedChain(config, model, stacks, kernel, rvec, pi, beta)


def prefix_kernel(chain: AugmentedChain, level: int) -> np.ndarray:
    """One-step transition to (s', o'^{1:level}) prefixes, built term by term.

    This assembles the four-case bracket (none terminate / only lower
    terminate / all terminate / some relevant higher terminate) directly; the
    case index ranges are pinned so the cases partition the suffix outcomes
    (see the verification report note on the printed ranges).  Marginalizing
    the full-stack kernel gives the same matrix; the pair is a cross-check.
    """
    config = chain.config
    n = config.depth - 1
    if not 0 <= level <= n:
        raise core.LevelError(f"prefix level {level} outside [0, {n}]")
    prefixes = [
        tuple(u)
        for u in itertools.product(*map(range, config.options_per_level[:level]))
    ]
    pidx = {u: i for i, u in enumerate(prefixes)}
    s_count = config.num_states
    out = np.zeros((chain.size, s_count * len(prefixes)))
    for s in range(s_count):
        for ui, u in enumerate(chain.stacks):
            y = s * chain.num_stacks + ui
            if chain.model.terminal[s]:
                out[y, s * len(prefixes) + pidx[u[:level]]] = 1.0
                continue
            pa = chain.pi[config.depth - 1][(s,) + u]
            for s2 in range(s_count):
                p_env = float(pa @ chain.model.transitions[s, :, s2])
                if p_env == 0.0:
                    continue
                betas = np.array(
                    [chain.beta[j - 1][(s2,) + u[:j]] for j in range(1, n + 1)]
                )
                suf = _suffix_probs(betas)
                col = lambda pre: s2 * len(prefixes) + pidx[pre]
                # none terminate: prefix kept.
                out[y, col(u[:level])] += p_env * suf[0]
                for q in range(1, n + 1):
                    if suf[q] == 0.0:
                        continue
                    if q > level:
                        # only lower levels terminate: prefix kept.
                        out[y, col(u[:level])] += p_env * suf[q]
                    else:
                        # all (q == 1) or some relevant higher levels
                        # terminate: levels q..level are freshly sampled.
                        ranges = [
                            range(c)
                            for c in config.options_per_level[q - 1 : level]
                        ]
                        for completion in itertools.product(*ranges):
                            pre2 = u[: q - 1] + completion
                            w = p_env * suf[q]
                            for p in range(q, level + 1):
                                w *= chain.pi[p - 1][
                                    (s2,) + pre2[: p - 1] + (pre2[p - 1],)
                                ]
                            out[y, col(pre2)] += w
    return out


def prefix_marginalizer(chain: AugmentedChain, level: int) -> np.ndarray:
    """Matrix mapping full-stack distributions to prefix distributions."""
    config = chain.config
    prefixes = [
        tuple(u)
        for u in itertools.product(*map(range, config.options_per_level[:level]))
    ]
    pidx = {u: i for i, u in enumerate(prefixes)}
    out = np.zeros((chain.size, config.num_states * len(prefixes)))
    for s in range(config.num_states):
        for ui, u in enumerate(chain.stacks):
            out[s * chain.num_stacks + ui, s * len(prefixes) + pidx[u[:level]]] = 1.0
    return out


@dataclass
class ExactValues:
    """Exact value tables of a frozen agent on a finite model."""

    chain: AugmentedChain
    full_values: np.ndarray          # W(s, u) flattened over augmented states
    q_marginal: list[np.ndarray]     # depth d = 0..N-1 prefix marginals
    q_level_n: np.ndarray            # Q_U(s, o^{1:N-1}, a)
    arrival: np.ndarray              # U(s, u) at level N-1, shape (S, K)
    residual: float
    start_stack: tuple[int, ...]

    @property
    def v_omega(self) -> np.ndarray:
        return self.q_marginal[0]

    @property
    def rho(self) -> float:
        y0 = self.chain.y_index(self.chain.model.start, self.start_stack)
        return float(self.full_values[y0])

    def critic_set(self) -> CriticSet:
        """The exact Q_U fixed point packaged as a CriticSet."""
        n = self.chain.config.depth
        tables = [self.q_marginal[l] for l in range(1, n)]
        tables.append(self.q_level_n)
        return CriticSet(q_u=[t.copy() for t in tables])

    def arrival_values(self, level: int) -> np.ndarray:
        """U(s, o^{1:level}) regrouped at an arbitrary level, shape (S, K)."""
        chain = self.chain
        config = chain.config
        n = config.depth - 1
        out = np.zeros((config.num_states, chain.num_stacks))
        for s in range(config.num_states):
            for ui, u in enumerate(chain.stacks):
                suf = chain.suffix_probs_at(s, u)
                total = suf[0] * self.q_marginal[n][(s,) + u]
                for q in range(1, n + 1):
                    if q > level:
                        cont = self.q_marginal[level][(s,) + u[:level]]
                    else:
                        cont = self.q_marginal[q - 1][(s,) + u[: q - 1]]
                    total += suf[q] * cont
                out[s, ui] = total
        return out


def exact_values(
    chain: AugmentedChain,
    config: HierarchyConfig,
    params: ParameterSet,
    start_stack: Optional[tuple[int, ...]] = None,
) -> ExactValues:
    """Solve the coupled value recursions exactly by dense linear algebra."""
    if not 0.0 <= config.gamma < 1.0:
        raise ContractionError(f"gamma {config.gamma} outside [0, 1)")
    m = chain.size
    w = np.linalg.solve(
        np.eye(m) - config.gamma * chain.kernel, chain.reward
    )
    shape = (config.num_states,) + config.options_per_level
    q_marg: list[np.ndarray] = [np.zeros(())] * config.depth
    q_marg[config.depth - 1] = w.reshape(shape)
    for d in range(config.depth - 2, -1, -1):
        q_marg[d] = (chain.pi[d] * q_marg[d + 1]).sum(axis=-1)

    n = config.depth - 1
    arrival = np.zeros((config.num_states, chain.num_stacks))
    for s in range(config.num_states):
        for ui, u in enumerate(chain.stacks):
            suf = chain.suffix_probs_at(s, u)
            total = suf[0] * q_marg[n][(s,) + u]
            for q in range(1, n + 1):
                total += suf[q] * q_marg[q - 1][(s,) + u[: q - 1]]
            arrival[s, ui] = total

    q_n = np.einsum(
        "saz,zk->ska", chain.model.transitions, arrival
    ) * config.gamma
    q_n += chain.model.rewards[:, None, :]
    q_n[chain.model.terminal, :, :] = 0.0
    q_n = q_n.reshape(
        (config.num_states,) + config.options_per_level + (config.num_actions,)
    )

    # Fixed-point residual: the policy mixture of the level-N table must
    # reproduce the full-stack values.
    recon = (chain.pi[config.depth - 1] * q_n).sum(axis=-1).reshape(-1)
    residual = float(np.abs(recon - w).max())

    if start_stack is None:
        start_stack = (0,) * n
    return ExactValues(
        chain=chain,
        full_values=w,
        q_marginal=q_marg,
        q_level_n=q_n,
        arrival=arrival,
        residual=residual,
        start_stack=tuple(start_stack),
    )


def discounted_occupancy(chain: AugmentedChain, y0: int) -> np.ndarray:
    """mu(y | y0) = sum_t gamma^t P(y_t = y): start row of the resolvent."""
    m = chain.size
    e = np.zeros(m)
    e[y0] = 1.0
    return np.linalg.solve(
        (np.eye(m) - chain.config.gamma * chain.kernel).T, e
    )


def termination_gate(chain: AugmentedChain, state: int,
                     stack: tuple[int, ...], level: int) -> float:
    """Product of the deeper levels' termination probabilities at arrival.

    The likelihood that the level's termination function is consulted at all:
    beta^l is only assessed when levels l+1..N-1 all terminated.
    """
    gate = 1.0
    for i in range(level + 1, chain.config.depth):
        gate *= chain.beta[i - 1][(state,) + stack[:i]]
    return gate


def _softmax_score_row(probs: np.ndarray, qrow: np.ndarray, tau: float
                       ) -> np.ndarray:
    """sum_o dpi(o)/dlogit_k * q(o) for a tabular softmax row."""
    mean = float(probs @ qrow)
    return probs * (qrow - mean) / tau


def _rho_of(model: TabularModel, config: HierarchyConfig,
            params: ParameterSet, start_stack: tuple[int, ...]) -> float:
    chain = build_chain(model, config, params)
    return exact_values(chain, config, params, start_stack).rho


def fd_return_gradient(
    model: TabularModel,
    config: HierarchyConfig,
    params: ParameterSet,
    kind: str,
    level: int,
    h: float = 1e-5,
    start_stack: Optional[tuple[int, ...]] = None,
) -> np.ndarray:
    """Central finite differences of the exact return w.r.t. one logit table.

    ``kind`` is "policy" or "termination".  This is the ground-truth side of
    the theorem checks: it never touches the analytic gradient expressions.
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError(f"finite-difference step {h} outside [1e-6, 1e-3]")
    if start_stack is None:
        start_stack = (0,) * (config.depth - 1)
    work = params.copy()
    if kind == "policy":
        table = work.policy_logits[level - 1]
    elif kind == "termination":
        table = work.termination_logits[level - 1]
    else:
        raise ValueError(f"unknown table kind {kind!r}")
    grad = np.zeros_like(table)
    for idx in np.ndindex(table.shape):
        table[idx] += h
        hi = _rho_of(model, config, work, start_stack)
        table[idx] -= 2.0 * h
        lo = _rho_of(model, config, work, start_stack)
        table[idx] += h
        grad[idx] = (hi - lo) / (2.0 * h)
    return grad


def analytic_policy_gradient(
    model: TabularModel,
    config: HierarchyConfig,
    params: ParameterSet,
    level: int,
    start_stack: Optional[tuple[int, ...]] = None,
) -> np.ndarray:
    """The intra-option policy gradient theorem, assembled exactly.

    Occupancy-weighted policy score times the level's Q table, summed over
    the events in which the level's policy is actually consulted: every step
    for the primitive level, and otherwise the arrival outcomes in which all
    deeper levels terminated (so levels q..l are freshly sampled, q <= l).
    """
    if start_stack is None:
        start_stack = (0,) * (config.depth - 1)
    chain = build_chain(model, config, params)
    vals = exact_values(chain, config, params, start_stack)
    mu = discounted_occupancy(chain, chain.y_index(model.start, start_stack))
    tau = config.temperature_per_level[level - 1]
    grad = np.zeros(config.policy_table_shape(level))
    n = config.depth

    if level == n:
        for s in range(config.num_states):
            if model.terminal[s]:
                continue
            for ui, u in enumerate(chain.stacks):
                w = mu[s * chain.num_stacks + ui]
                if w == 0.0:
                    continue
                ctx = (s,) + u
                grad[ctx] += w * _softmax_score_row(
                    chain.pi[n - 1][ctx], vals.q_level_n[ctx], tau
                )
        return grad

    gamma = config.gamma
    q_table = vals.q_marginal[level]
    for s in range(config.num_states):
        if model.terminal[s]:
            continue
        for ui, u in enumerate(chain.stacks):
            w = mu[s * chain.num_stacks + ui]
            if w == 0.0:
                continue
            pa = chain.pi[n - 1][(s,) + u]
            pstate = pa @ model.transitions[s]  # P(s' | s, stack)
            for s2 in np.flatnonzero(pstate):
                base = gamma * w * pstate[s2]
                suf = chain.suffix_probs_at(s2, u)
                for q in range(1, level + 1):
                    if suf[q] == 0.0:
                        continue
                    ranges = [
                        range(c)
                        for c in config.options_per_level[q - 1 : level - 1]
                    ]
                    for completion in itertools.product(*ranges):
                        pre = u[: q - 1] + completion
                        wq = base * suf[q]
                        for p in range(q, level):
                            wq *= chain.pi[p - 1][
                                (s2,) + pre[: p - 1] + (pre[p - 1],)
                            ]
                        ctx = (s2,) + pre
                        grad[ctx] += wq * _softmax_score_row(
                            chain.pi[level - 1][ctx], q_table[ctx], tau
                        )
    return grad


def analytic_termination_gradient(
    model: TabularModel,
    config: HierarchyConfig,
    params: ParameterSet,
    level: int,
    start_stack: Optional[tuple[int, ...]] = None,
) -> np.ndarray:
    """The termination gradient theorem, assembled exactly.

    Minus the arrival-state occupancy times the gate (product of the deeper
    levels' termination probabilities) times the sigmoid derivative times the
    generalized advantage, evaluated with the exact critic.  The advantage is
    computed through :func:`hoc.core.advantage`, so this side of the check
    exercises the library's own advantage code against finite differences.
    """
    if start_stack is None:
        start_stack = (0,) * (config.depth - 1)
    chain = build_chain(model, config, params)
    vals = exact_values(chain, config, params, start_stack)
    critics = vals.critic_set()
    mu = discounted_occupancy(chain, chain.y_index(model.start, start_stack))
    grad = np.zeros(config.termination_table_shape(level))
    gamma = config.gamma
    n = config.depth

    adv_cache: dict[tuple, float] = {}
    for s in range(config.num_states):
        if model.terminal[s]:
            continue
        for ui, u in enumerate(chain.stacks):
            w = mu[s * chain.num_stacks + ui]
            if w == 0.0:
                continue
            pa = chain.pi[n - 1][(s,) + u]
            pstate = pa @ model.transitions[s]
            for s2 in np.flatnonzero(pstate):
                base = gamma * w * pstate[s2]
                gate = termination_gate(chain, int(s2), u, level)
                b = chain.beta[level - 1][(s2,) + u[:level]]
                key = (s2,) + u[:level]
                if key not in adv_cache:
                    adv_cache[key] = core.advantage(
                        config, params, critics, s2, u[:level]
                    )
                grad[key] -= base * gate * b * (1.0 - b) * adv_cache[key]
    return grad


def value_iteration(
    model: TabularModel, gamma: float, tol: float = 1e-10, max_iter: int = 1_000_000
) -> tuple[np.ndarray, np.ndarray, float]:
    """Optimal values and greedy policy for a finite model.

    Iterates to sup-norm convergence below ``tol``, then sharpens the result
    with an exact linear solve under the greedy policy.  Returns
    (optimal values, greedy policy, optimal value of the start state).
    """
    if not 0.0 <= gamma < 1.0:
        raise ContractionError(f"gamma {gamma} outside [0, 1)")
    p, r = model.transitions, model.rewards
    v = np.zeros(model.num_states)
    live = ~model.terminal
    for _ in range(max_iter):
        q = r + gamma * (p @ v)
        v_new = np.where(live, q.max(axis=1), 0.0)
        if np.abs(v_new - v).max() < tol:
            v = v_new
            break
        v = v_new
    policy = (r + gamma * (p @ v)).argmax(axis=1)
    # Exact policy evaluation removes the remaining iteration error.
    pp = p[np.arange(model.num_states), policy]
    rr = r[np.arange(model.num_states), policy]
    pp = pp.copy()
    rr = rr.copy()
    pp[model.terminal] = 0.0
    rr[model.terminal] = 0.0
    v = np.linalg.solve(np.eye(model.num_states) - gamma * pp, rr)
    return v, policy, float(v[model.start])


def simulate_chain_returns(
    chain: AugmentedChain,
    n_episodes: int,
    horizon: int,
    seed: int,
    start_stack: Optional[tuple[int, ...]] = None,
) -> np.ndarray:
    """Per-episode discounted returns from vectorized chain simulation.

    Trajectories are sampled from the one-step kernel; the per-step reward is
    the chain's per-augmented-state reward, so for models whose reward does
    not depend on the action this is the realized episode return.  Statistical
    oracle only; uses numpy's bulk generator rather than the trace protocol.
    """
    if start_stack is None:
        start_stack = (0,) * (chain.config.depth - 1)
    rng = np.random.default_rng(seed)
    y0 = chain.y_index(chain.model.start, start_stack)
    cum = np.cumsum(chain.kernel, axis=1)
    y = np.full(n_episodes, y0, dtype=np.int64)
    returns = np.zeros(n_episodes)
    gpow = 1.0
    gamma = chain.config.gamma
    for _ in range(horizon):
        returns += gpow * chain.reward[y]
        u = rng.random(n_episodes)
        y = (cum[y] <= u[:, None]).sum(axis=1)
        np.clip(y, 0, chain.size - 1, out=y)
        gpow *= gamma
    return returns
