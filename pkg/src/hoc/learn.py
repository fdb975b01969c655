"""Online learning loop: option-stack management and the tabular updates.

One :class:`Learner` owns its parameter and critic tables and a private RNG
stream; independent learners can run in parallel with no coordination.  The
per-step update order follows the tabular algorithm literally:

1. one-step target ``r' = r + gamma * U(s', o^{1:N-1})`` (or ``r`` when done),
   computed from the pre-update tables;
2. critic updates at every level toward ``r'``;
3. intra-option policy updates, each scaled by its level's critic entry read
   *after* the critic update (level 1 is skipped under epsilon-greedy mode);
4. termination updates at the arrival state, level 1 upward, reading live
   tables (so a level's advantage sees the shallower levels' fresh logits);
5. bottom-up termination sampling and top-down resampling of terminated
   levels.

The hot path works on nested Python lists with ``math.exp`` so that the
numba-compiled runner in :mod:`hoc.fast` can reproduce it bit for bit;
:attr:`Learner.params` / :attr:`Learner.critics` expose numpy snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import core
from .core import CriticSet, HierarchyConfig, OptionStack, ParameterSet, TopPolicy
from .rng import TraceRng


@dataclass
class StepRecord:
    """One environment transition plus what the learner did with it."""

    state: int
    stack: tuple[int, ...]
    action: int
    reward: float
    next_state: int
    done: bool
    terminated_levels: tuple[int, ...] = ()
    switched_levels: tuple[int, ...] = ()


@dataclass
class EpisodeLog:
    """Per-episode aggregates fed to CSV output and learning curves."""

    total_reward: float
    steps: int
    discounted_return: float
    terminations: list[int]
    switches: list[int]
    truncated: bool
    records: Optional[list[StepRecord]] = None


def _nested_zeros(shape: tuple[int, ...]):
    if len(shape) == 1:
        return [0.0] * shape[0]
    return [_nested_zeros(shape[1:]) for _ in range(shape[0])]


def _to_array(nested) -> np.ndarray:
    return np.array(nested, dtype=float)


def _fill_nested(nested, arr: np.ndarray) -> None:
    if arr.ndim == 1:
        nested[:] = [float(x) for x in arr]
        return
    for i in range(arr.shape[0]):
        _fill_nested(nested[i], arr[i])


class Learner:
    """Tabular hierarchical option-critic learner (one run, one RNG stream)."""

    def __init__(self, config: HierarchyConfig, seed: int = 0,
                 rng: Optional[TraceRng] = None):
        self.config = config
        self.rng = rng if rng is not None else TraceRng(seed)
        n = config.depth
        self._theta = [
            _nested_zeros(config.policy_table_shape(l)) for l in range(1, n + 1)
        ]
        self._phi = [
            _nested_zeros(config.termination_table_shape(l))
            for l in range(1, n)
        ]
        self._q = [
            _nested_zeros(config.critic_table_shape(l)) for l in range(1, n + 1)
        ]
        if config.critic_init:
            self.load(critics=CriticSet.initial(config))
        self.stack: list[int] = [0] * (n - 1)
        self._stack_ready = False

    # -- numpy views -------------------------------------------------------

    @property
    def params(self) -> ParameterSet:
        return ParameterSet(
            policy_logits=[_to_array(t) for t in self._theta],
            termination_logits=[_to_array(t) for t in self._phi],
        )

    @property
    def critics(self) -> CriticSet:
        return CriticSet(q_u=[_to_array(t) for t in self._q])

    @property
    def option_stack(self) -> OptionStack:
        if self._stack_ready:
            return OptionStack(active=list(self.stack))
        return OptionStack.empty(self.config)

    def load(self, params: Optional[ParameterSet] = None,
             critics: Optional[CriticSet] = None) -> None:
        """Overwrite tables from numpy snapshots (tests and warm starts)."""
        if params is not None:
            for dst, src in zip(self._theta, params.policy_logits):
                _fill_nested(dst, np.asarray(src, dtype=float))
            for dst, src in zip(self._phi, params.termination_logits):
                _fill_nested(dst, np.asarray(src, dtype=float))
        if critics is not None:
            for dst, src in zip(self._q, critics.q_u):
                _fill_nested(dst, np.asarray(src, dtype=float))

    # -- table walking (hot path) -------------------------------------------

    def _row(self, tables, level: int, state: int, prefix) -> list:
        row = tables[level - 1][state]
        for o in prefix:
            row = row[o]
        return row

    def _policy_probs(self, level: int, state: int, prefix) -> list[float]:
        cfg = self.config
        if level == 1 and cfg.top_policy_mode is TopPolicy.EPSILON_GREEDY:
            return _egreedy_probs(self._q[0][state], cfg.epsilon)
        logits = self._row(self._theta, level, state, prefix)
        return _softmax(logits, cfg.temperature_per_level[level - 1])

    def _sample_level(self, level: int, state: int, prefix) -> int:
        cfg = self.config
        if level == 1 and cfg.top_policy_mode is TopPolicy.EPSILON_GREEDY:
            return self.rng.epsilon_greedy(self._q[0][state], cfg.epsilon)
        probs = self._policy_probs(level, state, prefix)
        return self.rng.categorical(probs)

    def _beta(self, level: int, state: int, stack) -> float:
        row = self._phi[level - 1][state]
        for o in stack[: level - 1]:
            row = row[o]
        return _sigmoid(row[stack[level - 1]])

    def _q_omega(self, state: int, stack, depth: int) -> float:
        """Policy expectation of the level-(depth+1) critic row."""
        probs = self._policy_probs(depth + 1, state, stack[:depth])
        row = self._row(self._q, depth + 1, state, stack[:depth])
        acc = 0.0
        for i in range(len(row)):
            acc += probs[i] * row[i]
        return acc

    def _arrival_value(self, state: int) -> float:
        """U(state, o^{1:N-1}) under the current stack and tables."""
        n = self.config.depth - 1
        if n == 0:
            return self._q_omega(state, (), 0)
        stack = self.stack
        betas = [self._beta(j, state, stack) for j in range(1, n + 1)]
        u = (1.0 - betas[n - 1]) * self._q_omega(state, stack, n)
        for i in range(1, n):
            w = 1.0 - betas[i - 1]
            for k in range(i + 1, n + 1):
                w *= betas[k - 1]
            u += w * self._q_omega(state, stack, i)
        w_all = 1.0
        for b in betas:
            w_all *= b
        u += w_all * self._q_omega(state, (), 0)
        return u

    def _advantage(self, state: int, depth: int) -> float:
        """A(state, o^{1:depth}) from the live tables."""
        stack = self.stack
        a = self._q_omega(state, stack, depth)
        betas = [self._beta(j, state, stack) for j in range(1, depth)]
        prod_all = 1.0
        for b in betas:
            prod_all *= b
        a -= prod_all * self._q_omega(state, (), 0)
        for i in range(1, depth):
            w = 1.0 - betas[i - 1]
            for k in range(i + 1, depth):
                w *= betas[k - 1]
            a -= w * self._q_omega(state, stack, i)
        return a

    # -- the algorithm -------------------------------------------------------

    def select_initial_stack(self, state: int) -> OptionStack:
        """Fill the stack top-down for a fresh episode."""
        for j in range(1, self.config.depth):
            self.stack[j - 1] = self._sample_level(j, state, self.stack[: j - 1])
        self._stack_ready = True
        return self.option_stack

    def select_action(self, state: int) -> int:
        if self.config.depth > 1 and not self._stack_ready:
            raise core.StackError("stack not selected for this episode")
        return self._sample_level(self.config.depth, state, self.stack)

    def choose_terminated_options(
        self, state: int
    ) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Sample bottom-up terminations at ``state`` and refresh the stack.

        Level N-1 flips its termination coin first; each shallower level is
        consulted only while every deeper level terminated.  Terminated
        levels then resample top-down (level 1 by the top-policy rule).
        Returns (terminated levels ascending, levels whose option changed).
        """
        n = self.config.depth - 1
        stack = self.stack
        k = n
        while k >= 1 and self.rng.bernoulli(self._beta(k, state, stack)):
            k -= 1
        if k == n:
            return (), ()
        terminated = tuple(range(k + 1, n + 1))
        switched = []
        for j in terminated:
            old = stack[j - 1]
            stack[j - 1] = self._sample_level(j, state, stack[: j - 1])
            if stack[j - 1] != old:
                switched.append(j)
        return terminated, tuple(switched)

    def learn_step(self, rec: StepRecord) -> StepRecord:
        """Apply the per-step updates for one transition, then refresh."""
        cfg = self.config
        n = cfg.depth
        if cfg.depth > 1 and not self._stack_ready:
            raise core.StackError("stack not selected for this episode")
        s, a, r, s2 = rec.state, rec.action, rec.reward, rec.next_state
        stack = self.stack

        # (a) one-step target through the arrival value.
        if rec.done:
            target = r
        else:
            target = r + cfg.gamma * self._arrival_value(s2)

        # (b) critic updates at every level.
        for j in range(1, n):
            row = self._row(self._q, j, s, stack[: j - 1])
            o = stack[j - 1]
            row[o] += cfg.lr_critic * (target - row[o])
        row = self._row(self._q, n, s, stack)
        row[a] += cfg.lr_critic * (target - row[a])

        # (c) policy updates, scale read after the critic update.
        first = 2 if cfg.top_policy_mode is TopPolicy.EPSILON_GREEDY else 1
        for j in range(first, n + 1):
            chosen = stack[j - 1] if j < n else a
            qrow = self._row(self._q, j, s, stack[: j - 1])
            scale = qrow[chosen]
            if cfg.use_advantage_baseline:
                scale -= self._q_omega(s, stack, j - 1)
            tau = cfg.temperature_per_level[j - 1]
            probs = _softmax(
                self._row(self._theta, j, s, stack[: j - 1]), tau
            )
            trow = self._row(self._theta, j, s, stack[: j - 1])
            coef = cfg.lr_policy * scale / tau
            for i in range(len(trow)):
                trow[i] += coef * ((1.0 if i == chosen else 0.0) - probs[i])

        # (d) termination updates at the arrival state, level 1 upward.
        for j in range(1, n):
            gate = 1.0
            for i in range(j + 1, n):
                gate *= self._beta(i, s2, stack)
            adv = self._advantage(s2, j)
            beta = self._beta(j, s2, stack)
            parent = self._phi[j - 1][s2]
            for o in stack[: j - 1]:
                parent = parent[o]
            leaf = stack[j - 1]
            parent[leaf] -= (
                cfg.lr_termination * gate * beta * (1.0 - beta) * (adv + cfg.eta)
            )

        # (e) stack refresh at the arrival state.
        if rec.done:
            self._stack_ready = False
        elif n > 1:
            terminated, switched = self.choose_terminated_options(s2)
            rec.terminated_levels = terminated
            rec.switched_levels = switched
        return rec

    def run_episode(self, env, step_cap: int = 10_000,
                    record_steps: bool = False) -> EpisodeLog:
        """Reset the environment, run one episode, learn in place."""
        cfg = self.config
        state = env.reset(self.rng)
        self.select_initial_stack(state)
        n_term = cfg.depth - 1
        terminations = [0] * n_term
        switches = [0] * n_term
        total = 0.0
        disc = 0.0
        gpow = 1.0
        records: Optional[list[StepRecord]] = [] if record_steps else None
        steps = 0
        done = False
        while steps < step_cap and not done:
            action = self.select_action(state)
            next_state, reward, done = env.step(action, self.rng)
            rec = StepRecord(
                state=state,
                stack=tuple(self.stack),
                action=action,
                reward=reward,
                next_state=next_state,
                done=done,
            )
            self.learn_step(rec)
            for j in rec.terminated_levels:
                terminations[j - 1] += 1
            for j in rec.switched_levels:
                switches[j - 1] += 1
            total += reward
            disc += gpow * reward
            gpow *= cfg.gamma
            if records is not None:
                records.append(rec)
            state = next_state
            steps += 1
        self._stack_ready = False
        return EpisodeLog(
            total_reward=total,
            steps=steps,
            discounted_return=disc,
            terminations=terminations,
            switches=switches,
            truncated=not done,
            records=records,
        )


def _softmax(logits, temperature: float) -> list[float]:
    scaled = [x / temperature for x in logits]
    m = scaled[0]
    for x in scaled:
        if x > m:
            m = x
    e = [math.exp(x - m) for x in scaled]
    z = 0.0
    for x in e:
        z += x
    return [x / z for x in e]


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _egreedy_probs(values, eps: float) -> list[float]:
    n = len(values)
    best = values[0]
    for v in values:
        if v > best:
            best = v
    ties = 0
    for v in values:
        if v == best:
            ties += 1
    bonus = (1.0 - eps) / ties
    return [eps / n + (bonus if v == best else 0.0) for v in values]
