"""Stand-alone two-level option-critic, written directly from its equations.

This is a deliberate re-implementation of the depth-2 special case --
epsilon-greedy policy over options with intra-option Q-learning, softmax
intra-option policies, sigmoid terminations -- kept free of the N-level
machinery.  The depth-2 reduction check drives this learner and the general
one with the same seed and asserts bit-identical tables and traces.
"""

from __future__ import annotations

import math

from .rng import TraceRng


def _softmax(logits, temperature):
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


def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _egreedy_probs(values, eps):
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


class OptionCritic:
    """Tabular option-critic with an epsilon-greedy policy over options."""

    def __init__(self, num_states, num_actions, num_options, gamma,
                 lr_critic, lr_policy, lr_termination, epsilon, temperature,
                 eta=0.0, use_baseline=False, critic_init=0.0, seed=0,
                 rng=None):
        self.ns, self.na, self.no = num_states, num_actions, num_options
        self.gamma = gamma
        self.lr_critic = lr_critic
        self.lr_policy = lr_policy
        self.lr_termination = lr_termination
        self.epsilon = epsilon
        self.temperature = temperature
        self.eta = eta
        self.use_baseline = use_baseline
        self.rng = rng if rng is not None else TraceRng(seed)
        self.q_option = [
            [critic_init] * num_options for _ in range(num_states)
        ]
        self.q_action = [
            [[critic_init] * num_actions for _ in range(num_options)]
            for _ in range(num_states)
        ]
        self.theta = [
            [[0.0] * num_actions for _ in range(num_options)]
            for _ in range(num_states)
        ]
        self.phi = [[0.0] * num_options for _ in range(num_states)]
        self.option = 0

    def _pick_option(self, state):
        return self.rng.epsilon_greedy(self.q_option[state], self.epsilon)

    def _v(self, state):
        probs = _egreedy_probs(self.q_option[state], self.epsilon)
        acc = 0.0
        for i in range(self.no):
            acc += probs[i] * self.q_option[state][i]
        return acc

    def _q_omega(self, state, option):
        probs = _softmax(self.theta[state][option], self.temperature)
        row = self.q_action[state][option]
        acc = 0.0
        for i in range(self.na):
            acc += probs[i] * row[i]
        return acc

    def start_episode(self, state):
        self.option = self._pick_option(state)

    def act(self, state):
        probs = _softmax(self.theta[state][self.option], self.temperature)
        return self.rng.categorical(probs)

    def update(self, state, action, reward, next_state, done):
        """One option-critic update; returns (terminated, switched)."""
        o = self.option
        # target through the arrival value
        if done:
            target = reward
        else:
            beta = _sigmoid(self.phi[next_state][o])
            u = (1.0 - beta) * self._q_omega(next_state, o)
            u += beta * self._v(next_state)
            target = reward + self.gamma * u
        # critics
        self.q_option[state][o] += self.lr_critic * (
            target - self.q_option[state][o]
        )
        self.q_action[state][o][action] += self.lr_critic * (
            target - self.q_action[state][o][action]
        )
        # intra-option policy
        scale = self.q_action[state][o][action]
        if self.use_baseline:
            scale -= self._q_omega(state, o)
        probs = _softmax(self.theta[state][o], self.temperature)
        coef = self.lr_policy * scale / self.temperature
        for i in range(self.na):
            ind = 1.0 if i == action else 0.0
            self.theta[state][o][i] += coef * (ind - probs[i])
        # termination
        adv = self._q_omega(next_state, o)
        adv -= 1.0 * self._v(next_state)
        beta = _sigmoid(self.phi[next_state][o])
        self.phi[next_state][o] -= (
            self.lr_termination * beta * (1.0 - beta) * (adv + self.eta)
        )
        # option termination and reselection
        if done:
            return (), ()
        beta = _sigmoid(self.phi[next_state][o])
        if self.rng.uniform() < beta:
            new = self._pick_option(next_state)
            switched = (1,) if new != o else ()
            self.option = new
            return (1,), switched
        return (), ()

    def run_episode(self, env, step_cap=10_000):
        state = env.reset(self.rng)
        self.start_episode(state)
        total = 0.0
        steps = 0
        done = False
        while steps < step_cap and not done:
            action = self.act(state)
            next_state, reward, done = env.step(action, self.rng)
            self.update(state, action, reward, next_state, done)
            total += reward
            state = next_state
            steps += 1
        return total, steps
