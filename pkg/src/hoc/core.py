"""Domain types and the pure value/probability/gradient math of the hierarchy.

An agent of depth ``N`` carries softmax option policies ``pi^1..pi^N``
(level ``N`` selects primitive actions), sigmoid termination functions
``beta^1..beta^{N-1}``, and one critic table per level.  Level indices are
1-based throughout the public API.  Contexts are augmented states: the tuple
``(s, o^1..o^{l-1})`` of environment state plus the active option prefix
above level ``l``.

Nothing in this module owns mutable learning state or touches an
environment; every function is a pure map from explicitly passed tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np


class LevelError(ValueError):
    """A level index outside the range valid for the operation."""


class StackError(ValueError):
    """An option stack that is malformed for the requested operation."""


class TopPolicy(Enum):
    """How the level-1 choice is made while learning."""

    EPSILON_GREEDY = "epsilon_greedy"   # greedy in the level-1 critic
    POLICY_GRADIENT = "policy_gradient"  # sampled from softmax(theta^1)


@dataclass(frozen=True)
class HierarchyConfig:
    """Static shape and hyperparameters of an N-level agent."""

    depth: int
    options_per_level: tuple[int, ...]
    num_actions: int
    num_states: int
    gamma: float = 0.99
    temperature_per_level: tuple[float, ...] = ()
    lr_critic: float = 0.5
    lr_policy: float = 0.5
    lr_termination: float = 0.25
    epsilon: float = 0.1
    eta: float = 0.0
    top_policy_mode: TopPolicy = TopPolicy.EPSILON_GREEDY
    use_advantage_baseline: bool = False
    critic_init: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "options_per_level", tuple(self.options_per_level)
        )
        object.__setattr__(
            self, "temperature_per_level", tuple(self.temperature_per_level)
        )
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if len(self.options_per_level) != self.depth - 1:
            raise ValueError(
                f"options_per_level must list {self.depth - 1} option counts, "
                f"got {len(self.options_per_level)}"
            )
        if any(n <= 0 for n in self.options_per_level):
            raise ValueError("option counts must be positive")
        if self.num_actions <= 0 or self.num_states <= 0:
            raise ValueError("num_actions and num_states must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.temperature_per_level:
            object.__setattr__(
                self, "temperature_per_level", (1.0,) * self.depth
            )
        if len(self.temperature_per_level) != self.depth:
            raise ValueError(
                f"need {self.depth} temperatures, "
                f"got {len(self.temperature_per_level)}"
            )
        if any(t <= 0 for t in self.temperature_per_level):
            raise ValueError("temperatures must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.eta < 0.0:
            raise ValueError("eta must be >= 0")
        for lr in (self.lr_critic, self.lr_policy, self.lr_termination):
            if lr < 0.0:
                raise ValueError("learning rates must be >= 0")

    def choices_at(self, level: int) -> int:
        """Number of choices available at a level (actions at level N)."""
        self._check_level(level, 1, self.depth)
        if level == self.depth:
            return self.num_actions
        return self.options_per_level[level - 1]

    def policy_table_shape(self, level: int) -> tuple[int, ...]:
        self._check_level(level, 1, self.depth)
        return (
            (self.num_states,)
            + self.options_per_level[: level - 1]
            + (self.choices_at(level),)
        )

    def termination_table_shape(self, level: int) -> tuple[int, ...]:
        self._check_level(level, 1, self.depth - 1)
        return (self.num_states,) + self.options_per_level[:level]

    def critic_table_shape(self, level: int) -> tuple[int, ...]:
        # Same layout as the policy table: context prefix, then the choice.
        return self.policy_table_shape(level)

    def _check_level(self, level: int, lo: int, hi: int) -> None:
        if not lo <= level <= hi:
            raise LevelError(f"level {level} outside [{lo}, {hi}]")


@dataclass
class OptionStack:
    """Active options o^1..o^{N-1} plus the primitive action slot.

    Entries are filled top-down: entry ``l`` may be set only when entries
    ``1..l-1`` are set (prefix-filled).  The action slot plays the role of
    o^N.
    """

    active: list[Optional[int]]
    action: Optional[int] = None

    @classmethod
    def empty(cls, config: HierarchyConfig) -> "OptionStack":
        return cls(active=[None] * (config.depth - 1))

    @property
    def set_depth(self) -> int:
        """Number of leading set entries."""
        for i, o in enumerate(self.active):
            if o is None:
                return i
        return len(self.active)

    def prefix(self, depth: Optional[int] = None) -> tuple[int, ...]:
        """The first ``depth`` entries as a tuple (all set entries if None)."""
        d = self.set_depth if depth is None else depth
        if d > self.set_depth:
            raise StackError(f"stack has {self.set_depth} set entries, need {d}")
        return tuple(self.active[:d])  # type: ignore[arg-type]

    def validate(self) -> None:
        seen_unset = False
        for o in self.active:
            if o is None:
                seen_unset = True
            elif seen_unset:
                raise StackError("stack is not prefix-filled")


def _as_prefix(stack) -> tuple[int, ...]:
    if isinstance(stack, OptionStack):
        stack.validate()
        return stack.prefix()
    return tuple(stack)


@dataclass
class ParameterSet:
    """Tabular logits for every intra-option policy and termination function.

    ``policy_logits[l-1]`` has shape (S, n_1..n_{l-1}, choices at l); the
    policy itself is ``softmax(logits / temperature_l)``.
    ``termination_logits[l-1]`` has shape (S, n_1..n_l); the termination
    probability is the sigmoid of the logit.
    """

    policy_logits: list[np.ndarray]
    termination_logits: list[np.ndarray]

    @classmethod
    def zeros(cls, config: HierarchyConfig) -> "ParameterSet":
        """All-zero logits: uniform policies and beta = 0.5 everywhere."""
        return cls(
            policy_logits=[
                np.zeros(config.policy_table_shape(l))
                for l in range(1, config.depth + 1)
            ],
            termination_logits=[
                np.zeros(config.termination_table_shape(l))
                for l in range(1, config.depth)
            ],
        )

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            [a.copy() for a in self.policy_logits],
            [a.copy() for a in self.termination_logits],
        )


@dataclass
class CriticSet:
    """Per-level action-value tables Q_U(s, o^{1:l}).

    ``q_u[l-1]`` has the same shape as the level-l policy table; the level-N
    table is keyed by the primitive action.  Q_Omega and V_Omega are never
    stored: they are recomputed as policy expectations of the next table down
    (:func:`eval_q_omega`), so the critic has a single source of truth.
    """

    q_u: list[np.ndarray]

    @classmethod
    def zeros(cls, config: HierarchyConfig) -> "CriticSet":
        return cls(
            q_u=[
                np.zeros(config.critic_table_shape(l))
                for l in range(1, config.depth + 1)
            ]
        )

    @classmethod
    def initial(cls, config: HierarchyConfig) -> "CriticSet":
        """Fresh critic filled with the configured initial value."""
        out = cls.zeros(config)
        if config.critic_init:
            for t in out.q_u:
                t += config.critic_init
        return out

    def copy(self) -> "CriticSet":
        return CriticSet([a.copy() for a in self.q_u])


class EventKind(Enum):
    NONE_TERMINATE = "none"
    ALL_TERMINATE = "all"
    LOWER_ONLY = "lower_only"
    HIGHER = "higher"


@dataclass(frozen=True)
class TerminationEvent:
    """One cell of the termination partition with its probability weight.

    ``level`` is the deepest surviving level's successor for LOWER_ONLY
    events (the event: levels ``level..N-1`` terminated, all above kept) and
    the lowest non-surviving boundary for HIGHER events (the event: levels
    ``level+1..N-1`` terminated, so the continuation conditions on the prefix
    ``o^{1:level}``).  NONE_TERMINATE and ALL_TERMINATE carry level 0.
    """

    kind: EventKind
    weight: float
    level: int = 0


def softmax_policy(
    config: HierarchyConfig,
    params: ParameterSet,
    level: int,
    state: int,
    stack,
) -> np.ndarray:
    """pi^level(. | state, o^{1:level-1}) as a probability vector."""
    config._check_level(level, 1, config.depth)
    prefix = _as_prefix(stack)
    if len(prefix) != level - 1:
        raise StackError(
            f"level {level} policy needs a {level - 1}-entry prefix, "
            f"got {len(prefix)}"
        )
    logits = params.policy_logits[level - 1][(state,) + prefix]
    return _softmax(logits, config.temperature_per_level[level - 1])


def _softmax(logits: np.ndarray, temperature: float) -> np.ndarray:
    scaled = np.asarray(logits, dtype=float) / temperature
    scaled = scaled - scaled.max()
    e = np.exp(scaled)
    return e / e.sum()


def epsilon_greedy_probs(values: np.ndarray, eps: float) -> np.ndarray:
    """The epsilon-greedy distribution over a value row (uniform over ties)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    probs = np.full(n, eps / n)
    ties = values == values.max()
    probs[ties] += (1.0 - eps) / ties.sum()
    return probs


def level_policy(
    config: HierarchyConfig,
    params: ParameterSet,
    critics: Optional[CriticSet],
    level: int,
    state: int,
    stack,
) -> np.ndarray:
    """The acting distribution at a level, honouring the top-policy mode.

    Identical to :func:`softmax_policy` except at level 1 under
    EPSILON_GREEDY, where the distribution is epsilon-greedy in the level-1
    critic row (the policy over options learned by intra-option Q-learning).
    """
    if level == 1 and config.top_policy_mode is TopPolicy.EPSILON_GREEDY:
        if critics is None:
            raise ValueError("epsilon-greedy level-1 policy needs the critic")
        return epsilon_greedy_probs(critics.q_u[0][state], config.epsilon)
    return softmax_policy(config, params, level, state, stack)


def termination_prob(
    config: HierarchyConfig,
    params: ParameterSet,
    level: int,
    state: int,
    stack,
) -> float:
    """beta^level(state, o^{1:level}) = sigmoid of the termination logit."""
    config._check_level(level, 1, config.depth - 1)
    prefix = _as_prefix(stack)
    if len(prefix) < level:
        raise StackError(
            f"beta^{level} needs a prefix of at least {level} options"
        )
    logit = float(params.termination_logits[level - 1][(state,) + prefix[:level]])
    return sigmoid(logit)


def sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def termination_partition(
    betas: Sequence[float], level: int
) -> list[TerminationEvent]:
    """Partition of the joint termination outcome at arrival.

    ``betas`` are the N-1 termination probabilities of the full active stack
    at the arrival state, bottom of hierarchy last.  Termination is assessed
    bottom-up: level j can only terminate in outcomes where levels j+1..N-1
    all terminated, so exactly N outcomes have positive weight (the empty
    suffix and each suffix {q..N-1}).  ``level`` is the level whose
    arrival value is being formed and controls how suffix outcomes are
    labelled:

    * empty suffix             -> NONE_TERMINATE, weight 1 - beta^{N-1}
    * suffix {q..N-1}, q > level -> LOWER_ONLY(q),
      weight (1 - beta^{q-1}) * prod_{z=q..N-1} beta^z
    * suffix {i+1..N-1}, i < level -> HIGHER(i), same weight form
    * full suffix              -> ALL_TERMINATE, weight prod_j beta^j

    Weights always sum to exactly 1 (telescoping partition).
    """
    n = len(betas)
    for b in betas:
        if not 0.0 <= b <= 1.0:
            raise ValueError(f"termination probability {b} outside [0, 1]")
    if not 0 <= level <= n:
        raise LevelError(f"level {level} outside [0, {n}]")
    if n == 0:
        # Depth-1 agent: nothing can terminate.
        return [TerminationEvent(EventKind.NONE_TERMINATE, 1.0)]
    events = [TerminationEvent(EventKind.NONE_TERMINATE, 1.0 - betas[n - 1])]
    all_weight = 1.0
    for b in betas:
        all_weight *= b
    events.append(TerminationEvent(EventKind.ALL_TERMINATE, all_weight))
    # Suffix {q..N-1} for q = N-1 .. 2, split into lower-only vs higher by
    # where q falls relative to the target level.
    for q in range(n, 1, -1):
        w = 1.0 - betas[q - 2]
        for z in range(q, n + 1):
            w *= betas[z - 1]
        if q >= level + 1:
            events.append(TerminationEvent(EventKind.LOWER_ONLY, w, q))
        else:
            events.append(TerminationEvent(EventKind.HIGHER, w, q - 1))
    return events


def eval_q_omega(
    config: HierarchyConfig,
    params: ParameterSet,
    critics: CriticSet,
    state: int,
    stack,
) -> float:
    """Q_Omega(state, o^{1:d}): policy expectation of the level-(d+1) critic.

    With an empty stack this is V_Omega(state).
    """
    prefix = _as_prefix(stack)
    d = len(prefix)
    if d >= config.depth:
        raise StackError(f"prefix of {d} options too deep for depth {config.depth}")
    probs = level_policy(config, params, critics, d + 1, state, prefix)
    row = critics.q_u[d][(state,) + prefix]
    return float(np.dot(probs, row))


def eval_u(
    config: HierarchyConfig,
    params: ParameterSet,
    critics: CriticSet,
    state: int,
    stack,
    level: Optional[int] = None,
) -> float:
    """Option value upon arrival, U(state, o^{1:level}).

    The termination weights always come from the full active stack (all the
    betas that gate bottom-up termination are defined by it); ``level``
    selects which prefix the continuation values condition on:

    * NONE_TERMINATE  -> Q_Omega(state, o^{1:N-1})
    * LOWER_ONLY      -> Q_Omega(state, o^{1:level})
    * HIGHER at i     -> Q_Omega(state, o^{1:i})
    * ALL_TERMINATE   -> V_Omega(state)

    ``level`` defaults to N-1, the form the learning target uses.
    """
    full = _as_prefix(stack)
    n = config.depth - 1
    if len(full) != n:
        raise StackError(
            f"arrival value needs the full {n}-option stack, got {len(full)}"
        )
    if level is None:
        level = n
    betas = [
        termination_prob(config, params, l, state, full) for l in range(1, n + 1)
    ]
    events = termination_partition(betas, level)
    total = 0.0
    for ev in events:
        if ev.weight == 0.0:
            continue
        if ev.kind is EventKind.NONE_TERMINATE:
            cont = eval_q_omega(config, params, critics, state, full)
        elif ev.kind is EventKind.ALL_TERMINATE:
            cont = eval_q_omega(config, params, critics, state, ())
        elif ev.kind is EventKind.LOWER_ONLY:
            cont = eval_q_omega(config, params, critics, state, full[:level])
        else:
            cont = eval_q_omega(config, params, critics, state, full[: ev.level])
        total += ev.weight * cont
    return total


def advantage(
    config: HierarchyConfig,
    params: ParameterSet,
    critics: CriticSet,
    state: int,
    stack,
) -> float:
    """Advantage of keeping o^{1:l} over the termination-weighted alternatives.

    A(state, o^{1:l}) = Q_Omega(state, o^{1:l})
        - V_Omega(state) * prod_{j<l} beta^j
        - sum_{i<l} (1 - beta^i) * Q_Omega(state, o^{1:i}) * prod_{i<k<l} beta^k
    """
    prefix = _as_prefix(stack)
    l = len(prefix)
    config._check_level(l, 1, config.depth - 1)
    value = eval_q_omega(config, params, critics, state, prefix)
    betas = [
        termination_prob(config, params, j, state, prefix[:j])
        for j in range(1, l)
    ]
    prod_all = 1.0
    for b in betas:
        prod_all *= b
    value -= eval_q_omega(config, params, critics, state, ()) * prod_all
    for i in range(1, l):
        w = 1.0 - betas[i - 1]
        for k in range(i + 1, l):
            w *= betas[k - 1]
        value -= w * eval_q_omega(config, params, critics, state, prefix[:i])
    return value


def policy_grad_step(
    config: HierarchyConfig,
    params: ParameterSet,
    level: int,
    state: int,
    stack,
    chosen: int,
    scale: float,
) -> np.ndarray:
    """Ascent step on the level's logit row for one sampled choice.

    Returns lr_policy * scale * d log pi(chosen | context) / d logits,
    i.e. lr * scale * (onehot(chosen) - pi) / temperature.
    """
    probs = softmax_policy(config, params, level, state, stack)
    if not 0 <= chosen < probs.shape[0]:
        raise IndexError(f"choice {chosen} out of range")
    delta = -probs.copy()
    delta[chosen] += 1.0
    tau = config.temperature_per_level[level - 1]
    return config.lr_policy * scale * delta / tau


def termination_grad_step(
    config: HierarchyConfig,
    params: ParameterSet,
    level: int,
    state: int,
    stack,
    gate: float,
    adv: float,
) -> float:
    """Descent step on the single termination logit for one arrival.

    ``gate`` is the product of the deeper levels' termination probabilities
    (the likelihood this termination function was assessed at all); the
    regularizer eta is added to the advantage to discourage termination.
    Returns -lr_termination * gate * beta * (1 - beta) * (adv + eta).
    """
    beta = termination_prob(config, params, level, state, stack)
    return -config.lr_termination * gate * beta * (1.0 - beta) * (adv + config.eta)
