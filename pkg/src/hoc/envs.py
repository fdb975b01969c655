"""Tabular environments behind one interface, plus their exact models.

Environments expose ``reset(rng) -> state`` and
``step(action, rng) -> (next_state, reward, done)`` with enumerable state and
action spaces, and can emit an exact transition/reward model
(:class:`TabularModel`) for the verification oracles.  All randomness flows
through the caller's :class:`~hoc.rng.TraceRng` so trajectories are
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rng import TraceRng


class ProtocolError(RuntimeError):
    """step() called on a finished episode."""


@dataclass
class TabularModel:
    """Exact finite MDP: transitions (S,A,S), expected rewards (S,A).

    Terminal states are absorbing with zero reward.  ``entry_reward[s]`` is
    the realized reward emitted on entering state ``s`` for environments
    whose reward is a function of the arrival state (both environments here);
    ``rewards`` is its (s, a) expectation, which is what the value recursions
    consume.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray
    start: int
    entry_reward: Optional[np.ndarray] = None

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        rows = self.transitions.sum(axis=2)
        if not np.allclose(rows, 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to 1")

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]


# Canonical 13x13 four-rooms grid: 104 open cells, four doorways.
FOUR_ROOMS_LAYOUT = """\
wwwwwwwwwwwww
w     w     w
w     w     w
w           w
w     w     w
w     w     w
ww wwww     w
w     www www
w     w     w
w     w     w
w           w
w     w     w
wwwwwwwwwwwww"""

# Action order: up, down, left, right.
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
SLIP_PROB = 1.0 / 3.0


class FourRooms:
    """Four-rooms navigation with uniformly resampled start and goal.

    The agent observes only its own cell (the goal is hidden and moves every
    episode).  Moves succeed with probability 2/3; otherwise the agent slips
    to a uniformly random empty adjacent cell.  Moving into a wall leaves the
    position unchanged.  Reward is +1 on reaching the goal, 0 otherwise.
    """

    num_actions = 4

    def __init__(self):
        rows = FOUR_ROOMS_LAYOUT.splitlines()
        self.height = len(rows)
        self.width = len(rows[0])
        self.walls = np.array(
            [[c == "w" for c in row] for row in rows], dtype=bool
        )
        self.open_cells = [
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if not self.walls[r, c]
        ]
        self.cell_index = {rc: i for i, rc in enumerate(self.open_cells)}
        self.num_states = len(self.open_cells)
        # Per (cell, action): intended destination; per cell: open neighbours.
        self.intended = np.zeros((self.num_states, 4), dtype=np.int64)
        self.neighbors: list[list[int]] = []
        for i, (r, c) in enumerate(self.open_cells):
            nbrs = []
            for a, (dr, dc) in enumerate(_MOVES):
                tr, tc = r + dr, c + dc
                if self.walls[tr, tc]:
                    self.intended[i, a] = i
                else:
                    j = self.cell_index[(tr, tc)]
                    self.intended[i, a] = j
                    nbrs.append(j)
            self.neighbors.append(nbrs)
        self.agent_pos = 0
        self.goal_pos = 0
        self._done = True

    def reset(self, rng: TraceRng) -> int:
        """Place agent then goal uniformly on open cells (may coincide)."""
        self.agent_pos = rng.randint(self.num_states)
        self.goal_pos = rng.randint(self.num_states)
        self._done = False
        return self.agent_pos

    def step(self, action: int, rng: TraceRng) -> tuple[int, float, bool]:
        if self._done:
            raise ProtocolError("episode already finished")
        if self.agent_pos == self.goal_pos:
            # Start drawn on the goal: the first arrival check fires at once.
            self._done = True
            return self.agent_pos, 1.0, True
        if rng.uniform() < SLIP_PROB:
            nbrs = self.neighbors[self.agent_pos]
            self.agent_pos = nbrs[rng.randint(len(nbrs))]
        else:
            self.agent_pos = int(self.intended[self.agent_pos, action])
        if self.agent_pos == self.goal_pos:
            self._done = True
            return self.agent_pos, 1.0, True
        return self.agent_pos, 0.0, False

    def frozen_model(self, start: int, goal: int) -> TabularModel:
        """Exact model with the goal fixed (absorbing, entry reward +1)."""
        n = self.num_states
        p = np.zeros((n, 4, n))
        entry = np.zeros(n)
        entry[goal] = 1.0
        for s in range(n):
            if s == goal:
                p[s, :, s] = 1.0
                continue
            for a in range(4):
                p[s, a, self.intended[s, a]] += 1.0 - SLIP_PROB
                nbrs = self.neighbors[s]
                for j in nbrs:
                    p[s, a, j] += SLIP_PROB / len(nbrs)
        rewards = p @ entry
        rewards[goal, :] = 0.0
        terminal = np.zeros(n, dtype=bool)
        terminal[goal] = True
        return TabularModel(p, rewards, terminal, start, entry)

    def render(self) -> str:
        """Plain-text map: walls '#', open '.', agent 'A', goal 'G'."""
        grid = [
            ["#" if self.walls[r, c] else "." for c in range(self.width)]
            for r in range(self.height)
        ]
        gr, gc = self.open_cells[self.goal_pos]
        grid[gr][gc] = "G"
        ar, ac = self.open_cells[self.agent_pos]
        grid[ar][ac] = "A"
        return "\n".join("".join(row) for row in grid)


RIGHT_SUCCESS = 0.5


class StochasticDP:
    """Six-state decision chain whose reward depends on visiting s6.

    The agent starts at s2; s1 is terminal.  ``left`` always moves one state
    left; ``right`` succeeds half the time and otherwise moves left (at s6 a
    successful right is a self-transition).  Reaching s1 pays 1 if s6 was
    visited this episode and 0.01 otherwise.  The visited flag is folded into
    the observation, so the observable space has 6 x 2 = 12 states indexed
    ``(s - 1) + 6 * visited``.
    """

    num_states = 12
    num_actions = 2
    LEFT, RIGHT = 0, 1

    def __init__(self):
        self._chain_state = 2
        self._visited = False
        self._done = True

    @staticmethod
    def obs(chain_state: int, visited: bool) -> int:
        return (chain_state - 1) + 6 * int(visited)

    def reset(self, rng: TraceRng) -> int:
        self._chain_state = 2
        self._visited = False
        self._done = False
        return self.obs(2, False)

    def step(self, action: int, rng: TraceRng) -> tuple[int, float, bool]:
        if self._done:
            raise ProtocolError("episode already finished")
        s = self._chain_state
        if action == self.RIGHT and rng.uniform() < RIGHT_SUCCESS:
            nxt = min(s + 1, 6)
        else:
            nxt = s - 1
        self._chain_state = nxt
        if nxt == 6:
            self._visited = True
        if nxt == 1:
            self._done = True
            reward = 1.0 if self._visited else 0.01
            return self.obs(1, self._visited), reward, True
        return self.obs(nxt, self._visited), 0.0, False

    def exact_model(self) -> TabularModel:
        n = self.num_states
        p = np.zeros((n, 2, n))
        entry = np.zeros(n)
        entry[self.obs(1, False)] = 0.01
        entry[self.obs(1, True)] = 1.0
        terminal = np.zeros(n, dtype=bool)
        terminal[self.obs(1, False)] = True
        terminal[self.obs(1, True)] = True

        def dest(s: int, visited: bool, nxt: int) -> int:
            return self.obs(nxt, visited or nxt == 6)

        for s in range(1, 7):
            for visited in (False, True):
                o = self.obs(s, visited)
                if terminal[o]:
                    p[o, :, o] = 1.0
                    continue
                left_to = dest(s, visited, s - 1)
                p[o, self.LEFT, left_to] = 1.0
                right_to = dest(s, visited, min(s + 1, 6))
                p[o, self.RIGHT, right_to] += RIGHT_SUCCESS
                p[o, self.RIGHT, left_to] += 1.0 - RIGHT_SUCCESS
        rewards = p @ entry
        rewards[terminal, :] = 0.0
        return TabularModel(p, rewards, terminal, self.obs(2, False), entry)


class SampledModelEnv:
    """Episodic environment sampled from an explicit :class:`TabularModel`.

    Rewards are emitted per the model's entry rewards when present, otherwise
    the (s, a) expected reward.  Useful for cross-checking exact computations
    against the real learning loop on synthetic MDPs.
    """

    def __init__(self, model: TabularModel):
        self.model = model
        self.num_states = model.num_states
        self.num_actions = model.num_actions
        self._cum = np.cumsum(model.transitions, axis=2)
        self.state = model.start
        self._done = False

    def reset(self, rng: TraceRng) -> int:
        self.state = self.model.start
        self._done = bool(self.model.terminal[self.state])
        return self.state

    def step(self, action: int, rng: TraceRng) -> tuple[int, float, bool]:
        if self._done:
            raise ProtocolError("episode already finished")
        u = rng.uniform()
        row = self._cum[self.state, action]
        nxt = int(np.searchsorted(row, u, side="right"))
        if nxt >= self.num_states:
            nxt = self.num_states - 1
        if self.model.entry_reward is not None:
            reward = float(self.model.entry_reward[nxt])
        else:
            reward = float(self.model.rewards[self.state, action])
        self.state = nxt
        self._done = bool(self.model.terminal[nxt])
        return nxt, reward, self._done


def make_env(name: str):
    if name == "four_rooms":
        return FourRooms()
    if name == "stochastic_dp":
        return StochasticDP()
    raise ValueError(f"unknown environment {name!r}")
