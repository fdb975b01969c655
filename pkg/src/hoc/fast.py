"""Compiled training runner for the experiment sweeps.

This reproduces :class:`hoc.learn.Learner` bit for bit — same SplitMix64
draw protocol, same update formulas evaluated in the same order — compiled
with numba so that multi-thousand-episode sweeps fit a desk-scale budget.
The equivalence is pinned by tests that compare per-episode traces and final
tables against the pure-Python learner on both environments.

Tables live in flat per-level buffers.  The flat index of the context
``(s, o^1..o^{l-1})`` is built incrementally as
``c_1 = s; c_{j+1} = c_j * n_j + o_j``, matching the C-order layout of the
numpy tables, so buffers convert to and from
:class:`~hoc.core.ParameterSet` / :class:`~hoc.core.CriticSet` by reshaping.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import CriticSet, HierarchyConfig, ParameterSet, TopPolicy
from .envs import FourRooms, StochasticDP

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 2.0 ** -53

ENV_FOUR_ROOMS = 0
ENV_STOCHASTIC_DP = 1


@njit(cache=True, inline="always")
def _u01(rs):
    rs[0] = rs[0] + _GOLDEN
    z = rs[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return float(z >> np.uint64(11)) * _INV53


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, inline="always")
def _softmax_into(buf, off, n, tau, scratch):
    m = buf[off] / tau
    for i in range(n):
        v = buf[off + i] / tau
        scratch[i] = v
        if v > m:
            m = v
    z = 0.0
    for i in range(n):
        e = math.exp(scratch[i] - m)
        scratch[i] = e
        z += e
    for i in range(n):
        scratch[i] = scratch[i] / z


@njit(cache=True, inline="always")
def _egreedy_into(qbuf, off, n, eps, scratch):
    best = qbuf[off]
    for i in range(n):
        if qbuf[off + i] > best:
            best = qbuf[off + i]
    ties = 0
    for i in range(n):
        if qbuf[off + i] == best:
            ties += 1
    bonus = (1.0 - eps) / ties
    for i in range(n):
        if qbuf[off + i] == best:
            scratch[i] = eps / n + bonus
        else:
            scratch[i] = eps / n
    return best


@njit(cache=True, inline="always")
def _egreedy_sample(qbuf, off, n, eps, rs):
    u = _u01(rs)
    if u < eps:
        return int(_u01(rs) * n)
    best = qbuf[off]
    for i in range(n):
        if qbuf[off + i] > best:
            best = qbuf[off + i]
    ties = 0
    for i in range(n):
        if qbuf[off + i] == best:
            ties += 1
    if ties == 1:
        for i in range(n):
            if qbuf[off + i] == best:
                return i
    pick = int(_u01(rs) * ties)
    seen = 0
    for i in range(n):
        if qbuf[off + i] == best:
            if seen == pick:
                return i
            seen += 1
    return n - 1


@njit(cache=True, inline="always")
def _categorical(scratch, n, rs):
    u = _u01(rs)
    acc = 0.0
    last = 0
    for i in range(n):
        acc += scratch[i]
        last = i
        if u < acc:
            return i
    return last


@njit(cache=True, inline="always")
def _policy_into(level, ctx, qbuf, pbuf, qoff, poff, nopt, temps,
                 top_eps_mode, eps, scratch):
    """Probability row for a level's choice at a flat context."""
    n = nopt[level - 1]
    if level == 1 and top_eps_mode == 1:
        _egreedy_into(qbuf, qoff[0] + ctx * n, n, eps, scratch)
    else:
        _softmax_into(pbuf, poff[level - 1] + ctx * n, n,
                      temps[level - 1], scratch)


@njit(cache=True, inline="always")
def _sample_level(level, ctx, qbuf, pbuf, qoff, poff, nopt, temps,
                  top_eps_mode, eps, scratch, rs):
    n = nopt[level - 1]
    if level == 1 and top_eps_mode == 1:
        return _egreedy_sample(qbuf, qoff[0] + ctx * n, n, eps, rs)
    _softmax_into(pbuf, poff[level - 1] + ctx * n, n, temps[level - 1], scratch)
    return _categorical(scratch, n, rs)


@njit(cache=True, inline="always")
def _q_omega(depth_d, ctx, qbuf, pbuf, qoff, poff, nopt, temps,
             top_eps_mode, eps, scratch):
    """Policy expectation of the level-(d+1) critic row at a flat context."""
    level = depth_d + 1
    n = nopt[level - 1]
    _policy_into(level, ctx, qbuf, pbuf, qoff, poff, nopt, temps,
                 top_eps_mode, eps, scratch)
    off = qoff[level - 1] + ctx * n
    acc = 0.0
    for i in range(n):
        acc += scratch[i] * qbuf[off + i]
    return acc


@njit(cache=True)
def run_tabular(
    env_kind,
    intended,      # four rooms: (S, 4) intended destination
    nbr,           # four rooms: flattened open-neighbour lists
    nbr_off,       # four rooms: CSR offsets into nbr, length S + 1
    seed,
    episodes,
    step_cap,
    depth,
    nopt,          # int64[depth]: choices per level (actions at level depth)
    num_states,
    gamma,
    lr_critic,
    lr_policy,
    lr_termination,
    eps,
    eta,
    temps,         # float64[depth]
    top_eps_mode,  # 1 = epsilon-greedy level 1, 0 = policy gradient
    use_baseline,
    qbuf, pbuf, bbuf,
    qoff, poff, boff,
    out_steps, out_reward, out_disc, out_term, out_switch, out_trunc,
):
    n = depth - 1
    rs = np.zeros(1, dtype=np.uint64)
    rs[0] = np.uint64(seed)
    stack = np.zeros(max(n, 1), dtype=np.int64)
    c = np.zeros(depth + 1, dtype=np.int64)      # contexts at current state
    c2 = np.zeros(depth + 1, dtype=np.int64)     # contexts at next state
    betas = np.zeros(max(n, 1), dtype=np.float64)
    maxch = 0
    for l in range(depth):
        if nopt[l] > maxch:
            maxch = nopt[l]
    scratch = np.zeros(maxch, dtype=np.float64)

    aprobs = np.zeros(max(nopt[depth - 1], 1), dtype=np.float64)
    qom_cache = np.zeros(depth, dtype=np.float64)
    beta_pre = np.zeros(max(n, 1), dtype=np.float64)

    slip = 1.0 / 3.0
    goal = -1

    for ep in range(episodes):
        # ---- environment reset ----
        if env_kind == ENV_FOUR_ROOMS:
            s = int(_u01(rs) * num_states)
            goal = int(_u01(rs) * num_states)
        else:
            s = 1  # stochastic DP: (s2, not visited)
        # ---- initial stack, top-down ----
        c[0] = s
        for j in range(1, depth):
            o = _sample_level(j, c[j - 1], qbuf, pbuf, qoff, poff, nopt,
                              temps, top_eps_mode, eps, scratch, rs)
            stack[j - 1] = o
            c[j] = c[j - 1] * nopt[j - 1] + o

        total = 0.0
        disc = 0.0
        gpow = 1.0
        steps = 0
        done = False
        for _ in range(step_cap):
            # ---- action ----
            # The probability row is kept: the policy update below reads the
            # same unchanged logits, so reusing it is value-identical.
            if depth == 1 and top_eps_mode == 1:
                a = _egreedy_sample(qbuf, qoff[0] + c[0] * nopt[0], nopt[0],
                                    eps, rs)
            else:
                _softmax_into(pbuf, poff[depth - 1] + c[depth - 1] * nopt[depth - 1],
                              nopt[depth - 1], temps[depth - 1], aprobs)
                a = _categorical(aprobs, nopt[depth - 1], rs)
            # ---- environment step ----
            if env_kind == ENV_FOUR_ROOMS:
                if s == goal:
                    s2 = s
                    r = 1.0
                    done = True
                else:
                    if _u01(rs) < slip:
                        lo = nbr_off[s]
                        cnt = nbr_off[s + 1] - lo
                        s2 = nbr[lo + int(_u01(rs) * cnt)]
                    else:
                        s2 = intended[s, a]
                    if s2 == goal:
                        r = 1.0
                        done = True
                    else:
                        r = 0.0
                        done = False
            else:
                cs = s % 6 + 1
                visited = s >= 6
                if a == 1 and _u01(rs) < 0.5:
                    nxt = cs + 1 if cs < 6 else 6
                else:
                    nxt = cs - 1
                if nxt == 6:
                    visited = True
                if visited:
                    s2 = (nxt - 1) + 6
                else:
                    s2 = nxt - 1
                if nxt == 1:
                    done = True
                    r = 1.0 if visited else 0.01
                else:
                    done = False
                    r = 0.0

            # ---- (a) one-step target ----
            c2[0] = s2
            for j in range(1, depth):
                c2[j] = c2[j - 1] * nopt[j - 1] + stack[j - 1]
            if done:
                target = r
            else:
                if n == 0:
                    u_val = _q_omega(0, c2[0], qbuf, pbuf, qoff, poff, nopt,
                                     temps, top_eps_mode, eps, scratch)
                else:
                    for j in range(1, n + 1):
                        betas[j - 1] = _sigmoid(bbuf[boff[j - 1] + c2[j]])
                    u_val = (1.0 - betas[n - 1]) * _q_omega(
                        n, c2[n], qbuf, pbuf, qoff, poff, nopt, temps,
                        top_eps_mode, eps, scratch)
                    for i in range(1, n):
                        w = 1.0 - betas[i - 1]
                        for k in range(i + 1, n + 1):
                            w *= betas[k - 1]
                        u_val += w * _q_omega(i, c2[i], qbuf, pbuf, qoff,
                                              poff, nopt, temps, top_eps_mode,
                                              eps, scratch)
                    w_all = 1.0
                    for j in range(n):
                        w_all *= betas[j]
                    u_val += w_all * _q_omega(0, c2[0], qbuf, pbuf, qoff,
                                              poff, nopt, temps, top_eps_mode,
                                              eps, scratch)
                target = r + gamma * u_val

            # ---- (b) critic updates ----
            for j in range(1, depth):
                off = qoff[j - 1] + c[j - 1] * nopt[j - 1] + stack[j - 1]
                qbuf[off] += lr_critic * (target - qbuf[off])
            off = qoff[depth - 1] + c[depth - 1] * nopt[depth - 1] + a
            qbuf[off] += lr_critic * (target - qbuf[off])

            # ---- (c) policy updates ----
            first = 2 if top_eps_mode == 1 else 1
            for j in range(first, depth + 1):
                if j < depth:
                    chosen = stack[j - 1]
                else:
                    chosen = a
                nch = nopt[j - 1]
                scale = qbuf[qoff[j - 1] + c[j - 1] * nch + chosen]
                if use_baseline == 1:
                    scale -= _q_omega(j - 1, c[j - 1], qbuf, pbuf, qoff,
                                      poff, nopt, temps, top_eps_mode, eps,
                                      scratch)
                tau = temps[j - 1]
                toff = poff[j - 1] + c[j - 1] * nch
                if j == depth:
                    # logits unchanged since the action draw
                    for i in range(nch):
                        scratch[i] = aprobs[i]
                else:
                    _softmax_into(pbuf, toff, nch, tau, scratch)
                coef = lr_policy * scale / tau
                for i in range(nch):
                    ind = 1.0 if i == chosen else 0.0
                    pbuf[toff + i] += coef * (ind - scratch[i])

            # ---- (d) termination updates at the arrival state ----
            # The critic/policy tables are untouched during this stage, so
            # the arrival-state value views are computed once; gate factors
            # read the pre-stage betas (levels above the one being updated
            # are untouched until their own turn), while the shallower
            # levels' betas inside the advantage read the live, already
            # updated logits.
            if n > 0 and lr_termination != 0.0:
                for d in range(depth):
                    qom_cache[d] = _q_omega(d, c2[d], qbuf, pbuf, qoff, poff,
                                            nopt, temps, top_eps_mode, eps,
                                            scratch)
                for i in range(1, n + 1):
                    beta_pre[i - 1] = _sigmoid(bbuf[boff[i - 1] + c2[i]])
                for j in range(1, n + 1):
                    gate = 1.0
                    for i in range(j + 1, n + 1):
                        gate *= beta_pre[i - 1]
                    adv = qom_cache[j]
                    prod_all = 1.0
                    for i in range(1, j):
                        prod_all *= _sigmoid(bbuf[boff[i - 1] + c2[i]])
                    adv -= prod_all * qom_cache[0]
                    for i in range(1, j):
                        w = 1.0 - _sigmoid(bbuf[boff[i - 1] + c2[i]])
                        for k in range(i + 1, j):
                            w *= _sigmoid(bbuf[boff[k - 1] + c2[k]])
                        adv -= w * qom_cache[i]
                    off = boff[j - 1] + c2[j]
                    b = _sigmoid(bbuf[off])
                    bbuf[off] -= (
                        lr_termination * gate * b * (1.0 - b) * (adv + eta)
                    )

            total += r
            disc += gpow * r
            gpow *= gamma
            steps += 1

            if done:
                break

            # ---- (e) stack refresh at the arrival state ----
            if n > 0:
                k = n
                while k >= 1:
                    b = _sigmoid(bbuf[boff[k - 1] + c2[k]])
                    if _u01(rs) < b:
                        k -= 1
                    else:
                        break
                if k < n:
                    for j in range(k + 1, n + 1):
                        old = stack[j - 1]
                        o = _sample_level(j, c2[j - 1], qbuf, pbuf, qoff,
                                          poff, nopt, temps, top_eps_mode,
                                          eps, scratch, rs)
                        stack[j - 1] = o
                        c2[j] = c2[j - 1] * nopt[j - 1] + o
                        out_term[ep, j - 1] += 1
                        if o != old:
                            out_switch[ep, j - 1] += 1
            # advance
            s = s2
            for j in range(depth):
                c[j] = c2[j]

        out_steps[ep] = steps
        out_reward[ep] = total
        out_disc[ep] = disc
        out_trunc[ep] = 0 if done else 1
    return 0


def _flatten_tables(config: HierarchyConfig):
    """Zeroed flat buffers plus offset arrays for a configuration."""
    n = config.depth
    qsizes = [int(np.prod(config.critic_table_shape(l))) for l in range(1, n + 1)]
    psizes = [int(np.prod(config.policy_table_shape(l))) for l in range(1, n + 1)]
    bsizes = [int(np.prod(config.termination_table_shape(l))) for l in range(1, n)]
    qoff = np.zeros(n + 1, dtype=np.int64)
    poff = np.zeros(n + 1, dtype=np.int64)
    boff = np.zeros(max(n, 2), dtype=np.int64)
    qoff[1:] = np.cumsum(qsizes)
    poff[1:] = np.cumsum(psizes)
    if bsizes:
        boff[1 : n] = np.cumsum(bsizes)
    return (
        np.zeros(sum(qsizes)),
        np.zeros(sum(psizes)),
        np.zeros(sum(bsizes)) if bsizes else np.zeros(1),
        qoff[:-1].copy(),
        poff[:-1].copy(),
        boff[: max(n - 1, 1)].copy(),
    )


def _env_arrays(env_name: str):
    if env_name == "four_rooms":
        env = FourRooms()
        nbr_off = np.zeros(env.num_states + 1, dtype=np.int64)
        flat = []
        for i, nbrs in enumerate(env.neighbors):
            nbr_off[i + 1] = nbr_off[i] + len(nbrs)
            flat.extend(nbrs)
        return (
            ENV_FOUR_ROOMS,
            env.intended.astype(np.int64),
            np.array(flat, dtype=np.int64),
            nbr_off,
            env.num_states,
            env.num_actions,
        )
    if env_name == "stochastic_dp":
        dummy = np.zeros((1, 1), dtype=np.int64)
        return (
            ENV_STOCHASTIC_DP,
            dummy,
            np.zeros(1, dtype=np.int64),
            np.zeros(2, dtype=np.int64),
            StochasticDP.num_states,
            StochasticDP.num_actions,
        )
    raise ValueError(f"unknown environment {env_name!r}")


class RunResult:
    """Per-episode learning traces plus the final tables of one run."""

    def __init__(self, config, steps, reward, disc, term, switch, trunc,
                 qbuf, pbuf, bbuf):
        self.config = config
        self.steps = steps
        self.reward = reward
        self.discounted_return = disc
        self.terminations = term
        self.switches = switch
        self.truncated = trunc
        self._qbuf = qbuf
        self._pbuf = pbuf
        self._bbuf = bbuf

    def params(self) -> ParameterSet:
        cfg = self.config
        pol, trm = [], []
        off = 0
        for l in range(1, cfg.depth + 1):
            shape = cfg.policy_table_shape(l)
            size = int(np.prod(shape))
            pol.append(self._pbuf[off : off + size].reshape(shape).copy())
            off += size
        off = 0
        for l in range(1, cfg.depth):
            shape = cfg.termination_table_shape(l)
            size = int(np.prod(shape))
            trm.append(self._bbuf[off : off + size].reshape(shape).copy())
            off += size
        return ParameterSet(pol, trm)

    def critics(self) -> CriticSet:
        cfg = self.config
        tables = []
        off = 0
        for l in range(1, cfg.depth + 1):
            shape = cfg.critic_table_shape(l)
            size = int(np.prod(shape))
            tables.append(self._qbuf[off : off + size].reshape(shape).copy())
            off += size
        return CriticSet(tables)


def run_learning(
    config: HierarchyConfig,
    env_name: str,
    seed: int,
    episodes: int,
    step_cap: int = 10_000,
    params: ParameterSet | None = None,
    critics: CriticSet | None = None,
) -> RunResult:
    """Train one seeded run with the compiled kernel.

    ``params`` / ``critics`` warm-start the tables (evaluation runs pin them
    with zero learning rates).
    """
    kind, intended, nbr, nbr_off, s_count, a_count = _env_arrays(env_name)
    if config.num_states != s_count or config.num_actions != a_count:
        raise ValueError(
            f"config sized for {config.num_states}x{config.num_actions}, "
            f"env {env_name} needs {s_count}x{a_count}"
        )
    qbuf, pbuf, bbuf, qoff, poff, boff = _flatten_tables(config)
    if config.critic_init:
        qbuf += config.critic_init
    if params is not None:
        pbuf[:] = np.concatenate(
            [t.reshape(-1) for t in params.policy_logits]
        )
        if params.termination_logits:
            bbuf[:] = np.concatenate(
                [t.reshape(-1) for t in params.termination_logits]
            )
    if critics is not None:
        qbuf[:] = np.concatenate([t.reshape(-1) for t in critics.q_u])
    nopt = np.array(
        [config.choices_at(l) for l in range(1, config.depth + 1)],
        dtype=np.int64,
    )
    temps = np.array(config.temperature_per_level, dtype=np.float64)
    n_term = max(config.depth - 1, 1)
    out_steps = np.zeros(episodes, dtype=np.int64)
    out_reward = np.zeros(episodes)
    out_disc = np.zeros(episodes)
    out_term = np.zeros((episodes, n_term), dtype=np.int64)
    out_switch = np.zeros((episodes, n_term), dtype=np.int64)
    out_trunc = np.zeros(episodes, dtype=np.int8)
    run_tabular(
        kind, intended, nbr, nbr_off,
        seed, episodes, step_cap,
        config.depth, nopt, s_count,
        config.gamma, config.lr_critic, config.lr_policy,
        config.lr_termination, config.epsilon, config.eta, temps,
        1 if config.top_policy_mode is TopPolicy.EPSILON_GREEDY else 0,
        1 if config.use_advantage_baseline else 0,
        qbuf, pbuf, bbuf, qoff, poff, boff,
        out_steps, out_reward, out_disc, out_term, out_switch, out_trunc,
    )
    n = config.depth - 1
    return RunResult(
        config, out_steps, out_reward, out_disc,
        out_term[:, :n], out_switch[:, :n], out_trunc.astype(bool),
        qbuf, pbuf, bbuf,
    )
