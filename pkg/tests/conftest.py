import numpy as np
import pytest

from hoc.core import CriticSet, HierarchyConfig, ParameterSet, TopPolicy


def make_config(depth, options=(), num_actions=2, num_states=3, gamma=0.9,
                **kw):
    defaults = dict(
        depth=depth,
        options_per_level=tuple(options),
        num_actions=num_actions,
        num_states=num_states,
        gamma=gamma,
        temperature_per_level=(1.0,) * depth,
        top_policy_mode=TopPolicy.POLICY_GRADIENT,
    )
    defaults.update(kw)
    return HierarchyConfig(**defaults)


def randomize(rng, config, scale=1.0):
    params = ParameterSet.zeros(config)
    for t in params.policy_logits:
        t += rng.normal(0.0, scale, t.shape)
    for t in params.termination_logits:
        t += rng.normal(0.0, scale, t.shape)
    critics = CriticSet.zeros(config)
    for t in critics.q_u:
        t += rng.normal(0.0, scale, t.shape)
    return params, critics


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)
