# A walking tour of the N-level value recursions on a micro-MDP.
#
# The arrival value U answers: "what is a stack of options worth the moment
# we land in a state, given that any suffix of it may terminate there?"
# This script builds a random 3-state MDP, a depth-4 agent with random
# tables, and shows the termination partition, the arrival value, and its
# agreement with a brute-force enumeration of all joint termination coins.

import numpy as np

from hoc import core
from hoc.core import CriticSet, HierarchyConfig, ParameterSet, TopPolicy
from hoc.verify import enumerate_arrival_value

rng = np.random.default_rng(0)

config = HierarchyConfig(
    depth=4,
    options_per_level=(2, 2, 2),
    num_actions=3,
    num_states=3,
    gamma=0.9,
    temperature_per_level=(1.0,) * 4,
    top_policy_mode=TopPolicy.POLICY_GRADIENT,
)

params = ParameterSet.zeros(config)
for table in params.policy_logits + params.termination_logits:
    table += rng.normal(0, 1.0, table.shape)
critics = CriticSet.zeros(config)
for table in critics.q_u:
    table += rng.normal(0, 1.0, table.shape)

state, stack = 1, (0, 1, 1)

# The termination partition at the arrival state.  Exactly N outcomes have
# positive probability: the empty suffix and each suffix {q..N-1}, because a
# level can only terminate when every deeper level terminated first.
betas = [
    core.termination_prob(config, params, level, state, stack)
    for level in (1, 2, 3)
]
print("betas at arrival:", np.round(betas, 3))
for level in range(config.depth):
    events = core.termination_partition(betas, level)
    print(f"\npartition regrouped for level {level}:")
    for ev in events:
        print(f"  {ev.kind.value:<12} level={ev.level}  weight={ev.weight:.4f}")
    print("  total:", sum(ev.weight for ev in events))

# The arrival value, and the same number computed by enumerating all 2^3
# joint coin outcomes under bottom-up gating.
for level in range(config.depth):
    via_partition = core.eval_u(config, params, critics, state, stack, level)
    via_coins = enumerate_arrival_value(
        config, params, critics, state, stack, level
    )
    print(
        f"U(s={state}, stack={stack}; level {level}) = {via_partition:+.6f}  "
        f"enumeration {via_coins:+.6f}  gap {abs(via_partition - via_coins):.1e}"
    )

# The generalized advantage at each level: the value of keeping the prefix
# against the termination-weighted value of handing control upward.
for level in (1, 2, 3):
    adv = core.advantage(config, params, critics, state, stack[:level])
    print(f"advantage at level {level}: {adv:+.4f}")
