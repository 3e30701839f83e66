"""
Mirror symmetry on a three-lane road
====================================

On the lane road, turning left and turning right are mirror images: swap
the lane-change actions and negate every lateral quantity.  The relations
are built from the discretization, since a lateral interval only mirrors
onto a single interval when the cut points are symmetric.
"""

import numpy as np

from ruleguard.agent import TrainConfig, train_q
from ruleguard.envs.base import sample_traces
from ruleguard.envs.laneworld import LaneWorld, mirror_spec_text
from ruleguard.featurespace import build_decile_scheme
from ruleguard.metamorph import generalize, parse_mr_spec
from ruleguard.rules import NEG, Rule

env = LaneWorld()
q = train_q(env, TrainConfig(steps=5000, learning_rate=0.001, seed=0))
traces, E = sample_traces(env, q, 10, seed=1)
print("episode returns:", [round(t.total_reward, 1) for t in traces])
print("action counts:", np.bincount(E.actions, minlength=env.n_actions))

# %%
# Relations for this scheme.  Intervals of a lateral feature without a
# single mirror image are left out.
scheme = build_decile_scheme(E.states, env.schema)
text = mirror_spec_text(scheme, E.states)
mrs = parse_mr_spec(text, env.schema, env.n_actions, scheme)
print(f"{len(mrs)} relations:", [(m.name, len(m.relations)) for m in mrs])

# %%
# "Don't change to the left lane when in the leftmost lane" mirrors to the
# same rule for the right.
names = env.schema.names
y = names.index("v0_y")
rule = Rule.make(NEG, 0, {y: scheme.interval_of(y, 0.0)})
for m in generalize(rule, mrs).members:
    print("  ", m.text(names))
