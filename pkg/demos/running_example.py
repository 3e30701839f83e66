"""
From a wall-avoiding policy to a rotated rule
=============================================

A hand-written Q-function walks towards the nearest pellet and never into a
wall.  We sample its traces, explain its choices, mine rules, and rotate the
"don't walk north into a wall" rule to the other three directions.
"""

import numpy as np

from ruleguard.explainer import NEG, aggregate_importance
from ruleguard.featurespace import build_decile_scheme
from ruleguard.metamorph import bundled_spec, generalize, parse_mr_spec
from ruleguard.rulemine import MineParams, build_all_datasets, filter_rules, mine_rules
from ruleguard.synthetic import wall_avoidance_experience

env, q, traces, E = wall_avoidance_experience(n_episodes=20, seed=0)
print(f"{len(traces)} episodes, {len(E)} experiences, {len(env.schema)} features")

# %%
# Every feature gets decile intervals; the wall flags are 0/1 so they keep
# their two values.
scheme = build_decile_scheme(E.states, env.schema)
names = env.schema.names

# %%
# Importance: which features push the policy towards or away from an action.
imp = aggregate_importance(q, E, scheme, n_feat=60, n_samples=300, seed=0)
top = np.argsort(-imp.row(NEG, 0))[:5]
print("most important features for avoiding north:", [names[i] for i in top])

# %%
# Mining and filtering (accuracy >= 0.9, coverage >= 0.01 on held-out data).
params = MineParams(seed=0)
datasets = build_all_datasets(E, q, scheme, env.n_actions, params)
rules = filter_rules(mine_rules(E, q, imp, scheme, params, datasets), datasets)
for r in rules:
    print(f"  {r.text(names):45s} acc={r.stats['accuracy']:.2f} cov={r.stats['coverage']:.3f}")

# %%
# The rotation relations map north to east, east to south and so on.  The
# closure of the north-wall rule holds one rule per direction.
mrs = parse_mr_spec(bundled_spec("pacman_rotation"), env.schema, env.n_actions)
north = next(r for r in rules if r.action == 0 and r.polarity == NEG)
g = generalize(north, mrs)
for m in g.members:
    via = "origin" if m == north else ", ".join(name for _, name in g.applied[m.key])
    print(f"  {m.text(names):30s} via {via}")
