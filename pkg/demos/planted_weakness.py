"""
Finding a planted weakness
==========================

A policy trained on the tiny grid never gets to try east next to an east
wall, so it never learns that pushing into that wall wastes time.  The
rules it did learn about the other walls, rotated, reveal the gap: guiding
the policy with them raises its reward.

Takes about a minute on one core.
"""

import sys
import tempfile
from pathlib import Path

from ruleguard.pipeline import ExperimentConfig, Pipeline, bundled_config, tomllib

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

# %%
# The bundled "planted" config holds the handicap: action 2 (east) is masked
# during training whenever feature 64 (can_move_E) is below 0.5.  The random
# baselines are switched off here to keep the demo short.
data = tomllib.loads(bundled_config("planted"))
data["seed"] = seed
data["rt"] = {"enabled": False}
data["rr"] = {"enabled": False}
cfg = ExperimentConfig.from_dict(data)
print("handicap:", cfg.train.handicap)

# %%
# Run every stage; each writes its artifact to the run directory.
run_dir = Path(tempfile.mkdtemp(prefix="planted-"))
Pipeline(cfg, run_dir, workers=1).run()
print(f"artifacts in {run_dir}:")
for p in sorted(run_dir.iterdir()):
    print("  ", p.name)

# %%
# The summary lists every weakness with its origin rule and the rotated
# members that produced it, then the reward of the composed guide.
print()
print((run_dir / "summary.txt").read_text())
