"""One provider decision spanning an episode of operator steps.

Walks through the two-level loop with untrained agents: the goal codec, the
operator observation layout, the privacy-preserving information matrices the
operators upload, and the provider reward. Run: python3 demos/02_hierarchy_loop.py
"""
import numpy as np

from hdrl_ris.config import build_config
from hdrl_ris.harness import Experiment
from hdrl_ris.smdp import decode_goal, encode_goal

cfg = build_config(preset="desk")
c = cfg.system
print(f"{c.num_ops} OPs, {c.num_ris} surfaces -> {c.num_goals} joint allocations")
for g in range(c.num_goals):
    b = decode_goal(g, c.num_ops, c.num_ris)
    assert encode_goal(b, c.num_ops) == g
    print(f"  goal {g} <-> owners {b.tolist()}")

print(f"\nOP observation width {c.op_obs_width} = channels {2 * c.num_antennas * c.num_bs_per_op * c.num_users_per_op}"
      f" + association {c.num_users_per_op} + goal one-hot {c.num_ris * c.num_ops}")
print(f"OP action width {c.op_action_width}; provider state {c.steps_per_episode} x {c.rp_state_width}")

exp = Experiment.build(cfg, seed=0)
result = exp.system.run_episode()
print(f"\nepisode 0: provider chose goal {result.goal} (owners {decode_goal(result.goal, 2, 2).tolist()})")
for s, up in enumerate(result.uploads, start=1):
    print(f"  OP{s} uploads {up.info_matrices.shape[0]} information matrices of shape "
          f"{up.info_matrices.shape[1:]} and mean rate {up.mean_rate:.3f}")
print(f"  provider reward = sum of mean rates = {result.reward:.3f}")
print("  next provider state (first step, rounded):", np.round(result.rp_transition.next_state[0], 2))
print("  OP transitions collected:", [len(t) for t in result.op_transitions])
