"""Training the hierarchy on the desk scenario and comparing allocators.

Trains HPPO, a random provider and the no-surface scheme for the same budget
and prints 100-episode smoothed sum-rates along the way. The default budget
takes a few minutes on one CPU core; pass --episodes 3000 for the full
acceptance protocol. Run: python3 demos/03_train_desk.py [--episodes N] [--seed S]
"""
import argparse

import numpy as np

from hdrl_ris.config import build_config
from hdrl_ris.harness import run_experiment, smooth_series

parser = argparse.ArgumentParser()
parser.add_argument("--episodes", type=int, default=1500)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

curves = {}
for allocator in ("learned-hppo", "random", "none"):
    cfg = build_config({"allocator": allocator, "episodes": args.episodes}, preset="desk")
    exp = run_experiment(cfg, args.seed)
    curves[allocator] = smooth_series([r["reward"] for r in exp.records])
    goals = [r["goal"] for r in exp.records[-100:]]
    print(f"{allocator:>13}: final smoothed sum-rate {curves[allocator][-1]:.3f}, "
          f"goals in last 100 episodes {np.bincount(goals, minlength=4).tolist()}")

print("\nsmoothed sum-rate by episode")
marks = np.linspace(99, args.episodes - 1, 6).astype(int)
print(f"{'episode':>12} " + "".join(f"{m + 1:>8}" for m in marks))
for name, curve in curves.items():
    print(f"{name:>12} " + "".join(f"{curve[m]:8.3f}" for m in marks))
