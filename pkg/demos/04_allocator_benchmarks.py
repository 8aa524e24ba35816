"""Provider-side benchmarks and the exhaustive oracle.

Every scheme keeps PPO-trained operators; only the provider changes. After a
short training run, each allocator's choice is scored on one frozen snapshot
against the best of all S^L allocations. Run: python3 demos/04_allocator_benchmarks.py
"""
from dataclasses import replace

from hdrl_ris.baselines import exhaustive_best, rollout_goal, standalone_tables
from hdrl_ris.config import build_config
from hdrl_ris.harness import make_provider, run_experiment
from hdrl_ris.smdp import decode_goal

EPISODES = 300
for allocator in ("distance", "greedy", "auction", "learned-1d", "centralized"):
    cfg = build_config({"allocator": allocator, "episodes": EPISODES}, preset="desk")
    exp = run_experiment(cfg, seed=0)
    tail = [r["reward"] for r in exp.records[-50:]]
    print(f"{allocator:>12}: mean sum-rate over the last 50 of {EPISODES} episodes {sum(tail) / 50:.3f}")

# oracle comparison on one frozen snapshot of a trained random-provider run
exp = run_experiment(build_config({"allocator": "random", "episodes": EPISODES}, preset="desk"), 0)
system = exp.system
best, table = exhaustive_best(system, seed=123)
print("\nexhaustive table (goal: reward):", {g: round(float(r), 3) for g, r in enumerate(table)})
print("best allocation:", best.tolist())
ctx = {"episode": system.episode, "topology": system.topology, **standalone_tables(system)}
for kind in ("distance", "greedy", "auction"):
    provider = make_provider(replace(exp.config, allocator=kind), 0)
    g, _ = provider.select(system.rp_state, ctx)
    reward = rollout_goal(system, g, 123)
    print(f"{kind:>9} picks {decode_goal(g, 2, 2).tolist()}: reward {reward:.3f} "
          f"({reward / table.max():.1%} of the oracle)")
