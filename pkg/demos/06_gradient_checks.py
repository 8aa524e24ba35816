"""Hand-written backpropagation, checked against finite differences.

Builds a small recurrent provider actor, computes the clipped-surrogate
gradient analytically and compares every parameter entry with central
differences. Run: python3 demos/06_gradient_checks.py
"""
import numpy as np

from hdrl_ris.neural import Categorical, grad_check
from hdrl_ris.ppo import PPOSettings, RpAgentHppo, surrogate

rng = np.random.default_rng(0)
agent = RpAgentHppo(state_width=6, num_ops=2, num_ris=2, hidden=8, settings=PPOSettings(), rng=rng)
for p in agent.actor.parameters():  # move away from the near-zero output initialization
    p[...] = rng.normal(scale=0.5, size=p.shape)

states = rng.normal(size=(5, 4, 6))       # batch of 5 sequences, 4 steps each
goals = rng.integers(0, 4, size=5)
adv = rng.normal(size=5)
old = agent.policy(states).log_prob(goals) + rng.uniform(-0.05, 0.05, 5)

agent.actor.zero_grad()
objective = agent.actor_objective(states, goals, old, adv)
analytic = [g.copy() for g in agent.actor.gradients()]


def loss():
    pi = Categorical(agent.actor.forward(states))
    return -surrogate(pi.log_prob(goals), old, adv, 0.2)[0]


err = grad_check(agent.actor.parameters(), loss, analytic)
print(f"surrogate objective {objective:.4f}")
print(f"{agent.actor.num_params()} parameters (LSTM + 3 dense), worst relative error {err:.2e}")
print("layer widths:", agent.actor.widths())
