"""Training fixtures shared by the unit and acceptance tests."""
import numpy as np

from hdrl_ris.config import SystemConfig
from hdrl_ris.env import ChannelSet
from hdrl_ris.neural import Categorical
from hdrl_ris.ppo import PPOSettings, RpAgentHppo, RpAgentSeq
from hdrl_ris.seeding import derive_rng
from hdrl_ris.smdp import RPTransition


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_channels(rng, c: SystemConfig) -> ChannelSet:
    S, J, K, N, L, M = (c.num_ops, c.num_bs_per_op, c.num_users_per_op, c.num_antennas,
                        c.num_ris, c.elements_per_ris)
    return ChannelSet(crandn(rng, S, J, K, N), crandn(rng, S, J, L, M, N), crandn(rng, S, L, K, M))


def gae_direct(rewards, values, gamma, lam):
    """Advantages as the explicit double sum of discounted TD residuals."""
    n = len(rewards)
    delta = [rewards[j] + gamma * values[j + 1] - values[j] for j in range(n)]
    return np.array([sum((gamma * lam) ** (j - i) * delta[j] for j in range(i, n)) for i in range(n)])


ARM_REWARDS = np.array([0.2, 1.0, 0.5])
BEST_ARM = 1
# default provider step size (1e-4), with ten epochs and normalized advantages
BANDIT_SETTINGS = PPOSettings(normalize_advantages=True, epochs=10)


def best_arm_probability(agent, state) -> float:
    if isinstance(agent, RpAgentHppo):
        return float(agent.policy(state).probs[0, BEST_ARM])
    return float(Categorical(agent.actors[0].forward(state[None])).probs[0, BEST_ARM])


def run_bandit(kind: str, seed: int, max_updates: int = 2000, target: float = 0.9,
               hidden: int = 16, settings: PPOSettings = BANDIT_SETTINGS):
    """Train a provider agent on a stateless 3-armed bandit (S=3, L=1).

    Returns (updates used, final best-arm probability). Stops at ``target``.
    """
    cls = RpAgentHppo if kind == "hppo" else RpAgentSeq
    agent = cls(4, 3, 1, hidden, settings, derive_rng(seed, "bandit:init"),
                derive_rng(seed, "bandit:act"))
    state = np.full((2, 4), 0.5)  # constant, nonzero so the recurrent features are too
    noise = derive_rng(seed, "bandit:noise")
    prob = best_arm_probability(agent, state)
    while agent.updates < max_updates and prob < target:
        g, info = agent.select(state)
        r = ARM_REWARDS[g] + 0.1 * noise.standard_normal()
        extra = {k: v for k, v in info.items() if k != "log_prob"}
        if agent.observe(RPTransition(state, g, r, state, info["log_prob"], extra)) is not None:
            prob = best_arm_probability(agent, state)
    return agent.updates, prob


ACCEPTANCE_RESULTS: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    """Queue one PASS/FAIL line for the end-of-run summary and echo it."""
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
