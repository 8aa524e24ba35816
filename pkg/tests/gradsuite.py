"""Random finite-difference instances shared by the unit and acceptance tests.

Each case builds a fresh random instance from a seed and returns the worst
relative error between the analytic gradient and central differences.
Parameters are redrawn at unit-ish scale so no gradient entry is so small
that finite-difference round-off dominates it.
"""
import numpy as np

from hdrl_ris.baselines import CentralizedController
from hdrl_ris.config import SystemConfig
from hdrl_ris.neural import LSTM, BetaPolicy, Categorical, Dense, Network, grad_check
from hdrl_ris.ppo import (OpAgent, PPOSettings, RpAgentHppo, RpAgentSeq, critic_loss,
                          sequential_input, surrogate)

EPS = 0.2


def _randomize(net: Network, rng, scale=0.5):
    for p in net.parameters():
        p[...] = rng.normal(scale=scale, size=p.shape)


def _near_old(rng, new_lp):
    # behaviour log-probs close enough that every ratio sits inside the clip band
    return new_lp + rng.uniform(-0.05, 0.05, size=new_lp.shape)


def dense_case(seed: int, activation: str = "tanh") -> float:
    rng = np.random.default_rng(seed)
    layer = Dense(5, 4, activation, rng)
    layer.b[:] = rng.normal(size=4)
    net = Network([layer])
    x = rng.normal(size=(3, 5))
    proj = rng.normal(size=(3, 4))
    net.zero_grad()
    net.forward(x)
    dx = net.backward(proj)
    err = grad_check(net.parameters(), lambda: float(np.sum(proj * net.forward(x))),
                     [g.copy() for g in net.gradients()])
    return max(err, grad_check([x], lambda: float(np.sum(proj * net.forward(x))), [dx]))


def lstm_case(seed: int, steps: int = 10) -> float:
    rng = np.random.default_rng(seed)
    net = Network([LSTM(3, 4, rng)])
    _randomize(net, rng)
    x = rng.normal(size=(2, steps, 3))
    proj = rng.normal(size=(2, 4))
    net.zero_grad()
    net.forward(x)
    dx = net.backward(proj)
    loss = lambda: float(np.sum(proj * net.forward(x)))
    err = grad_check(net.parameters(), loss, [g.copy() for g in net.gradients()])
    return max(err, grad_check([x], loss, [dx]))


def categorical_case(seed: int) -> float:
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(4, 6))
    idx = rng.integers(0, 6, size=4)
    loss = lambda: float(Categorical(logits).log_prob(idx).sum())
    return grad_check([logits], loss, [Categorical(logits).log_prob_grad(idx)])


def beta_case(seed: int) -> float:
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(4, 6))
    a = rng.uniform(0.05, 0.95, size=(4, 3))
    loss = lambda: float(BetaPolicy(raw).log_prob(a).sum())
    return grad_check([raw], loss, [BetaPolicy(raw).log_prob_grad(a)])


def op_actor_case(seed: int) -> float:
    rng = np.random.default_rng(seed)
    agent = OpAgent(6, 3, 5, PPOSettings(), rng)
    _randomize(agent.actor, rng)
    obs = rng.normal(size=(6, 6))
    act = rng.uniform(0.05, 0.95, size=(6, 3))
    adv = rng.normal(size=6)
    old = _near_old(rng, agent.policy(obs).log_prob(act))
    agent.actor.zero_grad()
    agent.actor_objective(obs, act, old, adv)
    analytic = [g.copy() for g in agent.actor.gradients()]

    def loss():
        pi = BetaPolicy(agent.actor.forward(obs))
        return -surrogate(pi.log_prob(act), old, adv, EPS)[0]
    return grad_check(agent.actor.parameters(), loss, analytic)


def rp_actor_case(seed: int) -> float:
    rng = np.random.default_rng(seed)
    agent = RpAgentHppo(4, 2, 2, 5, PPOSettings(), rng)
    _randomize(agent.actor, rng)
    states = rng.normal(size=(5, 3, 4))
    goals = rng.integers(0, 4, size=5)
    adv = rng.normal(size=5)
    old = _near_old(rng, agent.policy(states).log_prob(goals))
    agent.actor.zero_grad()
    agent.actor_objective(states, goals, old, adv)
    analytic = [g.copy() for g in agent.actor.gradients()]

    def loss():
        pi = Categorical(agent.actor.forward(states))
        return -surrogate(pi.log_prob(goals), old, adv, EPS)[0]
    return grad_check(agent.actor.parameters(), loss, analytic)


def seq_actor_case(seed: int) -> float:
    rng = np.random.default_rng(seed)
    S, L = 2, 3
    agent = RpAgentSeq(4, S, L, 4, PPOSettings(), rng)
    states = rng.normal(size=(4, 3, 4))
    sub = rng.integers(1, S + 1, size=(4, L))
    adv = rng.normal(size=4)
    worst = 0.0
    for l, actor in enumerate(agent.actors):
        _randomize(actor, rng)
        inputs = sequential_input(states, sub[:, :l], S)
        idx = sub[:, l] - 1
        old = _near_old(rng, Categorical(actor.forward(inputs)).log_prob(idx))
        actor.zero_grad()
        agent.actor_objective(l, states, sub, old, adv)
        analytic = [g.copy() for g in actor.gradients()]

        def loss():
            pi = Categorical(actor.forward(inputs))
            return -surrogate(pi.log_prob(idx), old, adv, EPS)[0]
        worst = max(worst, grad_check(actor.parameters(), loss, analytic))
    return worst


def _critic_case(net: Network, inputs, rng) -> float:
    _randomize(net, rng)
    targets = rng.normal(size=inputs.shape[0])
    net.zero_grad()
    _, dv = critic_loss(net.forward(inputs)[:, 0], targets)
    net.backward(dv[:, None])
    analytic = [g.copy() for g in net.gradients()]
    return grad_check(net.parameters(), lambda: critic_loss(net.forward(inputs)[:, 0], targets)[0],
                      analytic)


def op_critic_case(seed: int) -> float:
    rng = np.random.default_rng(seed)
    agent = OpAgent(6, 3, 5, PPOSettings(), rng)
    return _critic_case(agent.critic, rng.normal(size=(6, 6)), rng)


def rp_critic_case(seed: int) -> float:
    rng = np.random.default_rng(seed)
    agent = RpAgentHppo(4, 2, 2, 5, PPOSettings(), rng)
    return _critic_case(agent.critic, rng.normal(size=(5, 3, 4)), rng)


def centralized_case(seed: int) -> float:
    rng = np.random.default_rng(seed)
    cfg = SystemConfig(num_ops=2, num_bs_per_op=1, num_users_per_op=1, num_antennas=1,
                       num_ris=1, elements_per_ris=1)
    ctrl = CentralizedController(cfg, 4, PPOSettings(), rng)
    agent = ctrl.agent
    _randomize(agent.actor, rng, scale=0.3)
    obs = rng.normal(size=(4, ctrl.obs_width))
    act = rng.uniform(0.05, 0.95, size=(4, ctrl.action_width))
    adv = rng.normal(size=4)
    old = _near_old(rng, agent.policy(obs).log_prob(act))
    agent.actor.zero_grad()
    agent.actor_objective(obs, act, old, adv)
    analytic = [g.copy() for g in agent.actor.gradients()]

    def loss():
        pi = BetaPolicy(agent.actor.forward(obs))
        return -surrogate(pi.log_prob(act), old, adv, EPS)[0]
    return grad_check(agent.actor.parameters(), loss, analytic)


CASES = {
    "dense_tanh": lambda s: dense_case(s, "tanh"),
    "dense_linear": lambda s: dense_case(s, "linear"),
    "lstm": lstm_case,
    "categorical_head": categorical_case,
    "beta_head": beta_case,
    "op_actor_loss": op_actor_case,
    "rp_actor_loss": rp_actor_case,
    "seq_actor_loss": seq_actor_case,
    "op_critic_loss": op_critic_case,
    "rp_critic_loss": rp_critic_case,
    "centralized_loss": centralized_case,
}
