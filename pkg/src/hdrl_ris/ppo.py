"""Clipped-surrogate actor-critic agents for both levels of the hierarchy.

Losses are written as objectives to maximize (actor) or minimize (critic);
gradients are pushed into the networks by hand and applied with Adam.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, polygamma

from .neural import Adam, BetaPolicy, Categorical, Network, lstm_mlp, mlp
from .smdp import OPTransition, RPTransition, TransitionBuffer, decode_goal, encode_goal


class TrainingDivergenceError(RuntimeError):
    """A loss or probability ratio became non-finite."""


class BufferNotFullError(RuntimeError):
    """An update was requested before the buffer reached capacity."""


@dataclass(frozen=True)
class PPOSettings:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    buffer_size: int = 30
    epochs: int = 1
    entropy_coef: float = 0.0
    normalize_advantages: bool = False


def gae(rewards, values, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantages; ``values`` carries one extra bootstrap entry."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != (len(rewards) + 1,):
        raise ValueError("values must have exactly one more entry than rewards")
    deltas = rewards + gamma * values[1:] - values[:-1]
    adv = np.zeros_like(rewards)
    acc = 0.0
    for i in reversed(range(len(rewards))):
        acc = deltas[i] + gamma * lam * acc
        adv[i] = acc
    return adv


def clip_u(adv, eps: float):
    adv = np.asarray(adv, dtype=float)
    out = np.where(adv >= 0, (1.0 + eps) * adv, (1.0 - eps) * adv)
    return float(out) if out.ndim == 0 else out


def surrogate(new_log_prob, old_log_prob, adv, eps: float) -> tuple[float, np.ndarray]:
    """Mean of min(ratio * A, u(A)) and its gradient w.r.t. ``new_log_prob``."""
    new_log_prob = np.asarray(new_log_prob, dtype=float)
    adv = np.asarray(adv, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(new_log_prob - np.asarray(old_log_prob, dtype=float))
    if not np.all(np.isfinite(ratio)):
        raise TrainingDivergenceError("non-finite policy ratio")
    unclipped = ratio * adv
    clipped = clip_u(adv, eps)
    active = unclipped <= clipped
    n = len(adv)
    value = float(np.mean(np.where(active, unclipped, clipped)))
    grad = np.where(active, unclipped, 0.0) / n
    return value, grad


def actor_loss(new_log_prob, old_log_prob, adv, eps: float) -> float:
    return surrogate(new_log_prob, old_log_prob, adv, eps)[0]


def critic_loss(values, targets) -> tuple[float, np.ndarray]:
    """Mean squared TD residual against fixed targets, and d/d values."""
    values = np.asarray(values, dtype=float)
    resid = np.asarray(targets, dtype=float) - values
    return float(np.mean(resid ** 2)), -2.0 * resid / len(values)


def td_targets(rewards, next_values, gamma: float) -> np.ndarray:
    return np.asarray(rewards, dtype=float) + gamma * np.asarray(next_values, dtype=float)


def beta_entropy_grad(policy: BetaPolicy) -> np.ndarray:
    """d entropy / d raw for a batch of Beta policies (per-sample sums)."""
    a, b = policy.alpha, policy.beta
    tri_ab = polygamma(1, a + b)
    ga = -(a - 1.0) * polygamma(1, a) + (a + b - 2.0) * tri_ab
    gb = -(b - 1.0) * polygamma(1, b) + (a + b - 2.0) * tri_ab
    d = a.shape[1]
    return np.concatenate([ga * expit(policy.raw[:, :d]), gb * expit(policy.raw[:, d:])], axis=1)


def _check_finite(*values) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise TrainingDivergenceError("non-finite loss")


class _ActorCritic:
    """Shared buffer, critic and advantage plumbing."""

    critic: Network

    def __init__(self, settings: PPOSettings):
        self.settings = settings
        self.buffer = TransitionBuffer(settings.buffer_size)
        self.last_stats: dict[str, float] = {}
        self.updates = 0

    def _values(self, inputs: np.ndarray) -> np.ndarray:
        return self.critic.forward(inputs)[:, 0]

    def _advantages(self, rewards, values, bootstrap) -> np.ndarray:
        s = self.settings
        adv = gae(rewards, np.append(values, bootstrap), s.gamma, s.gae_lambda)
        if s.normalize_advantages and len(adv) > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        return adv

    def critic_step(self, inputs: np.ndarray, targets: np.ndarray) -> float:
        self.critic.zero_grad()
        values = self._values(inputs)
        loss, dv = critic_loss(values, targets)
        _check_finite(loss)
        self.critic.backward(dv[:, None])
        self.critic_opt.step()
        return loss

    def observe(self, transition) -> dict | None:
        self.buffer.append(transition)
        if self.buffer.full:
            return self.update()
        return None

    def update(self) -> dict:
        if not self.buffer.full:
            raise BufferNotFullError(f"buffer holds {len(self.buffer)} of {self.buffer.capacity}")
        start = time.perf_counter()
        stats = self._update()
        self.buffer.clear()
        self.updates += 1
        stats["update_time"] = time.perf_counter() - start
        self.last_stats = stats
        return stats

    def _update(self) -> dict:
        raise NotImplementedError

    def networks(self) -> dict[str, Network]:
        raise NotImplementedError

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, net in self.networks().items():
            out.update({f"{prefix}.{k}": v for k, v in net.state_dict().items()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for prefix, net in self.networks().items():
            sub = {k[len(prefix) + 1:]: v for k, v in state.items() if k.startswith(prefix + ".")}
            net.load_state_dict(sub)


class OpAgent(_ActorCritic):
    """Operator agent: dense actor with a Beta head, dense critic."""

    def __init__(self, obs_width: int, action_width: int, hidden: int, settings: PPOSettings,
                 rng: np.random.Generator, act_rng: np.random.Generator | None = None,
                 n_layers: int = 4):
        super().__init__(settings)
        widths = [obs_width] + [hidden] * (n_layers - 1)
        self.actor = mlp(widths + [2 * action_width], rng, out_gain=0.01)
        self.critic = mlp(widths + [1], rng, out_gain=1.0)
        self.actor_opt = Adam(self.actor, settings.actor_lr)
        self.critic_opt = Adam(self.critic, settings.critic_lr)
        self.rng = act_rng if act_rng is not None else rng
        self.obs_width, self.action_width = obs_width, action_width

    def networks(self):
        return {"actor": self.actor, "critic": self.critic}

    def policy(self, obs: np.ndarray) -> BetaPolicy:
        return BetaPolicy(self.actor.forward(np.atleast_2d(obs)))

    def act(self, obs: np.ndarray) -> tuple[np.ndarray, float]:
        pi = self.policy(obs)
        a = pi.sample(self.rng)
        return a[0], float(pi.log_prob(a)[0])

    def act_mean(self, obs: np.ndarray) -> np.ndarray:
        return self.policy(obs).mean()[0]

    def actor_objective(self, obs, actions, old_log_prob, adv) -> float:
        """Clipped surrogate (plus optional entropy bonus); leaves -d/dtheta in actor grads."""
        raw = self.actor.forward(obs)
        pi = BetaPolicy(raw)
        new_lp = pi.log_prob(actions)
        value, dlp = surrogate(new_lp, old_log_prob, adv, self.settings.clip_eps)
        draw = dlp[:, None] * pi.log_prob_grad(actions)
        if self.settings.entropy_coef:
            value += self.settings.entropy_coef * float(pi.entropy().mean())
            draw += self.settings.entropy_coef * beta_entropy_grad(pi) / len(adv)
        _check_finite(value)
        self.actor.backward(-draw)
        return value

    def _update(self) -> dict:
        batch = list(self.buffer)
        obs = np.stack([t.obs for t in batch])
        actions = np.stack([t.action for t in batch])
        rewards = np.array([t.reward for t in batch])
        old_lp = np.array([t.log_prob for t in batch])
        next_obs = np.stack([t.next_obs for t in batch])
        values = self._values(obs)
        next_values = self._values(next_obs)
        adv = self._advantages(rewards, values, next_values[-1])
        targets = td_targets(rewards, next_values, self.settings.gamma)
        for _ in range(self.settings.epochs):
            self.actor.zero_grad()
            a_loss = self.actor_objective(obs, actions, old_lp, adv)
            self.actor_opt.step()
            c_loss = self.critic_step(obs, targets)
        return {"actor_loss": a_loss, "critic_loss": c_loss,
                "adv_mean": float(adv.mean()), "adv_std": float(adv.std())}


def _stack_states(batch: list[RPTransition]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([t.state for t in batch]), np.stack([t.next_state for t in batch])


class _RpBase(_ActorCritic):
    uses = frozenset()

    def __init__(self, state_width: int, hidden: int, settings: PPOSettings, rng):
        super().__init__(settings)
        self.critic = lstm_mlp(state_width, hidden, 1, 3, rng)
        self.critic_opt = Adam(self.critic, settings.critic_lr)

    def _prepare(self):
        batch = list(self.buffer)
        states, next_states = _stack_states(batch)
        rewards = np.array([t.reward for t in batch])
        values = self._values(states)
        next_values = self._values(next_states)
        adv = self._advantages(rewards, values, next_values[-1])
        targets = td_targets(rewards, next_values, self.settings.gamma)
        return batch, states, adv, targets


class RpAgentHppo(_RpBase):
    """Provider agent with a single categorical head over all S^L goals."""

    def __init__(self, state_width: int, num_ops: int, num_ris: int, hidden: int,
                 settings: PPOSettings, rng: np.random.Generator,
                 act_rng: np.random.Generator | None = None):
        super().__init__(state_width, hidden, settings, rng)
        self.num_ops, self.num_ris = num_ops, num_ris
        self.actor = lstm_mlp(state_width, hidden, num_ops ** num_ris, 3, rng, out_gain=0.01)
        self.actor_opt = Adam(self.actor, settings.actor_lr)
        self.rng = act_rng if act_rng is not None else rng

    def networks(self):
        return {"actor": self.actor, "critic": self.critic}

    def policy(self, state: np.ndarray) -> Categorical:
        states = state if state.ndim == 3 else state[None]
        return Categorical(self.actor.forward(states))

    def select(self, state: np.ndarray, context: dict | None = None) -> tuple[int, dict]:
        pi = self.policy(state)
        g = pi.sample(self.rng)
        return int(g[0]), {"log_prob": float(pi.log_prob(g)[0])}

    def greedy(self, state: np.ndarray) -> int:
        return int(self.policy(state).mode()[0])

    def actor_objective(self, states, goals, old_log_prob, adv) -> float:
        pi = Categorical(self.actor.forward(states))
        value, dlp = surrogate(pi.log_prob(goals), old_log_prob, adv, self.settings.clip_eps)
        dlogits = dlp[:, None] * pi.log_prob_grad(goals)
        if self.settings.entropy_coef:
            value += self.settings.entropy_coef * float(pi.entropy().mean())
            dlogits += self.settings.entropy_coef * pi.entropy_grad() / len(adv)
        _check_finite(value)
        self.actor.backward(-dlogits)
        return value

    def _update(self) -> dict:
        batch, states, adv, targets = self._prepare()
        goals = np.array([t.goal for t in batch])
        old_lp = np.array([t.log_prob for t in batch])
        for _ in range(self.settings.epochs):
            self.actor.zero_grad()
            a_loss = self.actor_objective(states, goals, old_lp, adv)
            self.actor_opt.step()
            c_loss = self.critic_step(states, targets)
        return {"actor_loss": a_loss, "critic_loss": c_loss, "advantages": adv,
                "adv_mean": float(adv.mean()), "adv_std": float(adv.std())}


def sequential_input(states: np.ndarray, prior: np.ndarray, num_ops: int) -> np.ndarray:
    """Append the already chosen sub-goals (1-based, scaled by 1/S) to every time step."""
    states = states if states.ndim == 3 else states[None]
    prior = np.atleast_2d(np.asarray(prior, dtype=float))
    if prior.shape[1] == 0:
        return states
    extra = np.broadcast_to((prior / num_ops)[:, None, :],
                            (states.shape[0], states.shape[1], prior.shape[1]))
    return np.concatenate([states, extra], axis=2)


def sub_transitions(transition: RPTransition, num_ops: int, num_ris: int) -> list[tuple]:
    """Decomposed (o^l, g^l, r^l) steps of one provider transition; only the last is rewarded."""
    b = decode_goal(transition.goal, num_ops, num_ris)
    out = []
    for l in range(num_ris):
        obs = sequential_input(transition.state, b[None, :l], num_ops)[0]
        out.append((obs, int(b[l]), transition.reward if l == num_ris - 1 else 0.0))
    return out


class RpAgentSeq(_RpBase):
    """Provider agent with L chained actors, each choosing one RIS's operator."""

    def __init__(self, state_width: int, num_ops: int, num_ris: int, hidden: int,
                 settings: PPOSettings, rng: np.random.Generator,
                 act_rng: np.random.Generator | None = None):
        super().__init__(state_width, hidden, settings, rng)
        self.num_ops, self.num_ris = num_ops, num_ris
        self.actors = [lstm_mlp(state_width + l, hidden, num_ops, 3, rng, out_gain=0.01)
                       for l in range(num_ris)]
        self.actor_opts = [Adam(a, settings.actor_lr) for a in self.actors]
        self.rng = act_rng if act_rng is not None else rng

    def networks(self):
        nets = {f"actor{l}": a for l, a in enumerate(self.actors)}
        nets["critic"] = self.critic
        return nets

    def _choose(self, state: np.ndarray, greedy: bool):
        chosen = np.zeros((1, 0), dtype=int)
        log_probs = []
        for actor in self.actors:
            pi = Categorical(actor.forward(sequential_input(state, chosen, self.num_ops)))
            idx = pi.mode() if greedy else pi.sample(self.rng)
            log_probs.append(float(pi.log_prob(idx)[0]))
            chosen = np.concatenate([chosen, (idx + 1)[:, None]], axis=1)
        return chosen[0], log_probs

    def select(self, state: np.ndarray, context: dict | None = None) -> tuple[int, dict]:
        b, log_probs = self._choose(state, greedy=False)
        return encode_goal(b, self.num_ops), {"log_prob": float(sum(log_probs)),
                                              "sub_goals": b.tolist(), "sub_log_probs": log_probs}

    def act(self, state: np.ndarray):
        """Sub-goals, their log-probs and the assembled goal index."""
        g, info = self.select(state)
        return g, np.array(info["sub_goals"]), np.array(info["sub_log_probs"])

    def greedy(self, state: np.ndarray) -> int:
        return encode_goal(self._choose(state, greedy=True)[0], self.num_ops)

    def actor_objective(self, l: int, states, subgoals, old_log_prob, adv) -> float:
        """Clipped surrogate of actor ``l`` driven by the shared top-level advantage."""
        actor = self.actors[l]
        pi = Categorical(actor.forward(sequential_input(states, subgoals[:, :l], self.num_ops)))
        idx = subgoals[:, l] - 1
        value, dlp = surrogate(pi.log_prob(idx), old_log_prob, adv, self.settings.clip_eps)
        dlogits = dlp[:, None] * pi.log_prob_grad(idx)
        if self.settings.entropy_coef:
            value += self.settings.entropy_coef * float(pi.entropy().mean())
            dlogits += self.settings.entropy_coef * pi.entropy_grad() / len(adv)
        _check_finite(value)
        actor.backward(-dlogits)
        return value

    def _update(self) -> dict:
        batch, states, adv, targets = self._prepare()
        subgoals = np.stack([decode_goal(t.goal, self.num_ops, self.num_ris) for t in batch])
        old = np.array([t.extra["sub_log_probs"] for t in batch])
        for _ in range(self.settings.epochs):
            total = 0.0
            for l, (actor, opt) in enumerate(zip(self.actors, self.actor_opts)):
                actor.zero_grad()
                total += self.actor_objective(l, states, subgoals, old[:, l], adv)
                opt.step()
            c_loss = self.critic_step(states, targets)
        return {"actor_loss": total, "critic_loss": c_loss, "advantages": adv,
                "adv_mean": float(adv.mean()), "adv_std": float(adv.std())}


def head_parameter_count(agent) -> int:
    """Weights plus biases of the provider's output layer(s)."""
    actors = agent.actors if hasattr(agent, "actors") else [agent.actor]
    return sum(a.layers[-1].W.size + a.layers[-1].b.size for a in actors)
