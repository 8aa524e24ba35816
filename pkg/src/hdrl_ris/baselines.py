"""Provider-side allocation benchmarks.

Operators stay PPO-trained in every scheme; only the provider changes.
All allocators break ties toward the lowest operator index.
"""
from __future__ import annotations

import copy

import numpy as np

from .config import SystemConfig
from .env import Topology, evaluate_op, phase_diagonals
from .neural import BetaPolicy, lstm_mlp, Adam
from .ppo import OpAgent, PPOSettings, _RpBase, _check_finite, surrogate
from .seeding import derive_rng
from .smdp import (HdrlSystem, OPTransition, build_op_observation, decode_goal,
                   decode_op_action, encode_goal, rp_reward)

MAX_EXHAUSTIVE_GOALS = 4096


def allocate_random(num_ops: int, num_ris: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(1, num_ops + 1, size=num_ris)


def mean_user_distances(topology: Topology) -> np.ndarray:
    """(L, S) mean distance from each RIS to the users of each OP."""
    d = np.linalg.norm(topology.ris_positions[:, None, None, :]
                       - topology.user_positions[None, :, :, :], axis=-1)
    return d.mean(axis=2)


def allocate_distance(topology: Topology) -> np.ndarray:
    return np.argmin(mean_user_distances(topology), axis=1) + 1


def allocate_greedy(rates: np.ndarray) -> np.ndarray:
    """``rates[l, s]``: OP s's rate with only RIS l under its control."""
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 2 or not np.all(np.isfinite(rates)):
        raise ValueError("need a complete (L, S) table of standalone rates")
    return np.argmax(rates, axis=1) + 1


def allocate_auction(bids: np.ndarray) -> np.ndarray:
    """Sealed-bid award of every RIS to its highest bidder."""
    bids = np.asarray(bids, dtype=float)
    if bids.ndim != 2 or not np.all(np.isfinite(bids)):
        raise ValueError("need a complete (L, S) table of bids")
    return np.argmax(bids, axis=1) + 1


def quantized_1d_goal(x: float, num_ops: int, num_ris: int) -> int:
    """Uniform quantization of x in (-1, 1) onto the S^L goal indices."""
    if not -1.0 < x < 1.0:
        raise ValueError(f"sample {x} outside (-1, 1)")
    n = num_ops ** num_ris
    return min(int(np.floor((x + 1.0) / 2.0 * n)), n - 1)


def standalone_tables(system: HdrlSystem) -> dict:
    """Per-RIS rates and gain bids from each OP's last action on the last channel draw.

    ``standalone_rates[l, s]``: RIS l under OP s's control, all other RISs at
    identity. ``bids[l, s]``: that rate minus OP s's rate with no RIS at all.
    Both are ``None`` before the first episode.
    """
    c = system.config
    if system.last_channels is None or any(a is None for a in system.last_actions):
        return {"standalone_rates": None, "bids": None}
    L, M, S = c.num_ris, c.elements_per_ris, c.num_ops
    rates = np.zeros((L, S))
    bids = np.zeros((L, S))
    for s in range(1, S + 1):
        phases, assoc, raw_beams = system.last_actions[s - 1]
        bare = evaluate_op(system.last_channels, np.zeros((L, M), dtype=complex), s, assoc,
                           raw_beams, c).rate
        for l in range(L):
            diag = np.ones((L, M), dtype=complex)
            diag[l] = np.exp(1j * phases[l])
            rates[l, s - 1] = evaluate_op(system.last_channels, diag, s, assoc, raw_beams, c).rate
            bids[l, s - 1] = rates[l, s - 1] - bare
    return {"standalone_rates": rates, "bids": bids}


def _snapshot(system: HdrlSystem, seed: int) -> HdrlSystem:
    sim = copy.copy(system)
    sim.op_agents = copy.deepcopy(system.op_agents)
    sim.prev_effective = list(system.prev_effective)
    sim.prev_assoc = list(system.prev_assoc)
    sim.last_actions = list(system.last_actions)
    sim.provider = None
    sim.learn = False
    sim.channel_rng = derive_rng(seed, "eval:channels")
    for s, agent in enumerate(sim.op_agents):
        agent.rng = derive_rng(seed, f"eval:op{s}")
    return sim


def rollout_goal(system: HdrlSystem, goal: int, seed: int, episodes: int = 1) -> float:
    """Mean provider reward of ``goal`` with OP policies frozen and fixed random streams."""
    sim = _snapshot(system, seed)
    return float(np.mean([sim.run_episode(goal).reward for _ in range(episodes)]))


def exhaustive_best(system: HdrlSystem, seed: int, episodes: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate every allocation on the same frozen snapshot; returns (best B, reward table)."""
    c = system.config
    n = c.num_ops ** c.num_ris
    if n > MAX_EXHAUSTIVE_GOALS:
        raise ValueError(f"{n} candidate allocations exceed the limit of {MAX_EXHAUSTIVE_GOALS}")
    table = np.array([rollout_goal(system, g, seed, episodes) for g in range(n)])
    return decode_goal(int(np.argmax(table)), c.num_ops, c.num_ris), table


class _Heuristic:
    uses = frozenset()

    def __init__(self, config: SystemConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng

    def _fallback(self) -> np.ndarray:
        return allocate_random(self.config.num_ops, self.config.num_ris, self.rng)

    def select(self, state, context):
        return encode_goal(self.allocate(context), self.config.num_ops), {"log_prob": 0.0}

    def observe(self, transition) -> None:
        pass


class RandomProvider(_Heuristic):
    def allocate(self, context):
        return self._fallback()


class DistanceProvider(_Heuristic):
    uses = frozenset({"topology"})

    def allocate(self, context):
        return allocate_distance(context["topology"])


class GreedyProvider(_Heuristic):
    uses = frozenset({"standalone_rates"})

    def allocate(self, context):
        table = context.get("standalone_rates")
        return self._fallback() if table is None else allocate_greedy(table)


class AuctionProvider(_Heuristic):
    uses = frozenset({"bids"})

    def allocate(self, context):
        bids = context.get("bids")
        return self._fallback() if bids is None else allocate_auction(bids)


class FixedProvider(_Heuristic):
    """Always the same goal (used by the no-RIS scheme, where allocation is moot)."""

    def __init__(self, config, rng, goal: int = 0):
        super().__init__(config, rng)
        self.goal = goal

    def allocate(self, context):
        return decode_goal(self.goal, self.config.num_ops, self.config.num_ris)


class OracleProvider(_Heuristic):
    """Exhaustive search on a frozen copy of the current system each episode."""
    uses = frozenset({"snapshot"})

    def __init__(self, config, rng, seed: int):
        super().__init__(config, rng)
        self.seed = seed

    def allocate(self, context):
        system = context["snapshot"]
        best, _ = exhaustive_best(system, self.seed + 7919 * context["episode"])
        return best


class RpAgent1d(_RpBase):
    """Provider emitting one continuous value in (-1, 1), quantized onto the goal space."""

    def __init__(self, state_width: int, num_ops: int, num_ris: int, hidden: int,
                 settings: PPOSettings, rng: np.random.Generator,
                 act_rng: np.random.Generator | None = None):
        super().__init__(state_width, hidden, settings, rng)
        self.num_ops, self.num_ris = num_ops, num_ris
        self.actor = lstm_mlp(state_width, hidden, 2, 3, rng, out_gain=0.01)
        self.actor_opt = Adam(self.actor, settings.actor_lr)
        self.rng = act_rng if act_rng is not None else rng

    def networks(self):
        return {"actor": self.actor, "critic": self.critic}

    def policy(self, state):
        states = state if state.ndim == 3 else state[None]
        return BetaPolicy(self.actor.forward(states))

    def select(self, state, context=None):
        pi = self.policy(state)
        a = pi.sample(self.rng)
        g = quantized_1d_goal(2.0 * float(a[0, 0]) - 1.0, self.num_ops, self.num_ris)
        return g, {"log_prob": float(pi.log_prob(a)[0]), "sample": float(a[0, 0])}

    def greedy(self, state) -> int:
        mean = float(self.policy(state).mean()[0, 0])
        return quantized_1d_goal(2.0 * mean - 1.0, self.num_ops, self.num_ris)

    def _update(self) -> dict:
        batch, states, adv, targets = self._prepare()
        samples = np.array([[t.extra["sample"]] for t in batch])
        old_lp = np.array([t.log_prob for t in batch])
        for _ in range(self.settings.epochs):
            self.actor.zero_grad()
            pi = BetaPolicy(self.actor.forward(states))
            a_loss, dlp = surrogate(pi.log_prob(samples), old_lp, adv, self.settings.clip_eps)
            _check_finite(a_loss)
            self.actor.backward(-(dlp[:, None] * pi.log_prob_grad(samples)))
            self.actor_opt.step()
            c_loss = self.critic_step(states, targets)
        return {"actor_loss": a_loss, "critic_loss": c_loss,
                "adv_mean": float(adv.mean()), "adv_std": float(adv.std())}


class CentralizedController:
    """One PPO agent observing every operator and emitting all actions plus the allocation.

    The allocation is re-chosen every time step from the last L action
    coordinates: b_l = 1 + floor(a_l * S).
    """

    def __init__(self, config: SystemConfig, hidden: int, settings: PPOSettings,
                 rng: np.random.Generator, act_rng: np.random.Generator | None = None):
        self.config = config
        self.obs_width = config.num_ops * config.op_obs_width
        self.action_width = config.num_ops * config.op_action_width + config.num_ris
        self.agent = OpAgent(self.obs_width, self.action_width, hidden, settings, rng, act_rng)
        self.goal = 0

    def observation(self, system: HdrlSystem) -> np.ndarray:
        return np.concatenate([build_op_observation(system.prev_effective[s], system.prev_assoc[s],
                                                    self.goal, self.config, system.scale)
                               for s in range(self.config.num_ops)])

    def split_action(self, a: np.ndarray):
        c = self.config
        d = c.op_action_width
        per_op = [a[s * d:(s + 1) * d] for s in range(c.num_ops)]
        alloc = np.minimum(1 + np.floor(a[c.num_ops * d:] * c.num_ops).astype(int), c.num_ops)
        return per_op, alloc

    def run_episode(self, system: HdrlSystem, learn: bool = True) -> dict:
        c = self.config
        S, T = c.num_ops, c.steps_per_episode
        rates = np.zeros((S, T))
        for t in range(T):
            channels = system.sample_channels()
            system.last_channels = channels
            obs = self.observation(system)
            action, log_prob = self.agent.act(obs)
            per_op, alloc = self.split_action(action)
            self.goal = encode_goal(alloc, S)
            for s in range(1, S + 1):
                phases, assoc, raw_beams = decode_op_action(per_op[s - 1], c)
                diag = phase_diagonals(alloc, phases, s, S)
                out = evaluate_op(channels, diag, s, assoc, raw_beams, c)
                rates[s - 1, t] = out.rate
                system.prev_effective[s - 1], system.prev_assoc[s - 1] = out.effective, out.assoc
                system.last_actions[s - 1] = (phases, assoc, raw_beams)
            tr = OPTransition(obs, action, float(rates[:, t].sum()), self.observation(system), log_prob)
            if learn:
                self.agent.observe(tr)
        system.episode += 1
        return {"goal": self.goal, "rates": rates, "reward": rp_reward(rates)}
