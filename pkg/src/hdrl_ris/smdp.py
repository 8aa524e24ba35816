"""Two-time-scale interaction between the RIS provider and the operators.

The provider acts once per episode on a summary of the previous episode
(per-step information matrices U = H^H W of every operator); each operator
acts every time step on its own previous-step equivalent channels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Protocol

import numpy as np

from .config import SystemConfig
from .env import (ChannelModel, ChannelSet, OpOutcome, Topology, check_allocation, evaluate_op,
                  phase_diagonals, sample_topology)
from .seeding import derive_rng


def info_matrix(served: np.ndarray, beams: np.ndarray) -> np.ndarray:
    """U = H^H W (K x K) from the served-channel matrix H (N x K) and beams W (N x K)."""
    served, beams = np.asarray(served), np.asarray(beams)
    if served.ndim != 2 or served.shape != beams.shape:
        raise ValueError(f"H and W must share an N x K shape, got {served.shape} and {beams.shape}")
    return served.conj().T @ beams


def encode_goal(alloc, num_ops: int) -> int:
    """Base-S positional code of a 1-based allocation, RIS 1 least significant."""
    b = check_allocation(alloc, num_ops)
    return int(sum(int(d - 1) * num_ops ** i for i, d in enumerate(b)))


def decode_goal(g: int, num_ops: int, num_ris: int) -> np.ndarray:
    if not 0 <= g < num_ops ** num_ris:
        raise ValueError(f"goal index {g} outside [0, {num_ops ** num_ris})")
    digits = np.empty(num_ris, dtype=int)
    for i in range(num_ris):
        g, digits[i] = divmod(g, num_ops)
    return digits + 1


def _place_values(num_ops: int, num_ris: int) -> np.ndarray:
    if num_ops < 1 or num_ris < 1:
        raise ValueError("need at least one OP and one RIS")
    if num_ris * np.log2(num_ops) >= 63:
        raise ValueError("goal space too large for the vectorized codec")
    return num_ops ** np.arange(num_ris, dtype=np.int64)


def decode_goals(goals, num_ops: int, num_ris: int) -> np.ndarray:
    """Vectorized ``decode_goal``: (n,) indices to an (n, L) array of 1-based owners."""
    place = _place_values(num_ops, num_ris)
    g = np.asarray(goals, dtype=np.int64)
    if g.ndim != 1 or np.any(g < 0) or np.any(g >= place[-1] * num_ops):
        raise ValueError("goal indices must be a 1-D array inside the goal space")
    return (g[:, None] // place) % num_ops + 1


def encode_goals(allocs, num_ops: int) -> np.ndarray:
    """Vectorized ``encode_goal`` over the rows of an (n, L) allocation array."""
    b = np.asarray(allocs)
    if b.ndim != 2 or not np.issubdtype(b.dtype, np.integer):
        raise ValueError("allocations must be an (n, L) integer array")
    if np.any(b < 1) or np.any(b > num_ops):
        raise ValueError(f"allocation entries must lie in 1..{num_ops}")
    return (b.astype(np.int64) - 1) @ _place_values(num_ops, b.shape[1])


def zero_rp_state(config: SystemConfig) -> np.ndarray:
    return np.zeros((config.steps_per_episode, config.rp_state_width))


def build_rp_state(uploads: list[np.ndarray], scale: float = 1.0) -> np.ndarray:
    """Stack per-OP information matrices (each T x K x K) into a T x 2*sum(K^2) sequence."""
    if not uploads or any(u is None for u in uploads):
        raise ValueError("every OP must upload its information matrices")
    steps = {u.shape[0] for u in uploads}
    if len(steps) != 1:
        raise ValueError("uploads cover different numbers of time steps")
    parts = []
    for u in uploads:
        flat = u.reshape(u.shape[0], -1) * scale
        parts += [flat.real, flat.imag]
    return np.concatenate(parts, axis=1)


def goal_one_hot(g: int, config: SystemConfig) -> np.ndarray:
    b = decode_goal(g, config.num_ops, config.num_ris)
    hot = np.zeros((config.num_ris, config.num_ops))
    hot[np.arange(config.num_ris), b - 1] = 1.0
    return hot.ravel()


def build_op_observation(effective_prev: np.ndarray | None, assoc_prev: np.ndarray | None, g: int,
                         config: SystemConfig, scale: float = 1.0) -> np.ndarray:
    """[Re H_1, Im H_1, ..., Re H_K, Im H_K, A / J, one-hot goal].

    ``effective_prev`` is (K, N, J); ``None`` (first step of a run) zero-fills
    the channel and association fields.
    """
    n, j, k = config.num_antennas, config.num_bs_per_op, config.num_users_per_op
    if effective_prev is None:
        chan = np.zeros(2 * n * j * k)
    else:
        h = effective_prev.reshape(k, n * j) * scale
        chan = np.concatenate([h.real, h.imag], axis=1).ravel()
    assoc = np.zeros(k) if assoc_prev is None else np.asarray(assoc_prev, dtype=float) / j
    return np.concatenate([chan, assoc, goal_one_hot(g, config)])


def decode_op_action(raw: np.ndarray, config: SystemConfig):
    """Map a (0,1)^d action to (phases (L, M), association (K,), raw beams (N, K))."""
    raw = np.asarray(raw, dtype=float).ravel()
    if raw.size != config.op_action_width:
        raise ValueError(f"OP action must have {config.op_action_width} entries, got {raw.size}")
    l, m, k, n, j = (config.num_ris, config.elements_per_ris, config.num_users_per_op,
                     config.num_antennas, config.num_bs_per_op)
    phases = 2.0 * np.pi * raw[:l * m].reshape(l, m)
    assoc = np.minimum(1 + np.floor(raw[l * m:l * m + k] * j).astype(int), j)
    beam = 2.0 * raw[l * m + k:] - 1.0
    raw_beams = beam[:n * k].reshape(n, k) + 1j * beam[n * k:].reshape(n, k)
    return phases, assoc, raw_beams


def rp_reward(rates: np.ndarray) -> float:
    """Mean over time steps of the summed operator rates; ``rates`` is S x T."""
    rates = np.asarray(rates, dtype=float)
    return float(rates.sum() / rates.shape[1])


@dataclass
class OPTransition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    log_prob: float


@dataclass
class RPTransition:
    state: np.ndarray
    goal: int
    reward: float
    next_state: np.ndarray
    log_prob: float
    extra: dict[str, Any] = field(default_factory=dict)


class TransitionBuffer:
    """Fixed-capacity list of transitions, iterated in insertion order."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: list = []

    def append(self, item) -> None:
        if len(self._items) >= self.capacity:
            raise OverflowError("transition buffer is full")
        self._items.append(item)

    @property
    def full(self) -> bool:
        return len(self._items) == self.capacity

    def clear(self) -> None:
        self._items.clear()

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator:
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]


@dataclass(frozen=True)
class Upload:
    """What one operator shares with the provider at the end of an episode."""
    info_matrices: np.ndarray  # (T, K, K) complex
    mean_rate: float


class OpPolicy(Protocol):
    def act(self, obs: np.ndarray) -> tuple[np.ndarray, float]: ...
    def observe(self, transition: OPTransition) -> None: ...


class Provider(Protocol):
    """Anything that picks the episode goal.

    ``uses`` lists extra inputs beyond the provider state that the provider
    needs: any of ``"topology"``, ``"standalone_rates"``, ``"bids"``,
    ``"snapshot"``. Learned providers declare none.
    """
    uses: frozenset

    def select(self, state: np.ndarray, context: dict) -> tuple[int, dict]: ...
    def observe(self, transition: RPTransition) -> None: ...


@dataclass
class EpisodeResult:
    episode: int
    goal: int
    rates: np.ndarray            # (S, T)
    reward: float
    rp_transition: RPTransition
    op_transitions: list[list[OPTransition]]
    uploads: list[Upload]


class HdrlSystem:
    """Environment plus the interaction loop of one provider and S operators."""

    def __init__(self, config: SystemConfig, provider: Provider, op_agents: list, seed: int,
                 reflection: bool = True, learn: bool = True):
        if len(op_agents) != config.num_ops:
            raise ValueError("need one OP agent per operator")
        self.config = config
        self.provider = provider
        self.op_agents = op_agents
        self.reflection = reflection
        self.learn = learn
        self.topology: Topology = sample_topology(config, derive_rng(seed, "topology"))
        self.channel_model = ChannelModel(self.topology, config)
        self.channel_rng = derive_rng(seed, "channels")
        self.scale = 1.0 / np.sqrt(config.noise_power)
        self.rp_state = zero_rp_state(config)
        self.prev_effective: list[np.ndarray | None] = [None] * config.num_ops
        self.prev_assoc: list[np.ndarray | None] = [None] * config.num_ops
        self.last_channels: ChannelSet | None = None
        self.last_actions: list[tuple[np.ndarray, np.ndarray, np.ndarray] | None] = [None] * config.num_ops
        self.episode = 0

    def sample_channels(self) -> ChannelSet:
        ch = self.channel_model.sample(self.channel_rng)
        return ch if self.reflection else ch.without_reflection()

    def provider_context(self) -> dict:
        uses = getattr(self.provider, "uses", frozenset())
        ctx: dict[str, Any] = {"episode": self.episode}
        if "topology" in uses:
            ctx["topology"] = self.topology
        if "standalone_rates" in uses or "bids" in uses:
            from .baselines import standalone_tables
            ctx.update(standalone_tables(self))
        if "snapshot" in uses:
            ctx["snapshot"] = self
        return ctx

    def op_step(self, s: int, alloc: np.ndarray, g: int, channels: ChannelSet, obs: np.ndarray):
        """Act, transmit and observe for OP ``s`` (1-based). Returns (action, log_prob, outcome)."""
        action, log_prob = self.op_agents[s - 1].act(obs)
        phases, assoc, raw_beams = decode_op_action(action, self.config)
        diag = phase_diagonals(alloc, phases, s, self.config.num_ops)
        outcome = evaluate_op(channels, diag, s, assoc, raw_beams, self.config)
        self.last_actions[s - 1] = (phases, assoc, raw_beams)
        return action, log_prob, outcome

    def observation(self, s: int, g: int) -> np.ndarray:
        return build_op_observation(self.prev_effective[s - 1], self.prev_assoc[s - 1], g,
                                    self.config, self.scale)

    def run_episode(self, goal: int | None = None) -> EpisodeResult:
        """One episode of the loop; ``goal`` forces the allocation (provider is bypassed)."""
        c = self.config
        S, T = c.num_ops, c.steps_per_episode
        state = self.rp_state
        if goal is None:
            goal, info = self.provider.select(state, self.provider_context())
        else:
            info = {"log_prob": 0.0}
        alloc = decode_goal(goal, S, c.num_ris)
        rates = np.zeros((S, T))
        infos = np.zeros((S, T, c.num_users_per_op, c.num_users_per_op), dtype=complex)
        op_transitions: list[list[OPTransition]] = [[] for _ in range(S)]
        for t in range(T):
            channels = self.sample_channels()
            self.last_channels = channels
            for s in range(1, S + 1):
                obs = self.observation(s, goal)
                action, log_prob, out = self.op_step(s, alloc, goal, channels, obs)
                rates[s - 1, t] = out.rate
                infos[s - 1, t] = info_matrix(out.served_channels, out.beams)
                self.prev_effective[s - 1], self.prev_assoc[s - 1] = out.effective, out.assoc
                tr = OPTransition(obs, action, out.rate, self.observation(s, goal), log_prob)
                op_transitions[s - 1].append(tr)
                if self.learn:
                    self.op_agents[s - 1].observe(tr)
        uploads = [Upload(infos[s], float(rates[s].mean())) for s in range(S)]
        reward = float(sum(u.mean_rate for u in uploads))
        next_state = build_rp_state([u.info_matrices for u in uploads], self.scale)
        rp_tr = RPTransition(state, goal, reward, next_state, float(info.get("log_prob", 0.0)),
                             {k: v for k, v in info.items() if k != "log_prob"})
        if self.learn:
            self.provider.observe(rp_tr)
        self.rp_state = next_state
        result = EpisodeResult(self.episode, goal, rates, reward, rp_tr, op_transitions, uploads)
        self.episode += 1
        return result


def run_episode(system: HdrlSystem, goal: int | None = None) -> EpisodeResult:
    return system.run_episode(goal)
