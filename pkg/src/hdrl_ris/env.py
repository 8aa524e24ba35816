"""Multi-RIS, multi-operator downlink simulator.

Array conventions (0-based indices, OP/BS labels in allocation vectors are
1-based as in the model):

* ``direct[s, j, k]``      -> BS j of OP s to user k, shape ``(N,)``
* ``bs_ris[s, j, l]``      -> BS j of OP s to RIS l, shape ``(M, N)``
* ``ris_user[s, l, k]``    -> RIS l to user k of OP s, shape ``(M,)``
* effective channels of one OP: ``(K, N, J)``; ``H[k][:, j]`` is h_{j,k}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


class DegenerateBeamError(ValueError):
    """A BS has associated users but an all-zero group of beam columns."""


@dataclass(frozen=True)
class Topology:
    bs_positions: np.ndarray    # (S, J, 2)
    ris_positions: np.ndarray   # (L, 2)
    user_positions: np.ndarray  # (S, K, 2)


@dataclass(frozen=True)
class ChannelSet:
    direct: np.ndarray    # (S, J, K, N)
    bs_ris: np.ndarray    # (S, J, L, M, N)
    ris_user: np.ndarray  # (S, L, K, M)

    def without_reflection(self) -> "ChannelSet":
        return ChannelSet(self.direct, np.zeros_like(self.bs_ris), np.zeros_like(self.ris_user))


@dataclass(frozen=True)
class OpOutcome:
    """Everything one OP observes after transmitting in one time step."""
    effective: np.ndarray  # (K, N, J)
    beams: np.ndarray      # (N, K) normalized
    assoc: np.ndarray      # (K,) 1-based BS labels
    sinr: np.ndarray       # (K,)
    rate: float

    @property
    def served_channels(self) -> np.ndarray:
        """H_s: column k is the channel of user k from its serving BS, (N, K)."""
        k = np.arange(len(self.assoc))
        return self.effective[k, :, self.assoc - 1].T


def sample_topology(config: SystemConfig, rng: np.random.Generator) -> Topology:
    s, j, k, l = config.num_ops, config.num_bs_per_op, config.num_users_per_op, config.num_ris
    theta = rng.uniform(0.0, np.pi, size=(s, j))
    bs = config.bs_radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    # area-uniform radius over the half annulus
    r2 = rng.uniform(config.user_inner_radius ** 2, config.user_outer_radius ** 2, size=(s, k))
    phi = rng.uniform(0.0, np.pi, size=(s, k))
    users = np.sqrt(r2)[..., None] * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    xs = np.linspace(-config.ris_half_span, config.ris_half_span, l) if l > 1 else np.zeros(1)
    ris = np.stack([xs, np.zeros(l)], axis=-1)
    return Topology(bs, ris, users)


def path_loss(d, alpha: float, c0: float, d0: float):
    """Linear gain C0 * (d / d0) ** -alpha."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0) or d0 <= 0:
        raise ValueError("distances must be positive")
    out = c0 * (d / d0) ** (-alpha)
    return float(out) if out.ndim == 0 else out


def rician_weights(kappa: float) -> tuple[float, float]:
    """(LoS, NLoS) amplitude weights; their squares sum to one."""
    return np.sqrt(kappa / (kappa + 1.0)), np.sqrt(1.0 / (kappa + 1.0))


def ula_response(n: int, angle) -> np.ndarray:
    """Half-wavelength ULA steering vector(s) along the x-axis, unit-modulus entries."""
    angle = np.asarray(angle, dtype=float)
    return np.exp(-1j * np.pi * np.arange(n) * np.cos(angle)[..., None])


def _angle(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    v = dst - src
    return np.arctan2(v[..., 1], v[..., 0])


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


class ChannelModel:
    """Static large-scale state (path loss, LoS) for a topology.

    LoS components are fixed for the run; every ``sample`` call redraws the
    NLoS parts (block fading, one draw per time step). Distances below the
    reference distance are floored at it.
    """

    def __init__(self, topology: Topology, config: SystemConfig):
        self.topology = topology
        self.config = config
        c = config
        bs, ris, users = topology.bs_positions, topology.ris_positions, topology.user_positions
        floor = c.reference_distance

        d_bu = np.linalg.norm(bs[:, :, None, :] - users[:, None, :, :], axis=-1)      # (S,J,K)
        d_br = np.linalg.norm(bs[:, :, None, :] - ris[None, None, :, :], axis=-1)     # (S,J,L)
        d_ru = np.linalg.norm(ris[None, :, None, :] - users[:, None, :, :], axis=-1)  # (S,L,K)
        self.distances = (d_bu, d_br, d_ru)
        self.gain_bu = np.sqrt(path_loss(np.maximum(d_bu, floor), c.alpha_bu, c.pathloss_c0, floor))
        self.gain_br = np.sqrt(path_loss(np.maximum(d_br, floor), c.alpha_br, c.pathloss_c0, floor))
        self.gain_ru = np.sqrt(path_loss(np.maximum(d_ru, floor), c.alpha_ru, c.pathloss_c0, floor))

        n, m = c.num_antennas, c.elements_per_ris
        self.los_bu = ula_response(n, _angle(bs[:, :, None, :], users[:, None, :, :]))   # (S,J,K,N)
        dep = ula_response(n, _angle(bs[:, :, None, :], ris[None, None, :, :]))         # (S,J,L,N)
        arr = ula_response(m, _angle(ris[None, None, :, :], bs[:, :, None, :]))         # (S,J,L,M)
        self.los_br = arr[..., :, None] * dep[..., None, :].conj()                       # (S,J,L,M,N)
        self.los_ru = ula_response(m, _angle(ris[None, :, None, :], users[:, None, :, :]))  # (S,L,K,M)
        self.w_los, self.w_nlos = rician_weights(c.rician_kappa)

    def sample(self, rng: np.random.Generator) -> ChannelSet:
        a, b = self.w_los, self.w_nlos
        direct = self.gain_bu[..., None] * (a * self.los_bu + b * _cn(rng, self.los_bu.shape))
        bs_ris = self.gain_br[..., None, None] * (a * self.los_br + b * _cn(rng, self.los_br.shape))
        ris_user = self.gain_ru[..., None] * (a * self.los_ru + b * _cn(rng, self.los_ru.shape))
        return ChannelSet(direct, bs_ris, ris_user)


def sample_channels(topology: Topology, config: SystemConfig, rng: np.random.Generator) -> ChannelSet:
    return ChannelModel(topology, config).sample(rng)


def check_allocation(alloc, num_ops: int, num_ris: int | None = None) -> np.ndarray:
    b = np.asarray(alloc, dtype=int)
    if b.ndim != 1 or (num_ris is not None and len(b) != num_ris):
        raise ValueError("allocation must be a length-L vector")
    if np.any(b < 1) or np.any(b > num_ops):
        raise ValueError(f"allocation entries must lie in 1..{num_ops}")
    return b


def check_association(assoc, num_bs: int, num_users: int | None = None) -> np.ndarray:
    a = np.asarray(assoc, dtype=int)
    if a.ndim != 1 or (num_users is not None and len(a) != num_users):
        raise ValueError("association must be a length-K vector")
    if np.any(a < 1) or np.any(a > num_bs):
        raise ValueError(f"association entries must lie in 1..{num_bs}")
    return a


def ris_sets(alloc, num_ops: int) -> list[np.ndarray]:
    """0-based RIS indices controlled by each OP."""
    b = check_allocation(alloc, num_ops)
    return [np.flatnonzero(b == s + 1) for s in range(num_ops)]


def user_sets(assoc, num_bs: int) -> list[np.ndarray]:
    a = check_association(assoc, num_bs)
    return [np.flatnonzero(a == j + 1) for j in range(num_bs)]


def phase_diagonals(alloc, phases: np.ndarray, op: int, num_ops: int) -> np.ndarray:
    """Diagonals (L, M) of the reflection matrices seen in OP ``op``'s band."""
    b = check_allocation(alloc, num_ops)
    if not 1 <= op <= num_ops:
        raise ValueError(f"op index {op} out of range 1..{num_ops}")
    phases = np.asarray(phases, dtype=float)
    diag = np.ones(phases.shape, dtype=complex)
    mine = b == op
    diag[mine] = np.exp(1j * phases[mine])
    return diag


def compose_phase_matrices(alloc, phases: np.ndarray, op: int, num_ops: int) -> list[np.ndarray]:
    return [np.diag(d) for d in phase_diagonals(alloc, phases, op, num_ops)]


def effective_from_diagonals(channels: ChannelSet, op: int, diagonals: np.ndarray) -> np.ndarray:
    """Effective channels (K, N, J) of OP ``op`` for given reflection diagonals (L, M)."""
    s = op - 1
    g = channels.bs_ris[s]      # (J, L, M, N)
    hr = channels.ris_user[s]   # (L, K, M)
    hd = channels.direct[s]     # (J, K, N)
    if diagonals.shape != (hr.shape[0], hr.shape[2]) or g.shape[1:3] != diagonals.shape:
        raise ValueError("reflection diagonals do not match channel dimensions")
    if hd.shape[2] != g.shape[3]:
        raise ValueError("antenna dimension mismatch between direct and reflected channels")
    reflected = np.einsum("jlmn,lm,lkm->jkn", g.conj(), diagonals, hr)
    return np.transpose(reflected + hd, (1, 2, 0))


def effective_channels(channels: ChannelSet, alloc, phases: np.ndarray, op: int) -> np.ndarray:
    num_ops = channels.direct.shape[0]
    return effective_from_diagonals(channels, op, phase_diagonals(alloc, phases, op, num_ops))


def normalize_beamforming(raw: np.ndarray, assoc, power: float) -> np.ndarray:
    """Scale each BS's column group so its total power equals ``power``."""
    raw = np.asarray(raw, dtype=complex)
    a = np.asarray(assoc, dtype=int)
    if raw.ndim != 2 or raw.shape[1] != len(a):
        raise ValueError("beamforming matrix must be N x K with one column per user")
    out = raw.copy()
    for j in np.unique(a):
        cols = a == j
        energy = float(np.sum(np.abs(raw[:, cols]) ** 2))
        if energy == 0.0:
            raise DegenerateBeamError(f"all beams of BS {j} are zero")
        out[:, cols] *= np.sqrt(power / energy)
    return out


def sinr(effective: np.ndarray, beams: np.ndarray, assoc, noise_power: float) -> np.ndarray:
    """Per-user SINR; interference only from users served by the same BS."""
    a = np.asarray(assoc, dtype=int)
    k = np.arange(len(a))
    h = effective[k, :, a - 1]                 # (K, N) serving channel per user
    gains = np.abs(h.conj() @ beams) ** 2      # gains[k, q] = |h_k^H w_q|^2
    co_served = (a[:, None] == a[None, :]) & ~np.eye(len(a), dtype=bool)
    interference = np.sum(np.where(co_served, gains, 0.0), axis=1)
    return gains[k, k] / (interference + noise_power)


def sum_rate(gamma) -> float:
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SINR values must be non-negative")
    return float(np.sum(np.log2(1.0 + gamma)))


def evaluate_op(channels: ChannelSet, diagonals: np.ndarray, op: int, assoc, raw_beams,
                config: SystemConfig) -> OpOutcome:
    a = check_association(assoc, config.num_bs_per_op, config.num_users_per_op)
    eff = effective_from_diagonals(channels, op, diagonals)
    beams = normalize_beamforming(raw_beams, a, config.tx_power_per_bs)
    gamma = sinr(eff, beams, a, config.noise_power)
    return OpOutcome(eff, beams, a, gamma, sum_rate(gamma))


@dataclass(frozen=True)
class OpAction:
    phases: np.ndarray      # (L, M) radians
    assoc: np.ndarray       # (K,) 1-based
    raw_beams: np.ndarray   # (N, K) complex, unnormalized


def step_outcomes(channels: ChannelSet, alloc, actions: list[OpAction],
                  config: SystemConfig) -> list[OpOutcome]:
    b = check_allocation(alloc, config.num_ops, config.num_ris)
    if len(actions) != config.num_ops:
        raise ValueError("need exactly one action per OP")
    out = []
    for s, act in enumerate(actions, start=1):
        diag = phase_diagonals(b, act.phases, s, config.num_ops)
        out.append(evaluate_op(channels, diag, s, act.assoc, act.raw_beams, config))
    return out


def step(channels: ChannelSet, alloc, actions: list[OpAction], config: SystemConfig) -> np.ndarray:
    """Per-OP sum-rates for one time step."""
    return np.array([o.rate for o in step_outcomes(channels, alloc, actions, config)])
