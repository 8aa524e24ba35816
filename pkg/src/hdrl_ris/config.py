"""Scenario and experiment configuration.

Defaults reproduce the full-scale setting (two operators, four surfaces
of twenty elements, ten-antenna base stations). The ``desk`` preset shrinks the
scenario for quick CPU runs.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

ALLOCATOR_KINDS = (
    "learned-hppo",
    "learned-shppo",
    "learned-1d",
    "auction",
    "distance",
    "random",
    "greedy",
    "exhaustive-oracle",
    "none",
    "centralized",
)
ALGORITHMS = ("hppo", "shppo")


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration values."""


@dataclass(frozen=True)
class SystemConfig:
    num_ops: int = 2
    num_bs_per_op: int = 2
    num_users_per_op: int = 5
    num_antennas: int = 10
    num_ris: int = 4
    elements_per_ris: int = 20
    rician_kappa: float = 10.0
    tx_power_per_bs: float = 0.5
    steps_per_episode: int = 10
    noise_power: float = 1e-11
    pathloss_c0: float = 1e-3
    reference_distance: float = 1.0
    alpha_br: float = 2.5
    alpha_ru: float = 2.8
    alpha_bu: float = 3.5
    bs_radius: float = 150.0
    ris_half_span: float = 5.0
    user_inner_radius: float = 5.0
    user_outer_radius: float = 7.0

    def __post_init__(self):
        for name in ("num_ops", "num_bs_per_op", "num_users_per_op", "num_antennas",
                     "num_ris", "elements_per_ris", "steps_per_episode"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if self.rician_kappa < 0:
            raise ConfigError("rician_kappa must be >= 0")
        for name in ("tx_power_per_bs", "noise_power", "pathloss_c0", "reference_distance",
                     "alpha_br", "alpha_ru", "alpha_bu", "bs_radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.ris_half_span < 0:
            raise ConfigError("ris_half_span must be >= 0")
        if not 0 <= self.user_inner_radius <= self.user_outer_radius:
            raise ConfigError("user radii must satisfy 0 <= inner <= outer")

    @property
    def num_goals(self) -> int:
        return self.num_ops ** self.num_ris

    @property
    def op_obs_width(self) -> int:
        n, j, k = self.num_antennas, self.num_bs_per_op, self.num_users_per_op
        return 2 * n * j * k + k + self.num_ris * self.num_ops

    @property
    def op_action_width(self) -> int:
        n, k = self.num_antennas, self.num_users_per_op
        return self.num_ris * self.elements_per_ris + k + 2 * n * k

    @property
    def rp_state_width(self) -> int:
        return 2 * self.num_ops * self.num_users_per_op ** 2


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    algo: str = "hppo"
    allocator: str = "learned-hppo"
    episodes: int = 3000
    seeds: tuple[int, ...] = (0,)
    gamma: float = 0.99
    gae_lambda: float = 0.95
    op_buffer: int = 30
    rp_buffer: int = 30
    clip_eps: float = 0.2
    rp_actor_lr: float = 1e-4
    rp_critic_lr: float = 1e-4
    op_actor_lr: float = 2e-4
    op_critic_lr: float = 2e-4
    hidden: int = 500
    epochs: int = 1
    entropy_coef: float = 0.0
    normalize_advantages: bool = False
    out: str = "runs"

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.allocator not in ALLOCATOR_KINDS:
            raise ConfigError(f"unknown allocator {self.allocator!r}")
        if self.allocator.startswith("learned-") and self.allocator[8:] in ALGORITHMS \
                and self.allocator[8:] != self.algo:
            raise ConfigError(f"allocator {self.allocator!r} conflicts with algo {self.algo!r}")
        for name in ("episodes", "op_buffer", "rp_buffer", "hidden", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 <= self.gamma <= 1 or not 0 <= self.gae_lambda <= 1:
            raise ConfigError("gamma and gae_lambda must lie in [0, 1]")
        if not 0 <= self.clip_eps < 1:
            raise ConfigError("clip_eps must lie in [0, 1)")
        for name in ("rp_actor_lr", "rp_critic_lr", "op_actor_lr", "op_critic_lr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.entropy_coef < 0:
            raise ConfigError("entropy_coef must be >= 0")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")


# Symbol-style aliases accepted in config files.
ALIASES = {
    "S": "num_ops", "J_s": "num_bs_per_op", "K_s": "num_users_per_op",
    "N": "num_antennas", "L": "num_ris", "M_l": "elements_per_ris",
    "kappa": "rician_kappa", "P_js": "tx_power_per_bs", "T": "steps_per_episode",
    "sigma2": "noise_power", "C0": "pathloss_c0", "d0": "reference_distance",
    "lambda": "gae_lambda", "T_s": "op_buffer", "E": "rp_buffer", "epsilon": "clip_eps",
    "beta_theta": "rp_actor_lr", "beta_psi": "rp_critic_lr",
    "beta_theta_s": "op_actor_lr", "beta_psi_s": "op_critic_lr",
}

DESK_SYSTEM = dict(num_ops=2, num_ris=2, num_bs_per_op=1, num_users_per_op=2,
                   num_antennas=2, elements_per_ris=4)
# Small networks learn slowly at the large-scale step sizes and single epoch;
# the desk preset trades that for ten passes, normalized advantages and 3e-3.
DESK_EXPERIMENT = dict(hidden=64, epochs=10, normalize_advantages=True,
                       rp_actor_lr=3e-3, rp_critic_lr=3e-3, op_actor_lr=3e-3, op_critic_lr=3e-3)

_SYSTEM_KEYS = {f.name for f in fields(SystemConfig)}
_EXPERIMENT_KEYS = {f.name for f in fields(ExperimentConfig)} - {"system"}


def _coerce(cls, name: str, value: Any) -> Any:
    default = {f.name: f for f in fields(cls)}[name].default
    if name == "seeds":
        if isinstance(value, int):
            return (value,)
        return tuple(int(v) for v in value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string")
    return value


def build_config(overrides: dict[str, Any] | None = None, preset: str | None = None) -> ExperimentConfig:
    """Merge flat key/value overrides onto the defaults (optionally a preset)."""
    sys_kw: dict[str, Any] = {}
    exp_kw: dict[str, Any] = {}
    if preset == "desk":
        sys_kw.update(DESK_SYSTEM)
        exp_kw.update(DESK_EXPERIMENT)
    elif preset not in (None, "paper"):
        raise ConfigError(f"unknown preset {preset!r}")
    allocator_given = False
    for key, value in (overrides or {}).items():
        name = ALIASES.get(key, key)
        if name in _SYSTEM_KEYS:
            sys_kw[name] = _coerce(SystemConfig, name, value)
        elif name in _EXPERIMENT_KEYS:
            exp_kw[name] = _coerce(ExperimentConfig, name, value)
            allocator_given |= name == "allocator"
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if not allocator_given:
        exp_kw["allocator"] = "learned-" + exp_kw.get("algo", "hppo")
    elif "algo" not in exp_kw and exp_kw["allocator"][8:] in ALGORITHMS:
        exp_kw["algo"] = exp_kw["allocator"][8:]
    return ExperimentConfig(system=SystemConfig(**sys_kw), **exp_kw)


def load_config(path: str | Path | None = None, preset: str | None = None,
                overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Read a YAML key/value file; missing keys take the defaults.

    A top-level ``preset`` key in the file is honoured unless ``preset`` is
    passed explicitly. ``overrides`` are applied last.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        if isinstance(loaded.get("system"), dict):
            nested = loaded.pop("system")
            loaded = {**nested, **loaded}
        data.update(loaded)
    file_preset = data.pop("preset", None)
    data.update(overrides or {})
    return build_config(data, preset if preset is not None else file_preset)


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    out = dataclasses.asdict(config)
    out["seeds"] = list(config.seeds)
    return out


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(config), sort_keys=True))


def with_system(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, system=replace(config.system, **changes))
