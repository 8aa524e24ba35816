"""Seeded experiment runner: wiring, training loop, metrics and timing.

Outputs per run directory:
  metrics_<seed>.csv    one row per episode, deterministic for a given (config, seed)
  timing_<seed>.csv     wall-clock update times and cumulative runtime
  config_resolved.yaml  the validated configuration
  ckpt_<seed>_<agent>.bin   final network weights
  diagnostic_<seed>.json    written only if training diverges
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .baselines import (AuctionProvider, CentralizedController, DistanceProvider, FixedProvider,
                        GreedyProvider, OracleProvider, RandomProvider, RpAgent1d)
from .config import ExperimentConfig, save_config
from .neural import save_checkpoint
from .ppo import OpAgent, PPOSettings, RpAgentHppo, RpAgentSeq, TrainingDivergenceError
from .seeding import derive_rng
from .smdp import HdrlSystem

LEARNED = ("learned-hppo", "learned-shppo", "learned-1d")


def op_settings(config: ExperimentConfig) -> PPOSettings:
    return PPOSettings(config.gamma, config.gae_lambda, config.clip_eps, config.op_actor_lr,
                       config.op_critic_lr, config.op_buffer, config.epochs, config.entropy_coef,
                       config.normalize_advantages)


def rp_settings(config: ExperimentConfig) -> PPOSettings:
    return PPOSettings(config.gamma, config.gae_lambda, config.clip_eps, config.rp_actor_lr,
                       config.rp_critic_lr, config.rp_buffer, config.epochs, config.entropy_coef,
                       config.normalize_advantages)


def make_provider(config: ExperimentConfig, seed: int):
    c, kind = config.system, config.allocator
    rng = derive_rng(seed, "allocator")
    rp_args = (c.rp_state_width, c.num_ops, c.num_ris, config.hidden, rp_settings(config),
               derive_rng(seed, "init:rp"), derive_rng(seed, "act:rp"))
    if kind == "learned-hppo":
        return RpAgentHppo(*rp_args)
    if kind == "learned-shppo":
        return RpAgentSeq(*rp_args)
    if kind == "learned-1d":
        return RpAgent1d(*rp_args)
    simple = {"random": RandomProvider, "distance": DistanceProvider,
              "greedy": GreedyProvider, "auction": AuctionProvider, "none": FixedProvider}
    if kind in simple:
        return simple[kind](c, rng)
    if kind == "exhaustive-oracle":
        return OracleProvider(c, rng, seed)
    raise ValueError(f"allocator {kind!r} has no provider")


def make_op_agents(config: ExperimentConfig, seed: int) -> list[OpAgent]:
    c = config.system
    return [OpAgent(c.op_obs_width, c.op_action_width, config.hidden, op_settings(config),
                    derive_rng(seed, f"init:op{s}"), derive_rng(seed, f"act:op{s}"))
            for s in range(c.num_ops)]


@dataclass
class Experiment:
    """Everything wired for one (config, seed) run."""
    config: ExperimentConfig
    seed: int
    system: HdrlSystem
    provider: object | None
    op_agents: list
    central: CentralizedController | None = None
    records: list[dict] = field(default_factory=list)

    @classmethod
    def build(cls, config: ExperimentConfig, seed: int) -> "Experiment":
        c = config.system
        if config.allocator == "centralized":
            central = CentralizedController(c, config.hidden, op_settings(config),
                                            derive_rng(seed, "init:central"),
                                            derive_rng(seed, "act:central"))
            system = HdrlSystem(c, None, [None] * c.num_ops, seed)
            return cls(config, seed, system, None, [], central)
        provider = make_provider(config, seed)
        ops = make_op_agents(config, seed)
        system = HdrlSystem(c, provider, ops, seed, reflection=config.allocator != "none")
        return cls(config, seed, system, provider, ops)

    def agents(self) -> dict[str, object]:
        """Learning agents by name (providers without parameters are skipped)."""
        if self.central is not None:
            return {"central": self.central.agent}
        out = {f"op{s + 1}": a for s, a in enumerate(self.op_agents)}
        if self.config.allocator in LEARNED:
            out = {"rp": self.provider, **out}
        return out

    def columns(self) -> list[str]:
        S = self.config.system.num_ops
        cols = ["episode"] + [f"rate_op{s + 1}" for s in range(S)] + ["reward", "goal"]
        for name in self.agents():
            cols += [f"{name}_actor_loss", f"{name}_critic_loss"]
        return cols

    def timing_columns(self) -> list[str]:
        return ["episode"] + [f"{n}_update_time" for n in self.agents()] + ["cumulative_runtime"]

    def step(self) -> tuple[dict, dict]:
        agents = self.agents()
        before = {n: a.updates for n, a in agents.items()}
        episode = self.system.episode
        if self.central is not None:
            out = self.central.run_episode(self.system)
            rates, reward, goal = out["rates"], out["reward"], out["goal"]
        else:
            res = self.system.run_episode()
            rates, reward, goal = res.rates, res.reward, res.goal
        row = {"episode": episode, "reward": reward, "goal": goal}
        for s in range(rates.shape[0]):
            row[f"rate_op{s + 1}"] = float(rates[s].mean())
        timing = {"episode": episode}
        for n, a in agents.items():
            updated = a.updates > before[n]
            row[f"{n}_actor_loss"] = float(a.last_stats["actor_loss"]) if updated else ""
            row[f"{n}_critic_loss"] = float(a.last_stats["critic_loss"]) if updated else ""
            timing[f"{n}_update_time"] = a.last_stats["update_time"] if updated else ""
        return row, timing


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def run_experiment(config: ExperimentConfig, seed: int, out_dir: str | Path | None = None,
                   episodes: int | None = None) -> Experiment:
    """Train for the episode budget, streaming metrics to ``out_dir`` if given."""
    exp = Experiment.build(config, seed)
    n = config.episodes if episodes is None else episodes
    out = Path(out_dir) if out_dir is not None else None
    metrics_f = timing_f = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_config(config, out / "config_resolved.yaml")
        metrics_f = open(out / f"metrics_{seed}.csv", "w", newline="")
        timing_f = open(out / f"timing_{seed}.csv", "w", newline="")
        mw, tw = csv.writer(metrics_f), csv.writer(timing_f)
        mw.writerow(exp.columns())
        tw.writerow(exp.timing_columns())
    start = time.perf_counter()
    try:
        for _ in range(n):
            try:
                row, timing = exp.step()
            except TrainingDivergenceError as err:
                if out is not None:
                    (out / f"diagnostic_{seed}.json").write_text(json.dumps(
                        {"episode": exp.system.episode, "seed": seed, "error": str(err)}, indent=2))
                raise
            timing["cumulative_runtime"] = time.perf_counter() - start
            exp.records.append(row)
            if out is not None:
                mw.writerow([_fmt(row[c]) for c in exp.columns()])
                tw.writerow([_fmt(timing[c]) for c in exp.timing_columns()])
    finally:
        if metrics_f is not None:
            metrics_f.close()
            timing_f.close()
    if out is not None:
        for name, agent in exp.agents().items():
            save_checkpoint(out / f"ckpt_{seed}_{name}.bin", agent.state_dict())
    return exp


def read_metrics(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def smooth_series(values, window: int = 100) -> np.ndarray:
    """Trailing moving average; early entries average whatever prefix exists."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("cannot smooth an empty series")
    if window < 1:
        raise ValueError("window must be >= 1")
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


@dataclass(frozen=True)
class TimingStats:
    mean: float
    variance: float
    calls: int


def time_profile(fn: Callable[[], object], n: int, warmup: int = 10) -> TimingStats:
    """Wall-time statistics of ``n`` calls to ``fn`` after ``warmup`` untimed calls."""
    if n < 1:
        raise ValueError("need at least one timed call after warm-up")
    for _ in range(warmup):
        fn()
    times = np.empty(n)
    for i in range(n):
        t0 = time.perf_counter()
        fn()
        times[i] = time.perf_counter() - t0
    return TimingStats(float(times.mean()), float(times.var()), n)
