"""Command-line entry point for training runs.

Precedence: command-line flags, then ``HDRL_RIS_*`` environment variables,
then the config file, then preset/defaults.
"""
from __future__ import annotations

import argparse
import os
import sys

import yaml

from .config import ALGORITHMS, ALLOCATOR_KINDS, ConfigError, load_config
from .harness import run_experiment, smooth_series
from .ppo import TrainingDivergenceError

ENV_PREFIX = "HDRL_RIS_"
FLAGS = ("config", "seed", "episodes", "algo", "allocator", "preset", "out")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdrl-ris", description="Train RIS-sharing agents.")
    p.add_argument("--config", help="YAML file of configuration overrides")
    p.add_argument("--seed", type=int, help="master seed (default: every seed in the config)")
    p.add_argument("--episodes", type=int, help="episode budget")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--allocator", choices=ALLOCATOR_KINDS)
    p.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="extra config override, value parsed as YAML (repeatable)")
    return p


def resolve(args: argparse.Namespace, environ=os.environ) -> dict:
    """Fill any flag left unset on the command line from the environment."""
    out = {}
    for name in FLAGS:
        value = getattr(args, name)
        if value is None:
            value = environ.get(ENV_PREFIX + name.upper())
            if value is not None and name in ("seed", "episodes"):
                try:
                    value = int(value)
                except ValueError:
                    raise ConfigError(f"{ENV_PREFIX}{name.upper()} must be an integer") from None
        out[name] = value
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve(args)
        overrides = {}
        for item in args.set:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key] = yaml.safe_load(raw)
        for name in ("episodes", "algo", "allocator", "out"):
            if opts[name] is not None:
                overrides[name] = opts[name]
        config = load_config(opts["config"], opts["preset"], overrides)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    seeds = [opts["seed"]] if opts["seed"] is not None else list(config.seeds)
    for seed in seeds:
        try:
            exp = run_experiment(config, seed, config.out)
        except TrainingDivergenceError as err:
            print(f"seed {seed}: training diverged ({err}); see {config.out}", file=sys.stderr)
            return 1
        final = smooth_series([r["reward"] for r in exp.records])[-1]
        print(f"seed {seed}: {len(exp.records)} episodes, final smoothed reward {final:.4f}, "
              f"metrics in {config.out}/metrics_{seed}.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
