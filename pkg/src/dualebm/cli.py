"""Command-line entry point: one subcommand per experiment mode, plus sweeps."""

from __future__ import annotations

import argparse
import logging
import sys

from .dual_trainer import TrainingError
from .pde1d import PdeError
from .runner import (MODES, CheckpointError, ConfigError, ExperimentConfig, config_from_dict,
                     load_checkpoint, load_config, run_experiment, run_sweep)
from .sampler import SamplerError


def _parser():
    p = argparse.ArgumentParser(prog="dualebm", description="Energy-based model training experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in MODES + ("sweep",):
        s = sub.add_parser(name, help=f"run a {name} experiment" if name != "sweep" else "run seeded sweeps")
        s.add_argument("--config", help="YAML configuration file")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("--out", help="output directory")
        s.add_argument("--log-every", type=int, dest="log_every", help="metrics interval in iterations")
        s.add_argument("--resume", help="checkpoint to continue from")
        s.add_argument("--plot", action="store_true", help="write SVG figures next to the metrics")
        s.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _resolve(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.resume:
        cfg = config_from_dict(load_checkpoint(args.resume)["config"], args.resume)
    else:
        cfg = ExperimentConfig(mode=args.command if args.command != "sweep" else "train-dual")
    raw = cfg.to_dict()
    if args.command != "sweep":
        raw["mode"] = args.command  # the subcommand decides the mode
    for key in ("seed", "out", "log_every"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    if args.plot:
        raw["plot"] = True
    return config_from_dict(raw, args.config or "<command line>")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = _resolve(args)
        if args.command == "sweep":
            return run_sweep(cfg)
        return run_experiment(cfg, resume=args.resume)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return 3
    except (TrainingError, PdeError, SamplerError, FloatingPointError, OSError, ValueError) as e:
        print(f"run failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
