"""Command-line entry points for channel synthesis, code characterization,
SE curves, Monte-Carlo BER runs, and parameter sweeps.

Every subcommand reads a TOML/JSON config and writes CSV; exit code 2 marks
a configuration error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np


def _add_common(sub):
    sub.add_argument("--config", required=True, help="TOML or JSON config file")
    sub.add_argument("--seed", type=int, default=None, help="override master seed")
    sub.add_argument("--out", required=True, help="output CSV path")
    sub.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rismimo",
        description="RIS-assisted quantized-MIMO simulation and analysis")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("synth-channel", "characterize-code", "se", "mc-ber", "sweep"):
        sub = subs.add_parser(name)
        _add_common(sub)
        if name == "sweep":
            sub.add_argument("--axis", required=True,
                             choices=["L", "K", "B", "phase_bits"])
            sub.add_argument("--values", required=True,
                             help="comma-separated axis values ('inf' allowed)")
        if name in ("se", "mc-ber", "sweep"):
            sub.add_argument("--transfer-cache", default=".rismimo-cache",
                             help="directory for the code transfer table")
    return parser


def _load_config(args):
    from .harness import load_experiment_config

    config = load_experiment_config(args.config)
    if args.seed is not None:
        from dataclasses import replace
        config = replace(config, seed=args.seed)
    return config


def _transfer(args, config, workers):
    from .se import build_code_transfer

    return build_code_transfer(config.code, cache_dir=args.transfer_cache,
                               workers=workers)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    from .harness import run_mc_ber, run_se_curve, sweep_axis, write_curves

    if args.command == "synth-channel":
        from .geometry import export_channel, load_scenario, synthesize

        scenario = load_scenario(args.config)
        channel = synthesize(scenario)
        export_channel(channel, args.out)
        print(f"wrote {channel.n_rx}x{channel.n_tx} channel to {args.out}")
        return 0

    if args.command == "characterize-code":
        from .se import DEFAULT_GRID, McParams, build_code_transfer, save_code_transfer

        config = _load_config(args)
        mc = McParams(seed=config.seed)
        transfer = build_code_transfer(config.code, DEFAULT_GRID, mc,
                                       workers=args.workers)
        save_code_transfer(transfer, args.out, mc)
        print(f"wrote {transfer.grid.size}-point code transfer to {args.out}")
        return 0

    config = _load_config(args)

    if args.command == "se":
        transfer = None
        if config.detector != "gecu":
            transfer = _transfer(args, config, args.workers)
        curve = run_se_curve(config, transfer)
        write_curves([curve], args.out)
        print(f"wrote SE curve ({len(curve.points)} points) to {args.out}")
        return 0

    if args.command == "mc-ber":
        transfer = None
        if config.detector == "gecc":
            transfer = _transfer(args, config, args.workers)
        curve = run_mc_ber(config, workers=args.workers, transfer=transfer)
        write_curves([curve], args.out)
        print(f"wrote MC BER curve ({len(curve.points)} points) to {args.out}")
        return 0

    if args.command == "sweep":
        values = [v if v != "inf" else None for v in args.values.split(",")]
        configs = sweep_axis(config, args.axis, values)
        transfer = None
        if config.detector == "gecc":
            transfer = _transfer(args, config, args.workers)
        curves = []
        for value, cfg in configs.items():
            curve = run_mc_ber(cfg, workers=args.workers, transfer=transfer)
            curve.label = f"{cfg.detector}[{args.axis}={value}]"
            curves.append(curve)
        write_curves(curves, args.out)
        print(f"wrote {len(curves)} sweep curves to {args.out}")
        return 0

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
