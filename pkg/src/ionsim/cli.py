"""Command-line front end: run the canned experiments, write result files."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .exceptions import ConfigError, IonsimError
from . import harness


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ionsim",
        description="Deterministic two-ion addressing simulator: run the "
                    "canned characterization experiments and write JSON/CSV "
                    "result bundles.",
    )
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="JSON config file (default: packaged reference "
                             "configuration)")
    common.add_argument("--seed", type=int, metavar="N",
                        help="override the config seed")
    common.add_argument("--shots", type=int, metavar="N",
                        help="override every per-point shot count "
                             "(switches the waist probe to sampled mode)")
    common.add_argument("--out", metavar="DIR", default=".",
                        help="output directory (default: current directory)")
    common.add_argument("--format", choices=("json", "csv", "both"),
                        default="both", help="which files to write")
    common.add_argument("--quiet", action="store_true",
                        help="suppress the per-experiment summary lines")
    sub = parser.add_subparsers(dest="command", metavar="command")
    descriptions = {
        "fig2": "long-pulse neighbour-leakage scans on both ions",
        "fig3": "probe-pulse scans across a beam switch",
        "waist": "beam-waist estimate from a parked-beam pi-time comparison",
        "table1": "sequential gate pairs scored by state tomography",
        "all": "run every experiment in order",
    }
    for name, desc in descriptions.items():
        sub.add_parser(name, parents=[common], help=desc, description=desc)
    return parser


def _apply_overrides(config, args):
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed {args.seed} is negative")
        config = replace(config, seed=args.seed)
    if args.shots is not None:
        if args.shots <= 0:
            raise ConfigError(f"--shots {args.shots} must be positive")
        config = replace(
            config,
            crosstalk=replace(config.crosstalk, shots=args.shots),
            switching=replace(config.switching, shots=args.shots),
            waist=replace(config.waist, shots=args.shots),
            gate_table=replace(config.gate_table, shots_per_basis=args.shots),
        )
    return config


def _summary(bundle) -> str:
    d = bundle.derived
    if bundle.experiment == "fig2":
        eps = ", ".join(f"{e:.3g}" for e in d["crosstalk"])
        pops = ", ".join(f"{p:.4f}" for p in d["neighbor_population_at_max"])
        return (f"fig2: neighbour populations [{pops}] at "
                f"{d['max_duration_us']:g} us -> crosstalk [{eps}]")
    if bundle.experiment == "fig3":
        return (f"fig3: switching time {d['switching_time_us']:.3f} us "
                f"(t_m {d['t_m_us']:.3f}, t_s {d['t_s_us']:.3f})")
    if bundle.experiment == "waist":
        return (f"waist: {d['waist_um']:.3f} um "
                f"(side spread {d['waist_spread_um']:.3g} um)")
    if bundle.experiment == "table1":
        fids = ", ".join(f"{a:.4f}/{b:.4f}" for a, b in d["fidelities"])
        return f"table1: fidelities [{fids}]"
    return bundle.experiment


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: a command is required", file=sys.stderr)
        return 1
    try:
        harness.thread_cap()
        config = harness.load_config(args.config)
        config = _apply_overrides(config, args)
    except ConfigError as exc:
        print(f"ionsim: config error: {exc}", file=sys.stderr)
        return 1
    names = list(harness.RUNNERS) if args.command == "all" else [args.command]
    try:
        for name in names:
            bundle = harness.run_experiment(name, config)
            paths = harness.write_bundle(bundle, args.out, args.format)
            if not args.quiet:
                print(_summary(bundle))
                for path in paths:
                    print(f"  wrote {path}")
    except ConfigError as exc:
        print(f"ionsim: config error: {exc}", file=sys.stderr)
        return 1
    except IonsimError as exc:
        print(f"ionsim: error: {exc}", file=sys.stderr)
        return 2
    return 0


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
