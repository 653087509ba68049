"""Command-line harness.

Subcommands ``vqe-gibbs``, ``qaoa-gibbs`` and ``baseline`` run a sweep with
the algorithm pinned; ``sweep`` takes the algorithm from the config;
``gradcheck`` self-checks the shift-rule gradients; ``plotdata`` converts a
results CSV into per-curve series files.

Every config-file key can be overridden by a flag of the same name. Exit
codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .adapt import NumericalFailure
from .harness import (
    ConfigError,
    build_config,
    emit_plot_data,
    format_float,
    gradcheck,
    parse_config_file,
    run_sweep,
)

_SWEEP_KEYS = (
    "model",
    "n_data",
    "n_ancilla",
    "beta_inv_list",
    "epsilon",
    "layer_budget",
    "truncation",
    "restarts",
    "master_seed",
    "workers",
)


def _add_sweep_arguments(parser: argparse.ArgumentParser, with_algorithm: bool):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--out", help="output directory for CSV and traces")
    if with_algorithm:
        parser.add_argument("--algorithm", choices=("vqe", "qaoa", "baseline"))
    for key in _SWEEP_KEYS:
        parser.add_argument(f"--{key}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gibbsprep",
        description="Adaptive variational thermal-state preparation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, algorithm in (
        ("vqe-gibbs", "vqe"),
        ("qaoa-gibbs", "qaoa"),
        ("baseline", "baseline"),
        ("sweep", None),
    ):
        p = sub.add_parser(
            name,
            help=(
                "run a sweep with the algorithm taken from the config"
                if algorithm is None
                else f"run a sweep with algorithm={algorithm}"
            ),
        )
        _add_sweep_arguments(p, with_algorithm=algorithm is None)
        p.set_defaults(command_kind="sweep", forced_algorithm=algorithm)

    g = sub.add_parser("gradcheck", help="shift rule vs finite differences")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--trials", type=int, default=100)
    g.set_defaults(command_kind="gradcheck")

    d = sub.add_parser("plotdata", help="emit per-curve series files from a CSV")
    d.add_argument("--csv", required=True)
    d.add_argument("--panel", required=True, choices=("fig1", "fig2", "fig3"))
    d.add_argument("--out", required=True)
    d.set_defaults(command_kind="plotdata")
    return parser


def _run_sweep_command(args: argparse.Namespace) -> int:
    raw: dict = {}
    if args.config:
        raw.update(parse_config_file(args.config))
    for key in _SWEEP_KEYS + ("out",):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if args.forced_algorithm is not None:
        raw["algorithm"] = args.forced_algorithm
    elif getattr(args, "algorithm", None) is not None:
        raw["algorithm"] = args.algorithm
    config = build_config(raw)
    records = run_sweep(config)
    for record in records:
        print(
            f"{record.run_id}: beta_inv={format_float(record.beta_inv)}"
            f" fidelity={record.fidelity:.6f}"
            f" bound={record.max_fidelity_bound:.6f}"
            f" cnots={record.cnot_count}"
        )
    if config.out:
        print(f"results appended to {config.out}/results.csv")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command_kind == "sweep":
            return _run_sweep_command(args)
        if args.command_kind == "gradcheck":
            report = gradcheck(args.seed, args.trials)
            for line in report.lines():
                print(line)
            return 0 if report.passed else 3
        if args.command_kind == "plotdata":
            written = emit_plot_data(args.csv, args.panel, args.out)
            for path in written:
                print(path)
            return 0
        raise AssertionError("unreachable")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
