"""Command-line entry point.

Commands: train, sweep, bench-compaction, plot, report.  Output files land in
--out (default: env DEMO_OUT_DIR, else the current directory).  Exit codes:
0 success, 1 configuration error (with line number), 2 transport failure or
usage error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from demopt.bench import SIGNAL_KINDS, run_bench
from demopt.config import (
    _SCHEMA,
    _coerce,
    _parse_value,
    apply_override,
    load_config,
    validate_config,
)
from demopt.errors import ConfigError, TransportError
from demopt.harness import run_experiment, sweep, write_metrics_csv, write_sweep_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TRANSPORT = 2


def _out_dir(args) -> str:
    out = args.out or os.environ.get("DEMO_OUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load(args):
    cfg = load_config(args.config)
    for spec in args.set or []:
        apply_override(cfg, spec)
    return validate_config(cfg)


def _cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    metrics = run_experiment(cfg)
    csv_path = os.path.join(out, "metrics.csv")
    write_metrics_csv(metrics, csv_path)
    print(f"wrote {csv_path}")
    if metrics.ledgers:
        for ledger in metrics.ledgers:
            path = os.path.join(out, f"ledger_rank{ledger.rank}.csv")
            ledger.to_csv(path)
        print(f"wrote {len(metrics.ledgers)} ledger CSVs")
    final = metrics.final_eval
    print(f"steps={cfg.run.steps} final_train_loss={metrics.final_train_loss} "
          f"eval_loss={final['loss']} eval_acc={final['accuracy']} "
          f"bytes_per_step={metrics.bytes_per_step}")
    return EXIT_OK


def _parse_grid(specs: list[str]):
    grid = []
    for spec in specs:
        head, eq, raw = spec.partition("=")
        if not eq:
            raise ConfigError(f"grid must look like section.key=v1,v2: {spec}")
        section, dot, key = head.strip().partition(".")
        if not dot or section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"grid names unknown key: {spec}")
        expected = _SCHEMA[section][key]
        values = [
            _coerce(_parse_value(tok, 0), expected, section, key, 0)
            for tok in raw.split(",") if tok.strip()
        ]
        if not values:
            raise ConfigError(f"grid has no values: {spec}")
        grid.append((head.strip(), values))
    return grid


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    grid = _parse_grid(args.grid)
    out = _out_dir(args)
    result = sweep(cfg, grid)
    summary_path = os.path.join(out, "sweep.csv")
    write_sweep_csv(result, summary_path)
    for i, metrics in enumerate(result.metrics):
        write_metrics_csv(metrics, os.path.join(out, f"run_{i:03d}.csv"))
    print(f"wrote {summary_path} and {len(result.metrics)} run CSVs")
    return EXIT_OK


def _cmd_bench(args, parser) -> int:
    try:
        report = run_bench(args.signal, args.rho, args.length, args.chunk,
                           args.k, args.trials, args.seed)
    except ValueError as exc:
        parser.error(str(exc))
    for line in report.lines():
        print(line)
    return EXIT_OK


def _cmd_plot(args, parser) -> int:
    from demopt.plotting import plot_loss_curves

    try:
        plot_loss_curves(args.csv, args.out_file)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    print(f"wrote {args.out_file}")
    return EXIT_OK


def _cmd_report(args, parser) -> int:
    try:
        with open(args.csv, "r", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    except OSError as exc:
        parser.error(str(exc))
    if not rows:
        parser.error(f"{args.csv}: empty metrics CSV")
    steps = int(rows[-1]["step"])
    losses = [float(r["train_loss"]) for r in rows if r["train_loss"]]
    payloads = [int(r["payload_bytes"]) for r in rows if r["payload_bytes"]]
    print(f"rows={len(rows)} steps={steps}")
    if losses:
        print(f"first_train_loss={losses[0]} final_train_loss={losses[-1]}")
    if payloads:
        print(f"payload_bytes_per_step={payloads[-1]} "
              f"total_payload_bytes={sum(payloads)}")
    for key in ("eval_loss", "eval_acc"):
        cells = [r[key] for r in rows if r.get(key)]
        if cells:
            print(f"final_{key}={cells[-1]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demopt",
        description="Decoupled-momentum training experiments at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one experiment from a config")
    train.add_argument("config", help="path to a sectioned key=value config")
    train.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
    train.add_argument("--out", default=None,
                       help="output directory (default: $DEMO_OUT_DIR or .)")

    sw = sub.add_parser("sweep", help="grid of runs; writes a summary CSV")
    sw.add_argument("config")
    sw.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    sw.add_argument("--grid", action="append", required=True,
                    metavar="SECTION.KEY=V1,V2,...",
                    help="axis of the sweep (repeatable, cartesian product)")
    sw.add_argument("--out", default=None)

    bench = sub.add_parser("bench-compaction",
                           help="energy compaction of top-k DCT vs identity")
    bench.add_argument("--signal", choices=SIGNAL_KINDS, default="ar1")
    bench.add_argument("--rho", type=float, default=0.95)
    bench.add_argument("--length", type=int, default=64)
    bench.add_argument("--chunk", type=int, default=64)
    bench.add_argument("--k", type=int, default=8)
    bench.add_argument("--trials", type=int, default=1000)
    bench.add_argument("--seed", type=int, default=0)

    plot = sub.add_parser("plot", help="render loss curves from metrics CSVs")
    plot.add_argument("csv", nargs="+", help="metrics CSV files")
    plot.add_argument("--out-file", default="loss.svg")

    report = sub.add_parser("report", help="summarize one metrics CSV")
    report.add_argument("csv")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "bench-compaction":
            return _cmd_bench(args, parser)
        if args.command == "plot":
            return _cmd_plot(args, parser)
        return _cmd_report(args, parser)
    except ConfigError as exc:
        where = f" (line {exc.line})" if exc.line else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main(argv=None))
