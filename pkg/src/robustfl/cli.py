"""Command-line experiment runner.

``robustfl run -c config.json`` executes one experiment and writes, next
to each other, a JSONL file (a config header record, one record per
evaluated round, and a final summary record) and a flat CSV with columns
round, accuracy, loss, agg_norm. ``robustfl sweep -c sweep.json`` runs an
aggregator x attack grid off a shared base config, one output file pair
per cell. Model divergence is a reported result, not an error; only I/O
and config problems exit nonzero.
"""

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .config import (
    ConfigError,
    ExperimentConfig,
    _parse_aggregator,
    _parse_attack,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .federation import build_simulation
from .metrics import clamp_loss

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResultRow:
    round: int
    test_accuracy: float
    test_loss: float
    aggregate_norm: float
    wall_ms: float


def _output_base(config: ExperimentConfig, output_dir: Optional[str]) -> Path:
    name = config.output_path or config.label()
    base = Path(name)
    if output_dir is not None:
        base = Path(output_dir) / base.name
    elif not base.is_absolute() and base.parent == Path("."):
        base = Path("results") / base
    return base


def run(config: ExperimentConfig, output_dir: Optional[str] = None) -> int:
    """Execute one experiment, streaming rows to <base>.jsonl and <base>.csv."""
    base = _output_base(config, output_dir)
    base.parent.mkdir(parents=True, exist_ok=True)
    # not Path.with_suffix: cell labels may contain dots (ipm_eps0.5)
    jsonl_path = Path(str(base) + ".jsonl")
    csv_path = Path(str(base) + ".csv")

    sim = build_simulation(config)
    rows = []
    with open(jsonl_path, "w", encoding="utf-8") as jsonl, \
            open(csv_path, "w", newline="", encoding="utf-8") as csv_file:
        jsonl.write(json.dumps({"type": "config",
                                "config": config_to_dict(config)}) + "\n")
        writer = csv.writer(csv_file)
        writer.writerow(["round", "accuracy", "loss", "agg_norm"])
        started = time.perf_counter()
        for record in sim.rounds():
            now = time.perf_counter()
            wall_ms = (now - started) * 1000.0
            started = now
            if record.test_accuracy is None:
                continue
            row = ResultRow(
                round=record.round,
                test_accuracy=record.test_accuracy,
                test_loss=clamp_loss(record.test_loss),
                aggregate_norm=record.aggregate_norm,
                wall_ms=wall_ms,
            )
            rows.append(row)
            jsonl.write(json.dumps({
                "type": "round",
                "round": row.round,
                "test_accuracy": row.test_accuracy,
                "test_loss": row.test_loss,
                "aggregate_norm": row.aggregate_norm,
                "wall_ms": row.wall_ms,
            }) + "\n")
            writer.writerow([row.round, row.test_accuracy, row.test_loss,
                             row.aggregate_norm])
            logger.info("round %d: accuracy=%.4f loss=%.4f",
                        row.round, row.test_accuracy, row.test_loss)
        summary = {"type": "summary", "rounds": config.rounds}
        if rows:
            summary["final_accuracy"] = rows[-1].test_accuracy
            summary["best_accuracy"] = max(r.test_accuracy for r in rows)
            summary["final_loss"] = rows[-1].test_loss
        jsonl.write(json.dumps(summary) + "\n")
    logger.info("wrote %s and %s", jsonl_path, csv_path)
    return 0


def _load_sweep(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"sweep file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "base" not in raw:
        raise ConfigError("sweep file must be an object with a 'base' config")
    for key in raw:
        if key not in ("base", "aggregators", "attacks"):
            raise ConfigError(f"unknown key '{key}' in sweep file")
    base = config_from_dict(raw["base"])
    aggregators = [_parse_aggregator(a) for a in raw.get("aggregators", [])] \
        or [base.aggregator]
    attacks = [_parse_attack(a) for a in raw.get("attacks", [])] or [base.attack]
    return base, aggregators, attacks


def sweep(path, output_dir: Optional[str] = None,
          seed: Optional[int] = None) -> int:
    """Run every (aggregator, attack) cell of a sweep file."""
    base, aggregators, attacks = _load_sweep(path)
    if seed is not None:
        base = replace(base, seed=seed)
    status = 0
    for agg in aggregators:
        for attack in attacks:
            cell = replace(base, aggregator=agg, attack=attack,
                           output_path=f"{agg.label()}__{attack.label()}")
            logger.info("sweep cell %s", cell.output_path)
            status |= run(cell, output_dir)
    return status


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustfl",
        description="Byzantine-robust federated learning simulator",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debug output")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run one configured experiment"),
                       ("sweep", "run an aggregator x attack grid")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("-c", "--config", required=True,
                         help="path to the JSON config")
        cmd.add_argument("-o", "--output-dir", default=None,
                         help="directory for result files (default: results/)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config's seed")
    return parser


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            config = load_config(args.config)
            if args.seed is not None:
                config = replace(config, seed=args.seed)
            return run(config, args.output_dir)
        return sweep(args.config, args.output_dir, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
