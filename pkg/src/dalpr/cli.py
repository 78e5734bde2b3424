"""``dalpr`` command line: simulate, reconstruct, compare, render."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from dalpr import bench
from dalpr.config import ALGORITHMS, ConfigError, ExperimentConfig, load_config
from dalpr.field import FieldFormatError

log = logging.getLogger("dalpr")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file (key = value lines)")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="noise seed (overrides seed)")
    common.add_argument("--algorithm", choices=ALGORITHMS, help="reconstruction algorithm")
    common.add_argument("--truth", type=Path, help="ground-truth field file (WF01)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="dalpr", description="Multi-plane phase retrieval bench."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate observations of the configured object")
    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct from an observation file")
    p.add_argument("observations", type=Path)
    p = sub.add_parser("compare", parents=[common], help="run SBMIR-FB, AL and D-AL side by side")
    p.add_argument("observations", type=Path)
    p = sub.add_parser("render", parents=[common], help="render a field file to PGM images and CSV")
    p.add_argument("field", type=Path)
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {args.seed}")
        changes["seed"] = args.seed
    if args.algorithm is not None:
        changes["algorithm"] = args.algorithm
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    return config.replace(**changes) if changes else config


def _require_file(path: Path, what: str) -> None:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _config(args)
        out = Path(config.output_dir)
        if args.command == "simulate":
            bench.cmd_simulate(config, out)
        elif args.command == "reconstruct":
            _require_file(args.observations, "observation file")
            if args.truth:
                _require_file(args.truth, "ground-truth file")
            bench.cmd_reconstruct(config, args.observations, args.truth, out)
        elif args.command == "compare":
            _require_file(args.observations, "observation file")
            if not args.truth:
                raise ConfigError("compare needs --truth <field file>")
            _require_file(args.truth, "ground-truth file")
            bench.cmd_compare(config, args.observations, args.truth, out)
        else:
            _require_file(args.field, "field file")
            bench.cmd_render(args.field, out)
    except (ConfigError, FieldFormatError, bench.BenchError, FileNotFoundError) as exc:
        print(f"dalpr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"dalpr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
