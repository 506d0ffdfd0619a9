"""Command-line entry point: ``geowalks <command> [options]``.

Exit codes: 0 success, 1 usage/config/stage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, GeoWalksError
from .pipeline import (PIPELINE, STAGES, PipelineConfig, compare, format_comparison, format_metrics,
                       run_all, run_stage, validate_manifest)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

logger = logging.getLogger("geowalks")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML pipeline config")
    common.add_argument("--input", help="N-Triples input (overrides 'input')")
    common.add_argument("--output-dir", help="artifact directory (overrides 'output_dir')")
    common.add_argument("--seed", type=int, help="global seed (overrides 'seed')")
    common.add_argument("--workers", type=int, help="worker count for walks and training")
    common.add_argument("--force", action="store_true", help="silence stale-upstream warnings")
    common.add_argument("--weighted", dest="weighted", action="store_true", default=None,
                        help="spatially weighted walks (default)")
    common.add_argument("--unweighted", dest="weighted", action="store_false",
                        help="uniform walks, ignoring edge weights")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="geowalks", description="Spatially weighted walk embeddings for RDF graphs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage -> {STAGES[name].artifact}")
    sub.add_parser("all", parents=[common], help="run " + " -> ".join(PIPELINE))
    cmp = sub.add_parser("compare", parents=[common], help="compare two evaluated runs")
    cmp.add_argument("run_a", type=Path)
    cmp.add_argument("run_b", type=Path)
    cmp.add_argument("--json", action="store_true", help="print the machine-readable report")
    val = sub.add_parser("validate", parents=[common], help="check the manifest chain of a run")
    val.add_argument("run", type=Path, nargs="?")
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig.from_dict({})
    if args.input is not None:
        cfg.input = args.input
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.weighted is not None:
        cfg.walks.weighted = args.weighted
    cfg.validate()
    return cfg


def _run(args: argparse.Namespace) -> int:
    if args.command == "compare":
        report = compare(args.run_a, args.run_b)
        print(json.dumps(report, indent=2) if args.json else format_comparison(report))
        return EXIT_OK
    if args.command == "validate":
        run = args.run or Path(load_config(args).output_dir)
        problems = validate_manifest(run)
        for p in problems:
            print(p)
        if problems:
            raise DataError(f"{len(problems)} manifest problems in {run}")
        print(f"{run}: manifest chain ok")
        return EXIT_OK

    cfg = load_config(args)
    paths = run_all(cfg, args.force) if args.command == "all" else [run_stage(args.command, cfg, args.force)]
    for p in paths:
        print(p)
    if paths[-1].name == STAGES["evaluate"].artifact:
        print(format_metrics(json.loads(paths[-1].read_text(encoding="utf-8"))))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, GeoWalksError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
