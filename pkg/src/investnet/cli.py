"""Command-line entry point.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from . import pipeline as pl

logger = logging.getLogger("investnet")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # the subcommand copy uses SUPPRESS so it never overwrites a flag given before the subcommand
    d = argparse.SUPPRESS if suppress else None
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d, help="YAML config file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, default=d, help="root seed; overrides the config value")
    common.add_argument("--threads", type=int, default=d, help="maximum worker threads for model fitting")
    common.add_argument("--output", default=d, help="run directory; overrides the config value")
    common.add_argument("-v", "--verbose", action="count", default=d if suppress else 0,
                        help="more logging (repeatable)")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="investnet", description="Stock movement prediction from investor social data.",
                     parents=[_global_flags(False)])
    common = _global_flags(True)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("synth", parents=[common], help="generate a synthetic dataset into the data directory")
    sub.add_parser("features", parents=[common], help="build the samples file and stage counts")
    p = sub.add_parser("evaluate", parents=[common], help="rolling-window ablation of SVM and MLP")
    p.add_argument("--model", choices=("svm", "mlp", "both"), default=None,
                   help="restrict to one model (default: models listed in the config)")
    sub.add_parser("analyze", parents=[common], help="follower CCDF fit, sentiment index, co-occurrence tables")
    sub.add_parser("report", parents=[common], help="print the evaluation summary")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    models = None
    if getattr(args, "model", None):
        models = ["svm", "mlp"] if args.model == "both" else [args.model]
    try:
        cfg = pl.load_config(args.config, seed=args.seed, threads=args.threads, output=args.output, models=models)
        if args.command == "synth":
            summary = pl.run_synth(cfg)
            summary.pop("config", None)
            print(json.dumps({"data_dir": str(cfg.data_dir), **summary}, indent=2, sort_keys=True))
        elif args.command == "features":
            path, counts = pl.run_features(cfg)
            print(json.dumps({"samples": str(path), **counts}, indent=2, sort_keys=True))
        elif args.command == "evaluate":
            outdir = pl.run_evaluate(cfg)
            print(f"report written to {outdir}")
            print(pl.render_report(cfg), end="")
        elif args.command == "analyze":
            outdir = pl.run_analyze(cfg)
            print(f"analytics written to {outdir}")
        elif args.command == "report":
            print(pl.render_report(cfg), end="")
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        code = pl.exit_code(exc)
        where = getattr(exc, "stage", None)
        prefix = f"[{where}] " if where else ""
        print(f"investnet: error: {prefix}{type(exc).__name__}: {exc}", file=sys.stderr)
        if code == 3:
            logger.debug("internal error", exc_info=True)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
