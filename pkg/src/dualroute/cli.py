"""Command-line entry point.

    dualroute synth --out panel.csv
    dualroute transform --config run.toml
    dualroute fit --config run.toml
    dualroute decompose --config run.toml
    dualroute stats --config run.toml
    dualroute report --config run.toml
    dualroute run --config run.toml [--out DIR] [--seed N]

Exit status: 0 on success, 2 on error (the failing stage is named on
stderr), 3 when the run finished with warnings such as a network whose
replication accuracy fell below threshold.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from ._accel import backend
from .config import ConfigError, load_config
from .synthetic import write_panel_csv


def _parser():
    p = argparse.ArgumentParser(prog="dualroute",
                                description="Forecast models decomposed into weights on "
                                            "historical observations.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def staged(name, help_):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.add_argument("--config", "-c", required=True, help="TOML run configuration")
        sp.add_argument("--out", "-o", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="root seed (overrides the config)")
        return sp

    staged("transform", "apply transformation codes and write transformed.csv")
    staged("fit", "build designs and fit every configured model")
    staged("decompose", "weights and contributions over the test window")
    staged("stats", "concentration, short position, leverage, turnover, OHI")
    staged("report", "RMSE against AR(4) and SVG figures with matching CSVs")
    staged("run", "all stages")
    sp = sub.add_parser("synth", help="write the bundled synthetic panel as a FRED-layout CSV",
                        parents=[common])
    sp.add_argument("--out", "-o", required=True)
    sp.add_argument("--periods", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--frequency", choices=("quarterly", "monthly"), default="quarterly")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger(__name__).info("kernel backend: %s", backend())

    if args.command == "synth":
        write_panel_csv(args.out, n_periods=args.periods, seed=args.seed,
                        frequency=args.frequency)
        print(args.out)
        return pipeline.EXIT_OK

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out or cfg.output_dir)
        if args.command == "run":
            bundle = pipeline.run(cfg, out)
            for w in bundle.warnings:
                print(f"warning: {w}", file=sys.stderr)
            print(json.dumps({"output_dir": str(out), "models": bundle.models,
                              "horizons": bundle.horizons, "warnings": bundle.warnings}))
            return bundle.exit_code
        if args.command == "transform":
            pipeline.stage_transform(cfg, out)
        elif args.command == "fit":
            pipeline.stage_fit(cfg, out)
        elif args.command == "decompose":
            warns = pipeline.stage_decompose(cfg, out)
            for w in warns:
                print(f"warning: {w}", file=sys.stderr)
            if warns:
                return pipeline.EXIT_WARN
        elif args.command == "stats":
            pipeline.stage_stats(cfg, out)
        elif args.command == "report":
            pipeline.stage_report(cfg, out)
        return pipeline.EXIT_OK
    except ConfigError as exc:
        print(f"error in stage 'config': {exc}", file=sys.stderr)
        return pipeline.EXIT_ERROR
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return pipeline.EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc} (run the earlier stages first?)", file=sys.stderr)
        return pipeline.EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
