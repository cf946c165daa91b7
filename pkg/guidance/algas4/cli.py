"""Command line entry point for batch experiments.

Reports and summaries go to stdout as JSON; logs go to stderr. Exit codes:
0 ok, 1 runtime error, 2 configuration error, 3 accuracy gate failed.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from guidance.common.logging_conf import configure_logging

from .config import RunConfig, config_schema, parse_config
from .errors import Algas4Error, ConfigError
from .pipeline import bench, export_surface, run_scenario, sweep_eww, verify_accuracy

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_ACCURACY = 3

SCENARIO_DIR = Path(__file__).parent / "scenarios"


def bundled_scenarios() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))


def resolve_config(value: str) -> Path:
    """A config path, or the name of a bundled scenario."""
    path = Path(value)
    if path.exists():
        return path
    bundled = SCENARIO_DIR / f"{path.stem}.json"
    if path.parent == Path(".") and bundled.exists():
        return bundled
    return path


def load_config(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "config", None) is None:
        config = RunConfig()
    else:
        config = parse_config(resolve_config(args.config))
    return config.with_overrides(
        seed=getattr(args, "seed", None), workers=getattr(args, "workers", None)
    )


def _emit(report) -> None:
    json.dump(report, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args)
    _emit(run_scenario(config, args.out))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    if args.print_schema:
        _emit(config_schema())
        return EXIT_OK
    if args.config is None:
        raise ConfigError("validate needs --config or --print-schema")
    config = load_config(args)
    _emit({"valid": True, "config": config.model_dump(mode="json")})
    return EXIT_OK


def cmd_verify_accuracy(args: argparse.Namespace) -> int:
    report = verify_accuracy(load_config(args), args.grid, args.frac_bits)
    _emit(report)
    return EXIT_OK if report["passed"] else EXIT_ACCURACY


def cmd_bench(args: argparse.Namespace) -> int:
    config = load_config(args)
    _emit(bench(config, args.ticks, config.workers if args.workers else 4))
    return EXIT_OK


def cmd_surface(args: argparse.Namespace) -> int:
    _emit(export_surface(load_config(args), args.out, args.n))
    return EXIT_OK


def cmd_sweep_eww(args: argparse.Namespace) -> int:
    frame = sweep_eww(load_config(args))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False, lineterminator="\n")
    _emit(json.loads(frame.to_json(orient="records")))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="algas4",
        description="Four-core landing guidance simulator",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, required=False):
        p.add_argument(
            "--config",
            required=required,
            help="JSON config path or bundled scenario name "
            f"({', '.join(bundled_scenarios()) or 'none'})",
        )

    run = sub.add_parser("run", help="Run a scenario and write its CSV trace")
    with_config(run, required=True)
    run.add_argument("--out", help="Trace path (default: config output)")
    run.add_argument("--seed", type=int, help="Override the scenario seed")
    run.add_argument("--workers", type=int, help="Phase-1 worker threads")
    run.set_defaults(handler=cmd_run)

    validate = sub.add_parser("validate", help="Validate a config without running")
    with_config(validate)
    validate.add_argument("--print-schema", action="store_true")
    validate.set_defaults(handler=cmd_validate)

    accuracy = sub.add_parser(
        "verify-accuracy", help="Fixed-point FLS vs reference over a grid"
    )
    with_config(accuracy)
    accuracy.add_argument("--grid", type=int, default=512)
    accuracy.add_argument(
        "--frac-bits", type=int, default=None, help="Internal FLS resolution"
    )
    accuracy.set_defaults(handler=cmd_verify_accuracy)

    bench_p = sub.add_parser("bench", help="Fabric ticks per second")
    with_config(bench_p)
    bench_p.add_argument("--ticks", type=int, default=100_000)
    bench_p.add_argument("--workers", type=int, help="Parallel worker count")
    bench_p.set_defaults(handler=cmd_bench)

    surface = sub.add_parser("surface", help="Export the FLS surface as CSV")
    with_config(surface)
    surface.add_argument("--out", default="surface.csv")
    surface.add_argument("--n", type=int, default=64, help="Grid points per axis")
    surface.set_defaults(handler=cmd_surface)

    sweep = sub.add_parser("sweep-eww", help="Alarm counts for every eww")
    with_config(sweep, required=True)
    sweep.add_argument("--out", help="Optional CSV path")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--workers", type=int)
    sweep.set_defaults(handler=cmd_sweep_eww)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging("algas4", level=args.log_level)
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error("Invalid configuration", extra={"errors": e.errors})
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except (Algas4Error, OSError) as e:
        logger.exception("Run failed", extra={"error": str(e)})
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
