import argparse
import logging
import sys

from . import exitcodes
from . import logging as fransim_logging
from .config import POLICIES, SimConfig
from .errors import ConfigError, NumericFailure
from .harness import SWEEP_DIMENSIONS, compare_at_slot, compare_policies, run_experiment, sweep

log = logging.getLogger("fransim")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fransim", description="Uplink sliced F-RAN mode selection and resource allocation"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Python configuration file with one dict per section")
    common.add_argument("--seed", type=int, action="append", help="Seed to run (repeatable)")
    common.add_argument("--out", help="Output directory")
    common.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Replace one configuration value (repeatable)",
    )
    common.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="Simulate the configured policy")
    sp = sub.add_parser("sweep", parents=[common], help="Run one experiment per grid value")
    sp.add_argument("dimension", choices=SWEEP_DIMENSIONS)
    cp = sub.add_parser("compare", parents=[common], help="Compare policies on the same seeds")
    cp.add_argument("policies", nargs="+", choices=POLICIES)
    op = sub.add_parser("oracle", parents=[common], help="Run the exhaustive-search oracle")
    for p in (cp, op):
        p.add_argument(
            "--slot", type=int, help="Decide this one slot from a shared snapshot instead of a run"
        )
    return parser


def load_config(args) -> SimConfig:
    overrides = list(args.override)
    if args.seed:
        overrides.append(f"experiment.seeds={tuple(args.seed)!r}")
    if args.command == "oracle":
        overrides.append("experiment.policy='exhaustive'")
    return SimConfig.load(args.config, overrides)


def dispatch(args) -> None:
    config = load_config(args)
    out_dir = args.out or config.experiment.out_dir
    slot = getattr(args, "slot", None)
    if args.command == "oracle" and slot is not None:
        compare_at_slot(config, ["exhaustive"], slot, out_dir)
    elif args.command in ("run", "oracle"):
        run_experiment(config, out_dir)
    elif args.command == "sweep":
        sweep(config, args.dimension, out_dir)
    elif slot is not None:
        compare_at_slot(config, args.policies, slot, out_dir)
    else:
        compare_policies(config, args.policies, out_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        fransim_logging.set_level(logging.DEBUG)
    try:
        dispatch(args)
    except ConfigError as e:
        log.error(f"Configuration error: {e}")
        return exitcodes.CONFIG_ERROR
    except NumericFailure as e:
        log.error(f"Numerical failure: {e}")
        return exitcodes.NUMERIC_FAILURE
    except OSError as e:
        log.error(f"I/O failure on {e.filename or 'output'}: {e.strerror or e}")
        return exitcodes.IO_FAILURE
    return exitcodes.OK


if __name__ == "__main__":
    sys.exit(main())
