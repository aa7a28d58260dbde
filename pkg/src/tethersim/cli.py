"""Command-line entry point: ``tethersim simulate | replay | validate``."""

import argparse
import logging
import os
import sys
from pathlib import Path

from . import simulation as sim
from .config import load_config, resolve_path
from .errors import ConfigParseError, ConfigValidationError, ProfileGap, TethersimError
from .mpc import controller_from_config
from .telemetry import read_profile, write_telemetry, write_trace, write_wheel_speeds

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILSAFE = 2
EXIT_SIMULATION = 3
EXIT_IO = 4

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("tethersim")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 stays reserved for the fail-safe signal."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging():
    name = os.environ.get("TETHERSIM_LOG", "error").strip().lower()
    level = LOG_LEVELS.get(name, logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if name not in LOG_LEVELS:
        log.error("TETHERSIM_LOG=%r not in %s; using 'error'", name, sorted(LOG_LEVELS))


def _load(path):
    """Returns ``(config, exit_code)``; the code is non-zero when loading failed."""
    try:
        return load_config(path), EXIT_OK
    except ConfigParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_IO if exc.line is None else EXIT_USAGE
    except ConfigValidationError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return None, EXIT_USAGE


def _side_path(out, suffix):
    out = Path(out)
    return out.with_name(f"{out.stem}_{suffix}{out.suffix or '.csv'}")


def cmd_simulate(args):
    config, code = _load(args.config)
    if config is None:
        return code
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.duration is not None:
        if args.duration <= 0:
            print("error: --duration must be positive", file=sys.stderr)
            return EXIT_USAGE
        updates["duration"] = args.duration
    if updates:
        config = sim.with_overrides(config, **updates)
    out = Path(args.out or config.output.telemetry or "telemetry.csv")
    controller = controller_from_config(config)
    try:
        records = sim.run_scenario(config, controller)
    except TethersimError as exc:
        print(f"error: simulation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    n = config.tether.n
    try:
        write_telemetry(out, records, n)
        if controller is not None:
            write_trace(args.trace or config.output.trace or _side_path(out, "trace"), controller.trace, n)
        wheels = args.wheels or config.output.wheels
        if wheels:
            write_wheel_speeds(wheels, records, config.ugv_geometry())
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    log.info("wrote %d records to %s", len(records), out)
    if controller is not None and controller.failsafe_count:
        print(f"warning: solver fail-safe engaged {controller.failsafe_count} time(s)", file=sys.stderr)
        return EXIT_FAILSAFE
    return EXIT_OK


def cmd_replay(args):
    config, code = _load(args.config)
    if config is None:
        return code
    try:
        profile = read_profile(resolve_path(args.profile))
    except OSError as exc:
        print(f"error: cannot read profile: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    out = Path(args.out or config.output.telemetry or "replay.csv")
    try:
        records = sim.replay_inputs(config, profile, args.duration)
    except ProfileGap as exc:
        print(f"error: profile gap: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except (TethersimError, ValueError) as exc:
        print(f"error: simulation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    try:
        write_telemetry(out, records, config.tether.n)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_validate(args):
    from .validation import run_checks

    results = run_checks(fast=args.fast, baumgarte=args.baumgarte_gains)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_SIMULATION


def build_parser():
    p = _Parser(prog="tethersim", description="Tethered balloon payload transport simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="closed-loop (or open-loop) run of a scenario")
    s.add_argument("--config", required=True, help="scenario JSON (bundled names accepted)")
    s.add_argument("--out", help="telemetry CSV path")
    s.add_argument("--seed", type=int, help="override sim.seed")
    s.add_argument("--duration", type=float, help="override sim.duration [s]")
    s.add_argument("--trace", help="controller trace CSV path (default <out>_trace.csv)")
    s.add_argument("--wheels", help="also write wheel-speed references to this CSV")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replay", help="open-loop run driven by an acceleration profile")
    r.add_argument("--config", required=True)
    r.add_argument("--profile", required=True, help="CSV: t, then 3 acceleration columns per rover")
    r.add_argument("--out", help="telemetry CSV path")
    r.add_argument("--duration", type=float, help="run length [s] (default: profile length)")
    r.set_defaults(func=cmd_replay)

    v = sub.add_parser("validate", help="run the built-in consistency checks")
    v.add_argument("--fast", action="store_true", help="shorter runs and fewer samples")
    v.add_argument("--baumgarte-gains", nargs=2, type=float, metavar=("ALPHA", "BETA"),
                   help="stabilisation gains for the drift check")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
