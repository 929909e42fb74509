"""
Command-line entry point, ``randomized-gmsfem``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 missing or unreadable files.
"""
import argparse
import logging
import os
import sys

from ..errors import ConfigurationError, GmsfemError, NumericalError
from .config import load_config
from .reports import emit_outputs, emit_sweep, emit_timing, emit_variability
from .runner import (
    compare_timing,
    load_bundle,
    predictor_variability,
    run_offline,
    run_online,
    run_reference,
    sweep_basis,
)

logger = logging.getLogger(name="randomized_gmsfem.harness.cli")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="randomized-gmsfem",
        description="Offline/online multiscale solves of parametric elliptic problems.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    offline = commands.add_parser("offline", help="Build and persist offline artifacts.")
    offline.add_argument("--config", required=True)
    offline.add_argument("--workers", type=int)
    offline.add_argument("--seed", type=int)
    offline.add_argument("--output", help="Artifact directory (default: config output_dir).")

    mu_help = "Comma-separated parameter vector; repeat for several."

    online = commands.add_parser("online", help="Predictor-based online solves.")
    online.add_argument("--artifacts", required=True)
    online.add_argument("--mu", type=_floats, action="append", help=mu_help)
    online.add_argument("--compare", action="store_true", help="Also run fine and GMsFEM solves.")
    online.add_argument("--predictor", choices=["gpc", "gpr", "both"])
    online.add_argument("--lmax", type=int, help="Basis functions per neighborhood.")
    online.add_argument("--output")
    online.add_argument(
        "--deterministic", action="store_true", help="Leave timing columns empty."
    )
    online.add_argument("--plot", action="store_true", help="Also export PNG heat maps.")

    sweep = commands.add_parser("sweep", help="Errors against the basis count l.")
    sweep.add_argument("--artifacts", required=True)
    sweep.add_argument("--lmax", type=int)
    sweep.add_argument("--mu", type=_floats, action="append", help=mu_help)
    sweep.add_argument("--predictor", choices=["gpc", "gpr"], default="gpc")
    sweep.add_argument("--reference", action="store_true", help="Include GMsFEM errors.")
    sweep.add_argument("--plot", action="store_true", help="Also export a PNG decay plot.")
    sweep.add_argument("--output")

    timing = commands.add_parser("timing", help="Online against full GMsFEM wall time.")
    timing.add_argument("--artifacts", required=True)
    timing.add_argument("--reps", type=int)
    timing.add_argument("--mu", type=_floats, action="append", help=mu_help)
    timing.add_argument("--l", type=_ints, default=None, help="Comma-separated basis counts.")
    timing.add_argument("--predictor", choices=["gpc", "gpr"], default="gpc")
    timing.add_argument("--output")

    reference = commands.add_parser("reference", help="Fine and GMsFEM solves only.")
    reference.add_argument("--config", required=True)
    reference.add_argument("--mu", type=_floats, action="append", help=mu_help)
    reference.add_argument("--lmax", type=int)
    reference.add_argument("--output")
    reference.add_argument("--deterministic", action="store_true")

    variability = commands.add_parser(
        "variability", help="gPC errors over several training seeds."
    )
    variability.add_argument("--config", required=True)
    variability.add_argument("--seeds", type=_ints, required=True)
    variability.add_argument("--mu", type=_floats)
    variability.add_argument("--output")
    return parser


def _mus(args, config):
    mus = args.mu if args.mu else [list(mu) for mu in config.mu_online]
    if not mus:
        raise ConfigurationError("no parameter given; pass --mu or set mu_online")
    return mus


def _offline(args):
    config = load_config(args.config, seed=args.seed, workers=args.workers)
    directory = args.output or config.output_dir
    bundle = run_offline(config, directory)
    print(f"artifacts written to {directory}; spectral gap {bundle.diagnostics['spectral_gap']:.6g}")


def _online(args):
    bundle = load_bundle(args.artifacts)
    report = run_online(
        bundle,
        _mus(args, bundle.config),
        compare=args.compare,
        predictor=args.predictor,
        n_modes=args.lmax,
    )
    directory = args.output or os.path.join(args.artifacts, "online")
    emit_outputs(report, directory, bundle.mesh, deterministic=args.deterministic)
    if args.plot:
        from ..headless.figures import export_report

        export_report(report, bundle.mesh, directory)
    print(f"online report written to {directory}")


def _sweep(args):
    bundle = load_bundle(args.artifacts)
    [mu] = _mus(args, bundle.config)[:1]
    rows = sweep_basis(bundle, mu, args.lmax, predictor=args.predictor, reference=args.reference)
    directory = args.output or os.path.join(args.artifacts, "sweep")
    emit_sweep(rows, directory)
    if args.plot:
        from ..headless.figures import decay_figure

        figure = decay_figure(rows)
        try:
            figure.export(os.path.join(directory, "decay.png"))
        finally:
            figure.close()
    print(f"sweep written to {directory}")


def _timing(args):
    bundle = load_bundle(args.artifacts)
    counts = args.l or list(range(1, bundle.n_modes + 1))
    rows = compare_timing(
        bundle, _mus(args, bundle.config), counts, args.reps, predictor=args.predictor
    )
    directory = args.output or os.path.join(args.artifacts, "timing")
    emit_timing(rows, directory)
    print(f"timing table written to {directory}")


def _reference(args):
    config = load_config(args.config)
    report = run_reference(config, _mus(args, config), n_modes=args.lmax)
    directory = args.output or os.path.join(config.output_dir, "reference")
    emit_outputs(report, directory, config.build_mesh(), deterministic=args.deterministic)
    print(f"reference report written to {directory}")


def _variability(args):
    config = load_config(args.config)
    mu = args.mu or _mus(args, config)[0]
    rows, summary = predictor_variability(config, args.seeds, mu)
    directory = args.output or os.path.join(config.output_dir, "variability")
    emit_variability(rows, summary, directory)
    print(f"variability table written to {directory}")


COMMANDS = {
    "offline": _offline,
    "online": _online,
    "sweep": _sweep,
    "timing": _timing,
    "reference": _reference,
    "variability": _variability,
}


def main(argv=None):
    """
    Run one subcommand and return the process exit code.
    """
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(
        level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    logging.captureWarnings(True)
    try:
        COMMANDS[args.command](args)
    except GmsfemError as err:
        logger.error("%s: %s", type(err).__name__, err)
        return err.exit_code
    except OSError as err:
        logger.error("I/O error: %s", err)
        return 4
    except (ValueError, ArithmeticError) as err:
        # numpy.linalg.LinAlgError is a ValueError.
        logger.error("numerical failure: %s: %s", type(err).__name__, err, exc_info=True)
        return NumericalError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
