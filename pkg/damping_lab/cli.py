#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Command Line Interface.

This is the main entry point of the lab. When the project is installed as
a Python package, a `damping-lab` executable is added in the PATH and
executes the `main` function of this module, which runs one experiment.

Exit codes: 0 when every verdict passes, 2 on a quantitative failure and 1
on a configuration error.
"""
import logging
import os
from argparse import ArgumentParser

from damping_lab import __version__
from damping_lab.config import load_config
from damping_lab.experiments import get_experiment, merge_settings
from damping_lab.logger import logger, set_logger
from damping_lab.validation import SUBCOMMANDS, InvalidSpecError, load_spec

__all__ = ["main"]

EXIT_CONFIG_ERROR = 1


def _parser():
    """Parses command-line arguments using ArgumentParser and returns it"""
    parser = ArgumentParser(prog="damping-lab")

    parser.add_argument(
        "subcommand",
        type=str,
        nargs="?",
        choices=SUBCOMMANDS,
        help="Experiment to run (defaults to the spec's subcommand)",
    )

    parser.add_argument(
        "-c",
        "--config-file",
        type=str,
        help="Configuration file",
        default=os.path.join(os.path.dirname(__file__), "..", "config.yml"),
    )

    parser.add_argument(
        "--spec",
        type=str,
        default=None,
        help="ExperimentSpec JSON file overriding the configuration",
    )

    parser.add_argument(
        "--out",
        type=str,
        default=None,
        help="Output directory for report.json, CSV files and fields",
    )

    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Seed of every sampling audit",
    )

    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Maximum number of concurrent numerical tasks",
    )

    parser.add_argument(
        "--kappa-grid",
        type=int,
        default=None,
        help="Number of y0 samples of the kappa scan",
    )

    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        "--log-level",
        type=str,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=None,
        help="Set log level for the lab.",
    )
    group.add_argument(
        "--debug",
        dest="log_level",
        action="store_const",
        const="DEBUG",
        help="Alias for --log-level DEBUG",
    )

    parser.add_argument(
        "--filebeat",
        action="store_true",
        default=False,
        help="Output in filebeat format.",
    )

    parser.add_argument(
        "--version",
        action="store_true",
        default=False,
        help="Display the version and exit.",
    )

    return parser


def _settings(args, config):
    spec = load_spec(args.spec) if args.spec else None
    name = args.subcommand or (spec or {}).get("subcommand")
    if name is None:
        raise InvalidSpecError("No subcommand on the command line or in the spec")
    if spec is not None and spec["subcommand"] != name:
        raise InvalidSpecError(
            f"Subcommand {name!r} does not match the spec's {spec['subcommand']!r}"
        )
    overrides = {
        "lab.seed": args.seed,
        "lab.threads": args.threads,
        "lab.output_dir": args.out,
        "spectral.n_y0": args.kappa_grid,
    }
    return name, merge_settings(config, spec, overrides)


def run(args):
    """Loads the config file, sets the logger and runs one experiment."""
    logger.info(f"Running damping-lab version {__version__}")

    # load config
    config = {}
    try:
        config = load_config(args.config_file)
    except Exception as e:
        # If something goes wrong while parsing config file, we still want
        # to set up the logger so that the error is reported properly
        set_logger(logging.INFO, filebeat=args.filebeat)
        logger.exception(f"Could not parse {args.config_file}:\n{e}")
        raise

    # Precedence: CLI args >> Config Setting >> INFO
    set_logger(
        args.log_level or config["lab"]["log_level"] or logging.INFO,
        filebeat=args.filebeat,
    )

    try:
        name, settings = _settings(args, config)
        return get_experiment(name, settings).run()
    except (ValueError, OSError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR


def main(args=None):
    """Entry point to the lab, responsible for all operations.

    Parses the arguments and calls `run` with them.
    If `--version` is used, displays the version and exits.
    """
    parser = _parser()
    args = parser.parse_args(args=args)
    if args.version:
        print(__version__)
        return 0
    return run(args)
