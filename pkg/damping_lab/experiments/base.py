#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""Provides:

- `BaseExperiment`: a base class for running one CLI subcommand
- `merge_settings`: config < spec < command-line precedence
- `get_experiment`: factory
"""
import json
import os

import numpy as np

from damping_lab import __version__
from damping_lab.channel_spectral import ChannelGrid
from damping_lab.logger import logger
from damping_lab.profiles import make_profile
from damping_lab.utils import iso_utc
from damping_lab.weights import (
    DEFAULT_BIG_K,
    DEFAULT_DELTA,
    DEFAULT_DELTA0,
    WeightParams,
)

__all__ = [
    "BaseExperiment",
    "UnknownExperimentError",
    "get_experiment",
    "merge_settings",
]

SECTIONS = (
    "lab",
    "grid",
    "profile",
    "weights",
    "spectral",
    "linear",
    "nonlinear",
    "thresholds",
)
DEFAULT_OUTPUT_DIR = "lab-output"
REPORT_FILE = "report.json"
EXIT_PASSED = 0
EXIT_FAILED = 2


class UnknownExperimentError(ValueError):
    pass


_EXPERIMENTS = {}


def get_experiment(name, settings):
    """Instantiates an experiment object given a subcommand and settings"""
    if name not in _EXPERIMENTS:
        raise UnknownExperimentError(f"Unknown subcommand {name!r}")
    return _EXPERIMENTS[name](settings)


def experiment_names():
    return sorted(_EXPERIMENTS)


def merge_settings(config, spec=None, overrides=None):
    """Builds the per-run settings.

    Precedence: `overrides` (dotted keys, None values skipped) >> spec
    sections >> config sections. The spec's top-level `output_dir` and
    `seed` land in the `lab` section.
    """
    settings = {}
    for section in SECTIONS:
        settings[section] = dict(config[section]) if section in config else {}
    if spec:
        for section in SECTIONS:
            settings[section].update(spec.get(section, {}))
        for key in ("output_dir", "seed"):
            if key in spec:
                settings["lab"][key] = spec[key]
    for field, value in (overrides or {}).items():
        if value is None:
            continue
        section, sub = field.split(".")
        logger.debug(f"Command line sets {field}={value}")
        settings[section][sub] = value
    return settings


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


class _Registry(type):
    """Metaclass used to register an experiment class in an internal registry."""

    def __new__(cls, name, bases, dct):
        experiment_name = dct.get("name")
        class_instance = super().__new__(cls, name, bases, dct)
        if experiment_name is not None:
            _EXPERIMENTS[experiment_name] = class_instance
        return class_instance


class BaseExperiment(metaclass=_Registry):
    """Base class for one reproducible experiment.

    Any class deriving from this class will get added to the registry,
    given its `name` class attribute (unless it's not set).

    A concrete experiment implements `_run`, which returns the measured
    values and fills `self.verdicts`; `run` writes `report.json` and turns
    the verdicts into an exit code.
    """

    name = None  # using None here avoids registring this class

    def __init__(self, settings):
        self.settings = settings
        self.lab = settings["lab"]
        self.thresholds = settings.get("thresholds") or {}
        self.output_dir = self.lab.get("output_dir") or DEFAULT_OUTPUT_DIR
        self.seed = int(self.lab.get("seed") or 0)
        self.threads = max(1, int(self.lab.get("threads") or 1))
        self.verdicts = {}

    def profile(self):
        section = self.settings["profile"]
        kwargs = {key: section[key] for key in ("theta0", "beta0") if key in section}
        return make_profile(
            section.get("kind", "couette"), amplitude=section.get("amplitude", 0.0), **kwargs
        )

    def grid(self):
        section = self.settings["grid"]
        kwargs = {}
        if "dealias_fraction" in section:
            kwargs["dealias_fraction"] = section["dealias_fraction"]
        return ChannelGrid(section["nx"], section["ny"], **kwargs)

    def weight_params(self, delta=None):
        section = self.settings["weights"]
        delta_prime = None
        if delta is None:
            delta = section.get("delta", DEFAULT_DELTA)
            delta_prime = section.get("delta_prime")
        return WeightParams(
            delta0=section.get("delta0", DEFAULT_DELTA0),
            delta=delta,
            delta_prime=delta_prime,
            big_k=section.get("big_k", DEFAULT_BIG_K),
        )

    def path(self, *parts):
        path = os.path.join(self.output_dir, *parts)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path

    def within(self, name, value):
        """Checks `value` against the `[low, high]` range `name` of the thresholds.

        Without such a threshold the verdict is skipped (None).
        """
        bounds = self.thresholds.get(name)
        if bounds is None:
            logger.debug(f"No threshold {name!r}, skipping the verdict")
            return None
        if value is None:
            return False
        low, high = bounds
        return bool(low <= value <= high)

    def below(self, name, value):
        bound = self.thresholds.get(name)
        if bound is None:
            logger.debug(f"No threshold {name!r}, skipping the verdict")
            return None
        return bool(value <= bound)

    def verdict(self, name, passed):
        if passed is None:
            return
        self.verdicts[name] = bool(passed)
        if not passed:
            logger.warning(f"{self.name}: {name} failed")

    @property
    def passed(self):
        return all(self.verdicts.values())

    def _run(self):
        raise NotImplementedError()

    def run(self):
        logger.info(f"Running {self.name} into {self.output_dir}")
        # parameter errors surface before any compute
        p = self.profile()
        weights = self.weight_params()
        os.makedirs(self.output_dir, exist_ok=True)
        measured = self._run()
        report = {
            "subcommand": self.name,
            "version": __version__,
            "generated_at": iso_utc(),
            "seed": self.seed,
            "params": self.settings,
            "profile": {
                "name": p.name,
                "amplitude": p.amplitude,
                "theta0": p.theta0,
                "beta0": p.beta0,
            },
            "weights": weights.to_dict(),
            "verdicts": self.verdicts,
            "passed": self.passed,
            "measured": measured,
        }
        self.write_report(report)
        logger.info(f"{self.name}: {'pass' if self.passed else 'FAIL'}")
        return EXIT_PASSED if self.passed else EXIT_FAILED

    def write_report(self, report):
        path = self.path(REPORT_FILE)
        with open(path, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True, default=_jsonable)
        logger.debug(f"Wrote {path}")
