#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#

import os

from envyaml import EnvYAML

from damping_lab.logger import logger

# dotted keys a DAMPING_LAB_OVERRIDES file is allowed to replace
OVERRIDABLE_FIELDS = (
    "lab.log_level",
    "lab.threads",
    "lab.output_dir",
    "lab.seed",
    "grid.nx",
    "grid.ny",
    "weights.delta",
    "weights.test_delta",
    "nonlinear.eps",
    "nonlinear.t_end",
)


def load_config(config_file):
    logger.info(f"Loading config from {config_file}")
    configuration = EnvYAML(config_file)
    _overrides_config(configuration)
    return configuration


def _overrides_config(configuration):
    if "DAMPING_LAB_OVERRIDES" not in os.environ:
        return
    logger.info("Found DAMPING_LAB_OVERRIDES, loading overrides")
    overrides = EnvYAML(os.environ["DAMPING_LAB_OVERRIDES"])
    for field in OVERRIDABLE_FIELDS:
        if field not in overrides:
            continue
        section, sub = field.split(".")
        logger.debug(f"Overriding {field}")
        configuration[section][sub] = overrides[field]
