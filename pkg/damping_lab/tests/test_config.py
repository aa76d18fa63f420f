#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import os
from unittest import mock

import pytest
from envyaml import EnvYAML

from damping_lab.config import load_config

CONFIG_FILE = os.path.join(os.path.dirname(__file__), "config.yml")
OVERRIDES_FILE = os.path.join(os.path.dirname(__file__), "overrides.yml")


def test_bad_config_file():
    with pytest.raises(FileNotFoundError):
        load_config("BEEUUUAH")


def test_config(set_env):
    config = load_config(CONFIG_FILE)
    assert isinstance(config, EnvYAML)
    assert config["grid"]["nx"] == 16
    # expanded from the environment
    assert config["lab"]["output_dir"] == "lab-output"


def test_config_with_overrides(set_env, patch_logger):
    with mock.patch.dict(os.environ, {"DAMPING_LAB_OVERRIDES": OVERRIDES_FILE}):
        config = load_config(CONFIG_FILE)
    assert config["lab"]["seed"] == 7
    assert config["nonlinear"]["t_end"] == 3.0
    # not overridable
    assert config["profile"]["kind"] == "couette"
    patch_logger.assert_present("Overriding lab.seed")


def test_default_config():
    config = load_config(os.path.join(os.path.dirname(__file__), "..", "..", "config.yml"))
    assert config["lab"]["log_level"] == "INFO"
    assert config["grid"]["nx"] % 2 == 0
    assert config["weights"]["test_delta"] == 0.5
