#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import json
import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from damping_lab.validation import (
    EXPERIMENT_SPEC_SCHEMA,
    SUBCOMMANDS,
    InvalidSpecError,
    load_spec,
    validate_spec,
)


@pytest.mark.parametrize("subcommand", SUBCOMMANDS)
def test_minimal_spec(subcommand):
    spec = {"subcommand": subcommand}
    assert validate_spec(spec) is spec


def test_full_spec():
    spec = {
        "subcommand": "nonlinear-run",
        "output_dir": "out",
        "seed": 3,
        "profile": {"kind": "perturbed", "amplitude": 0.1, "theta0": 0.1, "beta0": 0.1},
        "grid": {"nx": 128, "ny": 257},
        "weights": {"delta": 0.01, "test_delta": 0.5, "big_k": 10},
        "nonlinear": {
            "eps": 1e-3,
            "eps_values": [5e-4],
            "scaling_time": 50.0,
            "t_end": 100.0,
            "cadence": 1.0,
            "window": [50, 100],
        },
        "thresholds": {
            "uy_slope": [-2.5, -1.5],
            "identity_residual": 1e-5,
            "energy_ratio": [0.8, 1.2],
            "strong_exponent": [2.4, 3.6],
            "h_decay_slope": 0.1,
        },
    }
    validate_spec(spec)


@pytest.mark.parametrize(
    "spec, message",
    [
        (
            {"subcommand": "check-profile", "grid": {"nx": 8, "ny": 129}},
            "data.grid.nx must be bigger than or equal to 16",
        ),
        (
            {"subcommand": "check-profile", "grid": {"nx": 17, "ny": 129}},
            "data.grid.nx must be multiple of 2",
        ),
        (
            {"subcommand": "check-profile", "grid": {"nx": 16, "ny": 33}},
            "data.grid.ny must be bigger than or equal to 65",
        ),
        ({"subcommand": "plot"}, "data.subcommand must be one of"),
        ({"subcommand": "check-profile", "seed": -1}, "data.seed must be bigger than or equal to 0"),
        ({"subcommand": "nonlinear-run", "nonlinear": {"cfl": 0.9}}, "data.nonlinear.cfl must be smaller than or equal to 0.5"),
        ({"subcommand": "linear-damping", "linear": {"window": [10]}}, "data.linear.window must contain at least 2 items"),
        ({"subcommand": "linear-damping", "linear": {"audit_eps": [0.5]}}, "data.linear.audit_eps"),
        ({"subcommand": "nonlinear-run", "thresholds": {"energy_ratio": 4}}, "data.thresholds.energy_ratio must be array"),
        ({"subcommand": "check-profile", "profile": {"kind": "jet"}}, "data.profile.kind must be one of"),
        ({"grid": {"nx": 16}}, "data must contain"),
        ({"subcommand": "check-profile", "queue": "nightly"}, "data must not contain"),
    ],
)
def test_invalid_spec(spec, message):
    with pytest.raises(InvalidSpecError) as e:
        validate_spec(spec)
    assert str(e.value).startswith(message)


@given(st.integers(8, 2048).map(lambda n: 2 * n), st.integers(65, 4097))
def test_any_admissible_grid_validates(nx, ny):
    validate_spec({"subcommand": "nonlinear-run", "grid": {"nx": nx, "ny": ny}})


def test_schema_is_publishable():
    text = json.dumps(EXPERIMENT_SPEC_SCHEMA)
    assert json.loads(text)["properties"]["subcommand"]["enum"] == list(SUBCOMMANDS)


def test_load_spec(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"subcommand": "weights-audit", "seed": 4}))
    assert load_spec(path) == {"subcommand": "weights-audit", "seed": 4}


def test_load_spec_not_json(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text("subcommand: weights-audit")
    with pytest.raises(InvalidSpecError, match="not valid JSON"):
        load_spec(path)


SPECS = os.path.join(os.path.dirname(__file__), "..", "..", "specs")


@pytest.mark.parametrize("name", sorted(os.listdir(SPECS)))
def test_shipped_specs(name):
    spec = load_spec(os.path.join(SPECS, name))
    assert spec["subcommand"] in SUBCOMMANDS
