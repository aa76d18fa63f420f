#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
ExperimentSpec validation.

A spec file selects a subcommand and overrides any section of the
configuration for one run. It is checked against `EXPERIMENT_SPEC_SCHEMA`
before anything is computed.
"""
import json

import fastjsonschema

from damping_lab.channel_spectral import MIN_NX, MIN_NY

SUBCOMMANDS = (
    "check-profile",
    "spectral-scan",
    "weights-audit",
    "linear-damping",
    "nonlinear-run",
    "theorem-rates",
)

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_UNIT = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_SHIFT = {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25}
_WINDOW = {
    "type": "array",
    "items": {"type": "number", "minimum": 0},
    "minItems": 2,
    "maxItems": 2,
}
_RANGE = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 2,
    "maxItems": 2,
}


def _section(properties):
    return {"type": "object", "additionalProperties": False, "properties": properties}


EXPERIMENT_SPEC_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "ExperimentSpec",
    "type": "object",
    "additionalProperties": False,
    "required": ["subcommand"],
    "properties": {
        "subcommand": {"type": "string", "enum": list(SUBCOMMANDS)},
        "output_dir": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
        "profile": _section(
            {
                "kind": {"type": "string", "enum": ["couette", "perturbed"]},
                "amplitude": {"type": "number"},
                "theta0": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25},
                "beta0": _POSITIVE,
            }
        ),
        "grid": _section(
            {
                "nx": {"type": "integer", "minimum": MIN_NX, "multipleOf": 2},
                "ny": {"type": "integer", "minimum": MIN_NY},
                "dealias_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            }
        ),
        "weights": _section(
            {
                "delta0": _UNIT,
                "delta": _UNIT,
                "delta_prime": _UNIT,
                "big_k": {"type": "number", "minimum": 1},
                "test_delta": _UNIT,
                "samples": {"type": "integer", "minimum": 1},
                "max_frequency": _POSITIVE,
            }
        ),
        "spectral": _section(
            {
                "k_max": {"type": "integer", "minimum": 1},
                "n_y0": {"type": "integer", "minimum": 2},
                "ny": {"type": "integer", "minimum": MIN_NY},
                "eps": {
                    "type": "array",
                    "items": _SHIFT,
                    "minItems": 1,
                },
            }
        ),
        "linear": _section(
            {
                "k": {"type": "integer", "minimum": 1},
                "modulation": {"type": "number"},
                "t_end": _POSITIVE,
                "times": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0},
                    "minItems": 1,
                },
                "window": _WINDOW,
                "check_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "audit_eps": {"type": "array", "items": _SHIFT},
            }
        ),
        "nonlinear": _section(
            {
                "eps": {"type": "number", "minimum": 0},
                "t_end": _POSITIVE,
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "cadence": _POSITIVE,
                "snapshot_every": {"type": "integer", "minimum": 0},
                "window": _WINDOW,
                "eps_values": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "scaling_time": _POSITIVE,
            }
        ),
        "thresholds": _section(
            {
                "uy_slope": _RANGE,
                "ux_slope": _RANGE,
                "profile_slope": _RANGE,
                "mean_flow_slope": _RANGE,
                "representation_error": _POSITIVE,
                "t_norm_slope": {"type": "number"},
                "conservation": _POSITIVE,
                "identity_residual": _POSITIVE,
                "vpp_residual": _POSITIVE,
                "roundtrip_residual": _POSITIVE,
                "h_decay_slope": {"type": "number"},
                "energy_ratio": _RANGE,
                "strong_exponent": _RANGE,
                "energy_spread": _POSITIVE,
                "jump_exponent": _RANGE,
            }
        ),
    },
}

SCHEMA = fastjsonschema.compile(definition=EXPERIMENT_SPEC_SCHEMA)


class InvalidSpecError(ValueError):
    pass


def validate_spec(spec):
    """Validates a spec mapping and returns it with defaults untouched."""
    try:
        SCHEMA(spec)
    except fastjsonschema.JsonSchemaValueException as e:
        raise InvalidSpecError(e.message) from e
    return spec


def load_spec(path):
    with open(path) as f:
        try:
            spec = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidSpecError(f"{path} is not valid JSON: {e}") from e
    return validate_spec(spec)
