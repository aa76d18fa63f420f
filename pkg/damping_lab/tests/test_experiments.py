#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import csv
import json
import os

import numpy as np
import pytest
from freezegun import freeze_time

from damping_lab.channel_spectral import read_array
from damping_lab.config import load_config
from damping_lab.conftest import assert_re
from damping_lab.experiments import experiment_names, get_experiment, merge_settings
from damping_lab.experiments.base import UnknownExperimentError
from damping_lab.validation import SUBCOMMANDS

CONFIG_FILE = os.path.join(os.path.dirname(__file__), "config.yml")


def _settings(out, spec=None, **overrides):
    config = load_config(CONFIG_FILE)
    overrides = {key.replace("__", "."): value for key, value in overrides.items()}
    overrides["lab.output_dir"] = str(out)
    return merge_settings(config, spec, overrides)


def _report(out):
    with open(os.path.join(out, "report.json")) as f:
        return json.load(f)


def _rows(path):
    with open(path) as f:
        return list(csv.reader(f))


def test_registry():
    assert experiment_names() == sorted(SUBCOMMANDS)
    with pytest.raises(UnknownExperimentError):
        get_experiment("plot", {"lab": {}})


def test_merge_precedence():
    config = {"lab": {"seed": 0, "threads": 1}, "grid": {"nx": 16, "ny": 65}}
    spec = {"subcommand": "check-profile", "seed": 3, "grid": {"ny": 129}}
    settings = merge_settings(config, spec, {"lab.seed": 9, "lab.threads": None})
    assert settings["lab"] == {"seed": 9, "threads": 1}
    assert settings["grid"] == {"nx": 16, "ny": 129}
    assert settings["thresholds"] == {}
    # the config is left alone
    assert config["grid"]["ny"] == 65


def test_merge_without_spec(set_env):
    settings = _settings("out")
    assert settings["lab"]["output_dir"] == "out"
    assert settings["profile"]["kind"] == "couette"


@freeze_time("2026-10-18 12:00:00")
def test_check_profile(tmp_path, set_env, patch_logger):
    experiment = get_experiment("check-profile", _settings(tmp_path))
    assert experiment.run() == 0
    report = _report(tmp_path)
    assert report["generated_at"] == "2026-10-18T12:00:00+00:00"
    assert report["subcommand"] == "check-profile"
    assert report["passed"]
    assert set(report["verdicts"]) == {
        "derivative_bounds",
        "b2_support",
        "monotone",
        "gevrey_bound",
    }
    assert report["profile"] == {"name": "couette", "amplitude": 0.0, "theta0": 0.1, "beta0": 0.1}
    assert report["weights"]["delta"] == 0.01
    with open(tmp_path / "profile.json") as f:
        profile = json.load(f)
    assert profile["y"] == profile["b"]
    patch_logger.assert_present("check-profile: pass")
    assert_re(r"Running check-profile into .*", patch_logger.logs)


def test_perturbed_profile(tmp_path, set_env):
    spec = {"subcommand": "check-profile", "profile": {"kind": "perturbed", "amplitude": 0.1}}
    settings = _settings(tmp_path, spec, grid__ny=129)
    assert get_experiment("check-profile", settings).run() == 0
    assert _report(tmp_path)["profile"]["amplitude"] == 0.1


def test_spectral_scan(tmp_path, set_env):
    assert get_experiment("spectral-scan", _settings(tmp_path)).run() == 0
    report = _report(tmp_path)
    assert report["measured"]["spectral"]["kappa_min"] == pytest.approx(1.0, abs=1e-10)
    assert report["measured"]["t_norm"]["slope"] is None
    rows = _rows(tmp_path / "kappa.csv")
    assert rows[0] == ["k", "y0", "eps", "kappa", "t_norm"]
    assert len(rows) == 1 + 2 * 5 * 2


def test_kappa_grid_override(tmp_path, set_env):
    settings = _settings(tmp_path, spectral__n_y0=3)
    assert get_experiment("spectral-scan", settings).run() == 0
    assert len(_rows(tmp_path / "kappa.csv")) == 1 + 2 * 3 * 2
    assert _report(tmp_path)["params"]["spectral"]["n_y0"] == 3


def test_weights_audit(tmp_path, set_env):
    code = get_experiment("weights-audit", _settings(tmp_path)).run()
    report = _report(tmp_path)
    assert code == (0 if report["passed"] else 2)
    assert set(report["verdicts"]) == {
        "comparison_lemmas",
        "mu_R_floor",
        "test_scale_ordering",
        "small_delta_chain",
    }
    assert report["verdicts"]["mu_R_floor"]
    assert report["measured"]["audit"]["params"]["delta"] == 0.5
    assert report["measured"]["audit"]["small_params"]["delta"] == 0.01
    assert report["measured"]["audit"]["seed"] == 0


def test_linear_damping_rates(tmp_path, set_env):
    spec = {
        "subcommand": "linear-damping",
        "grid": {"nx": 16, "ny": 257},
        "profile": {"kind": "couette", "amplitude": 0.0},
        "linear": {"t_end": 200.0, "window": [50.0, 200.0], "check_times": []},
        "thresholds": {"uy_slope": [-2.3, -1.7], "ux_slope": [-1.3, -0.7]},
    }
    assert get_experiment("linear-damping", _settings(tmp_path, spec)).run() == 0
    report = _report(tmp_path)
    assert report["verdicts"] == {"uy_slope": True, "ux_slope": True}
    assert report["measured"]["representation"]["errors"] == []
    rows = _rows(tmp_path / "slopes.csv")
    assert rows[0][:2] == ["quantity", "slope"]
    assert [row[0] for row in rows[1:]] == ["ux", "uy"]
    assert len(_rows(tmp_path / "linear_k1.csv")) == 202
    assert report["measured"]["audits"] is None


def test_linear_damping_representation(tmp_path, set_env):
    spec = {
        "subcommand": "linear-damping",
        "grid": {"nx": 16, "ny": 129},
        "linear": {"t_end": 5.0, "window": [1.0, 5.0], "check_times": [5.0]},
        "thresholds": {"representation_error": 0.01},
    }
    assert get_experiment("linear-damping", _settings(tmp_path, spec)).run() == 0
    report = _report(tmp_path)
    assert report["verdicts"] == {"representation": True}
    assert report["measured"]["representation"]["times"] == [5.0]


def test_linear_damping_failure(tmp_path, set_env, patch_logger):
    spec = {
        "subcommand": "linear-damping",
        "linear": {"check_times": []},
        "thresholds": {"uy_slope": [0.0, 1.0]},
    }
    assert get_experiment("linear-damping", _settings(tmp_path, spec)).run() == 2
    report = _report(tmp_path)
    assert report["verdicts"] == {"uy_slope": False}
    assert not report["passed"]
    patch_logger.assert_present("linear-damping: uy_slope failed")


def test_nonlinear_run_without_perturbation(tmp_path, set_env):
    assert get_experiment("nonlinear-run", _settings(tmp_path)).run() == 0
    report = _report(tmp_path)
    assert report["verdicts"] == {
        "support": True,
        "conservation": True,
        "identity_residual": True,
        "vpp_residual": True,
        "bootstrap": True,
        "h_decay": True,
        "mean_flow": True,
        "roundtrip": True,
        "kernel_decay": True,
    }
    assert report["measured"]["amplitudes"]["scaling"] is None
    energies = _rows(tmp_path / "energies.csv")
    assert len(energies) == 1 + 5
    assert all(float(value) == 0 for row in energies[1:] for value in row[1:])
    assert len(_rows(tmp_path / "diagnostics.csv")) == 1 + 5
    omega = read_array(tmp_path / "fields" / "omega_final.bin")
    assert omega.shape == (16, 65)
    assert not np.any(omega)


def test_linear_damping_wall_audits(tmp_path, set_env):
    spec = {
        "subcommand": "linear-damping",
        "profile": {"kind": "perturbed", "amplitude": 0.1},
        "grid": {"nx": 16, "ny": 129},
        "linear": {
            "k": 2,
            "t_end": 2.0,
            "check_times": [],
            "audit_eps": [0.01, 0.001, 0.0001],
        },
        "thresholds": {"energy_spread": 0.2, "jump_exponent": [0.8, 3.0]},
    }
    assert get_experiment("linear-damping", _settings(tmp_path, spec)).run() == 0
    report = _report(tmp_path)
    assert report["verdicts"] == {"energy_bound": True, "boundary_jump": True}
    audits = report["measured"]["audits"]
    assert audits["energy_bound"]["eps"] == [0.01, 0.001, 0.0001]
    assert len(audits["boundary_jump"]["jumps"]) == 3


def test_nonlinear_run_amplitude_scaling(tmp_path, set_env):
    spec = {
        "subcommand": "nonlinear-run",
        "nonlinear": {"eps": 1e-2, "eps_values": [5e-3], "t_end": 1.0, "cadence": 0.25},
        "thresholds": {"energy_ratio": [0.8, 1.2], "strong_exponent": [2.4, 3.6]},
    }
    get_experiment("nonlinear-run", _settings(tmp_path, spec)).run()
    report = _report(tmp_path)
    assert report["verdicts"]["energy_ratio"]
    assert report["verdicts"]["strong_exponent"]
    amplitudes = report["measured"]["amplitudes"]
    assert amplitudes["eps"] == [5e-3, 1e-2]
    assert amplitudes["scaling"]["expected"] == pytest.approx(4.0)
    assert amplitudes["scaling"]["t"] == [pytest.approx(1.0)] * 2
    # the rerun dumps nothing of its own
    assert len(_rows(tmp_path / "diagnostics.csv")) == 1 + 5


def test_theorem_rates_without_perturbation(tmp_path, set_env):
    assert get_experiment("theorem-rates", _settings(tmp_path)).run() == 0
    report = _report(tmp_path)
    assert report["verdicts"] == {
        "profile": True,
        "mean_flow": True,
        "uy": True,
        "ux_fluct": True,
    }
    series = report["measured"]["rates"]["series"]
    for name in ("profile", "mean_flow", "uy", "ux_fluct"):
        assert series[name] == [0.0] * 5
    assert not any(report["measured"]["rates"]["u_inf"])
    assert _rows(tmp_path / "rates.csv")[0] == ["t", "profile", "mean_flow", "uy", "ux_fluct"]


def test_outputs_are_deterministic(tmp_path, set_env):
    spec = {"subcommand": "theorem-rates", "nonlinear": {"eps": 1e-2, "t_end": 1.0, "cadence": 0.25}}
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        get_experiment("theorem-rates", _settings(out, spec)).run()
        outputs.append(out)
    for name in ("diagnostics.csv", "rates.csv", "slopes.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_invalid_weights_are_a_configuration_error(tmp_path, set_env):
    spec = {"subcommand": "check-profile", "weights": {"delta": 0.01, "delta_prime": 0.05}}
    experiment = get_experiment("check-profile", _settings(tmp_path, spec))
    with pytest.raises(ValueError):
        experiment.run()
