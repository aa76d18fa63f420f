#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import csv

import numpy as np
import pytest

from damping_lab.channel_spectral import ChannelField, ChannelGrid, read_field
from damping_lab.linear_flow import fit_power_law
from damping_lab.nonlinear_lab import (
    DIAGNOSTIC_COLUMNS,
    BlowupError,
    CFLViolationError,
    InvalidSimConfigError,
    SimConfig,
    SimState,
    dy4,
    linearized_rhs,
    make_initial_data,
    mean_flow_monitor,
    reflect_x,
    rhs,
    run,
    step_rk4,
    write_diagnostics_csv,
)
from damping_lab.profiles import gevrey_norm_estimate, make_couette, make_perturbed_monotone

COUETTE = make_couette()
PERTURBED = make_perturbed_monotone(0.1, 0.1)
SMALL = ChannelGrid(16, 65)
GRID = ChannelGrid(16, 129)


def _evolve(state, dt, steps, p=PERTURBED):
    for __ in range(steps):
        state = step_rk4(state, dt, p)
    return state


def _relative(values, reference):
    return np.linalg.norm(values - reference) / np.linalg.norm(reference)


def test_initial_data_has_zero_mean_and_support():
    omega = make_initial_data(GRID, 0.1, 1e-3)
    assert np.max(np.abs(omega.values.mean(axis=0))) <= 1e-18
    outside = (GRID.y <= 0.2) | (GRID.y >= 0.8)
    assert not np.any(omega.values[:, outside])
    assert np.max(np.abs(omega.values)) == pytest.approx(1e-3, rel=1e-12)


def test_initial_data_gevrey_norm_is_finite():
    omega = make_initial_data(GRID, 0.1, 1e-3)
    norm = gevrey_norm_estimate(omega, 0.05, 0.5)
    assert np.isfinite(norm)
    assert norm > omega.l2_norm()


def test_initial_shape_is_projected():
    omega = make_initial_data(GRID, 0.1, 1.0, shape=lambda x, y: 1.0 + np.sin(2 * x) * y)
    assert np.max(np.abs(omega.values.mean(axis=0))) <= 1e-15


def test_initial_shape_must_fit_grid():
    with pytest.raises(InvalidSimConfigError):
        make_initial_data(GRID, 0.1, 1.0, shape=np.ones((4, 4)))


@pytest.mark.parametrize(
    "kwargs",
    [{"eps": -1.0}, {"t_end": 0.0}, {"dt": -0.1}, {"cfl": 0.9}, {"cadence": 0.0}],
)
def test_config_rejects(kwargs):
    with pytest.raises(InvalidSimConfigError):
        SimConfig(COUETTE, GRID, **kwargs)


def test_dy4_is_fourth_order():
    errors = []
    for ny in (65, 129):
        y = np.linspace(0.0, 1.0, ny)
        values = np.sin(3 * y)[None, :]
        derivative = dy4(values, y[1] - y[0])[0]
        errors.append(np.max(np.abs(derivative[2:-2] - 3 * np.cos(3 * y[2:-2]))))
    assert errors[0] / errors[1] > 12


def test_rhs_of_zero_is_zero():
    assert not np.any(rhs(ChannelField.zeros(GRID), PERTURBED).values)


def test_rhs_integrates_to_zero():
    omega = make_initial_data(GRID, 0.1, 1.0)
    assert abs(rhs(omega, COUETTE).integral()) <= 1e-12


def test_rhs_departs_quadratically_from_linearization():
    ratios = []
    for eps in (1e-4, 1e-5):
        omega = make_initial_data(GRID, 0.1, eps)
        difference = rhs(omega, COUETTE).values - linearized_rhs(omega, COUETTE).values
        ratios.append(np.linalg.norm(difference) / eps**2)
    assert ratios[0] > 0
    assert ratios[1] == pytest.approx(ratios[0], rel=1e-6)


def test_vorticity_is_conserved():
    state = SimState(0.0, make_initial_data(SMALL, 0.1, 1e-2))
    scale = np.sum(np.abs(state.omega.values)) * SMALL.dx * SMALL.h
    mass = state.omega.integral()
    state = _evolve(state, 0.05, 1000)
    assert abs(state.omega.integral() - mass) <= 1e-10 * scale
    assert abs(state.uy.integral()) <= 1e-12 * scale


def test_reversibility():
    start = SimState(0.0, make_initial_data(SMALL, 0.1, 1e-2))
    state = _evolve(start, 0.05, 20)
    state = reflect_x(_evolve(reflect_x(state), 0.05, 20))
    assert _relative(state.omega.values, start.omega.values) <= 1e-6


def test_rk4_order():
    start = SimState(0.0, make_initial_data(SMALL, 0.1, 1e-2))
    reference = _evolve(start, 0.0125, 80).omega.values
    coarse = _relative(_evolve(start, 0.1, 10).omega.values, reference)
    fine = _relative(_evolve(start, 0.05, 20).omega.values, reference)
    assert 10 < coarse / fine < 24


def test_drift_accumulators_start_at_zero():
    state = SimState(0.0, make_initial_data(SMALL, 0.1, 1e-2))
    assert not np.any(state.phi_drift)
    later = step_rk4(state, 0.05, PERTURBED)
    expected = 0.025 * (state.mean_ux + later.mean_ux)
    assert np.array_equal(later.phi_drift, expected)


def test_zero_amplitude_run_is_static():
    result = run(SimConfig(COUETTE, SMALL, eps=0.0, t_end=2.0, cadence=0.5))
    assert [row["t"] for row in result.rows] == [0.0, 0.5, 1.0, 1.5, 2.0]
    for state in result.snapshots:
        assert not np.any(state.omega.values)
    assert result.column("uy_inf").max() == 0.0
    assert result.conservation() == 0.0
    assert not result.support_violations


def test_cfl_violation():
    with pytest.raises(CFLViolationError):
        run(SimConfig(COUETTE, SMALL, eps=1e-3, t_end=1.0, dt=0.5))


def test_blowup_dumps_last_state(tmp_path, monkeypatch):
    from damping_lab import nonlinear_lab

    def _broken(state, dt, p, dealias=True):
        values = np.full(state.grid.shape, np.nan)
        return SimState(state.t + dt, ChannelField(state.grid, values))

    monkeypatch.setattr(nonlinear_lab, "step_rk4", _broken)
    config = SimConfig(COUETTE, SMALL, eps=1e-3, t_end=1.0, output_dir=str(tmp_path))
    with pytest.raises(BlowupError):
        run(config)
    last = read_field(tmp_path / "fields" / "last_good.bin")
    assert np.max(np.abs(last.values)) == pytest.approx(1e-3, rel=1e-12)


def test_snapshots_and_csv(tmp_path):
    config = SimConfig(
        PERTURBED,
        SMALL,
        eps=1e-3,
        t_end=1.0,
        cadence=0.25,
        snapshot_every=2,
        output_dir=str(tmp_path),
    )
    result = run(config)
    assert sorted(p.name for p in (tmp_path / "fields").iterdir()) == [
        "omega_00002.bin",
        "omega_00004.bin",
    ]
    path = tmp_path / "diagnostics.csv"
    write_diagnostics_csv(path, result)
    with open(path) as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == DIAGNOSTIC_COLUMNS
    assert len(rows) == 6


def test_support_stays_in_halo():
    result = run(SimConfig(PERTURBED, SMALL, eps=1e-3, t_end=5.0))
    assert not result.support_violations
    assert result.column("supmin_y").min() >= 0.1
    assert result.column("supmax_y").max() <= 0.9
    assert result.conservation() <= 1e-10


def test_mean_flow_monitor():
    result = run(SimConfig(COUETTE, GRID, eps=1e-2, t_end=3.0, cadence=0.1))
    report = mean_flow_monitor(result.snapshots, 0.1)
    assert report["passed"]
    assert report["max_mismatch"] <= 0.05
    assert report["wall_max"] <= 1e-8 * 1e-2


def test_mean_flow_monitor_at_rest():
    result = run(SimConfig(COUETTE, SMALL, eps=0.0, t_end=1.0, cadence=0.25))
    report = mean_flow_monitor(result.snapshots, 0.1)
    assert report["passed"]
    assert report["max_mismatch"] == 0.0
    assert report["wall_max"] == 0.0


def test_couette_damping():
    # data on [0.1, 0.9] leave the Orr transient before t = 80
    couette = make_couette(theta0=0.05)
    result = run(SimConfig(couette, ChannelGrid(16, 257), eps=1e-3, t_end=160.0))
    uy = fit_power_law(result.column("t"), result.column("uy_inf"), (80.0, 160.0))
    ux = fit_power_law(result.column("t"), result.column("uxfluct_inf"), (80.0, 160.0))
    assert uy["slope"] == pytest.approx(-2.0, abs=0.5)
    assert ux["slope"] == pytest.approx(-1.0, abs=0.5)
