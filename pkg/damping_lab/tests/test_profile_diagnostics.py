#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import csv

import numpy as np
import pytest

from damping_lab.channel_spectral import ChannelField, ChannelGrid
from damping_lab.nonlinear_lab import SimConfig, SimState, make_initial_data, run, step_rk4
from damping_lab.profile_diagnostics import (
    ENERGY_COLUMNS,
    ENERGY_NAMES,
    CoordinateMapError,
    EnergyReport,
    ProfileState,
    ProfileTracker,
    accumulate_F_star,
    amplitude_scaling,
    bootstrap_monitor,
    build_coordinates,
    elliptic_residual,
    energies,
    kernel_decay_audit,
    profile_history,
    pull_back_profile,
    push_forward_profile,
    solve_phi_prime,
    stronger_bound_exponents,
    theorem_rates,
    theta_fields,
    write_energy_csv,
)
from damping_lab.profiles import make_couette, make_perturbed_monotone

COUETTE = make_couette()
PERTURBED = make_perturbed_monotone(0.1, 0.1)
SMALL = ChannelGrid(16, 65)
GRID = ChannelGrid(16, 129)


def _initial(p, grid=GRID, eps=1e-2):
    return SimState(0.0, make_initial_data(grid, p.theta0, eps))


def _evolved(p, grid=GRID, eps=1e-2, dt=0.05, steps=20):
    state = _initial(p, grid, eps)
    for __ in range(steps):
        state = step_rk4(state, dt, p)
    return state


def _relative(values, reference):
    return np.linalg.norm(values - reference) / np.linalg.norm(reference)


def _report(t, total, h_norm=0.0):
    energies_ = dict.fromkeys(ENERGY_NAMES, 0.0)
    energies_["F"] = total
    integrals = dict.fromkeys(ENERGY_NAMES, 0.0)
    return EnergyReport(t, energies_, integrals, {}, {}, h_norm=h_norm)


@pytest.mark.parametrize("t", [0.0, 2.0])
def test_zero_amplitude_couette_map_is_trivial(t):
    state = SimState(t, ChannelField.zeros(GRID, name="omega"))
    cmap = build_coordinates(state, COUETTE)
    assert np.allclose(cmap.v_of_y, GRID.y, atol=1e-15)
    assert np.allclose(cmap.Vp, 1.0, atol=1e-12)
    assert not np.any(cmap.Bpp)
    assert not np.any(cmap.Vdot)
    assert not np.any(cmap.H)


def test_zero_amplitude_map_follows_the_profile():
    state = SimState(3.0, ChannelField.zeros(GRID, name="omega"))
    cmap = build_coordinates(state, PERTURBED)
    assert np.allclose(cmap.v_of_y, PERTURBED.b(GRID.y), atol=1e-15)
    assert np.allclose(cmap.Vp, cmap.Bp0, atol=1e-5)
    assert np.allclose(cmap.Bpp, cmap.Bpp0, atol=1e-4)
    assert not np.any(cmap.H)


def test_h_identity_holds_along_a_run():
    state = _evolved(PERTURBED)
    cmap = build_coordinates(state, PERTURBED)
    assert np.max(np.abs(cmap.H)) > 0
    assert 0 < cmap.identity_residual() <= 1e-5
    assert cmap.identity_residual() <= 5e-2 * np.max(np.abs(cmap.H))
    assert cmap.derivative_residual() <= 5e-2 * np.max(np.abs(cmap.H))


def test_inconsistent_accumulators_break_the_identity(patch_logger):
    # Phi says v = y while the vorticity drift says otherwise
    omega = ChannelField.zeros(GRID, name="omega")
    state = SimState(2.0, omega, omega_drift=0.01 * np.sin(np.pi * GRID.y))
    cmap = build_coordinates(state, COUETTE)
    assert not np.any(cmap.H_formula)
    assert cmap.identity_residual() == pytest.approx(0.005, rel=1e-6)
    patch_logger.assert_present("H identity residual")


def test_second_derivative_identity():
    cmap = build_coordinates(_evolved(PERTURBED), PERTURBED)
    assert cmap.vpp_residual() <= 1e-2


def test_non_monotone_map_aborts():
    omega = ChannelField.zeros(GRID, name="omega")
    state = SimState(1.0, omega, phi_drift=-2 * GRID.y)
    with pytest.raises(CoordinateMapError):
        build_coordinates(state, COUETTE)


def test_small_v_prime_is_reported(patch_logger):
    omega = ChannelField.zeros(GRID, name="omega")
    state = SimState(1.0, omega, omega_drift=np.full(GRID.ny, 0.97))
    build_coordinates(state, COUETTE)
    patch_logger.assert_present("V' dropped to")


def test_zero_amplitude_profile_vanishes():
    state = SimState(0.0, ChannelField.zeros(GRID, name="omega"))
    profile = pull_back_profile(state, build_coordinates(state, PERTURBED))
    assert not np.any(profile.F)
    assert not np.any(profile.phi)
    assert profile.support() is None


def test_profile_mode_zero_is_the_mean():
    state = _evolved(PERTURBED)
    cmap = build_coordinates(state, PERTURBED)
    profile = pull_back_profile(state, cmap)
    assert np.allclose(profile.F.mean(axis=0), cmap.mean_F, rtol=0, atol=1e-14)


@pytest.mark.parametrize("p", [COUETTE, PERTURBED])
def test_round_trip_reproduces_vorticity(p):
    state = _evolved(p)
    cmap = build_coordinates(state, p)
    profile = pull_back_profile(state, cmap)
    omega = push_forward_profile(profile.F, cmap, GRID)
    assert _relative(omega.values, state.omega.values) <= 1e-4


def test_pulled_back_fields_satisfy_the_elliptic_identity():
    state = _evolved(PERTURBED)
    cmap = build_coordinates(state, PERTURBED)
    assert elliptic_residual(pull_back_profile(state, cmap), cmap) <= 1e-2


def test_profile_stays_in_the_support(patch_logger):
    state = _evolved(PERTURBED)
    profile = pull_back_profile(state, build_coordinates(state, PERTURBED))
    low, high = profile.support()
    assert low >= PERTURBED.b(0.1) - 2 * profile.dv
    assert high <= PERTURBED.b(0.9) + 2 * profile.dv
    patch_logger.assert_not_present("F support")


def test_frozen_solve_of_zero_is_zero():
    assert not np.any(solve_phi_prime(np.zeros(GRID.shape), PERTURBED, 5.0))


@pytest.mark.parametrize("p, tolerance", [(COUETTE, 1e-10), (PERTURBED, 1e-4)])
def test_frozen_solution_matches_at_time_zero(p, tolerance):
    state = _initial(p)
    profile = pull_back_profile(state, build_coordinates(state, p))
    phi_prime = solve_phi_prime(profile.F, p, 0.0)
    assert not np.any(phi_prime[:, [0, -1]])
    assert _relative(phi_prime, profile.phi) <= tolerance


@pytest.mark.parametrize("p", [COUETTE, PERTURBED])
@pytest.mark.parametrize("k", [1, 2])
def test_frozen_kernel_decays(p, k):
    audit = kernel_decay_audit(p, k=k)
    assert audit["decaying"]
    assert audit["slope"] < 0
    assert audit["envelope"][-1] < audit["envelope"][0]


def test_F_star_without_curvature_is_F():
    times = np.linspace(0.0, 1.0, 5)
    F = np.random.default_rng(3).normal(size=(5, 16, 65))
    dz = np.random.default_rng(4).normal(size=(5, 16, 65))
    F_star = accumulate_F_star(times, dz, F, np.zeros(65))
    assert np.array_equal(F_star, F)


def test_F_star_starts_at_F():
    F = np.ones((3, 4, 5))
    F_star = accumulate_F_star([0.0, 0.5, 1.0], np.ones((3, 4, 5)), F, np.ones(5))
    assert np.array_equal(F_star[0], F[0])


def test_F_star_rate_matches_the_forcing():
    times = np.linspace(0.0, 2.0, 81)
    pattern = np.outer(np.cos(np.arange(8)), np.linspace(0.0, 1.0, 9))
    dz = np.sin(times)[:, None, None] * pattern[None]
    curvature = np.linspace(-1.0, 1.0, 9)
    F = np.zeros((81, 8, 9))
    gap = F - accumulate_F_star(times, dz, F, curvature)
    rate = np.diff(gap, axis=0) / np.diff(times)[:, None, None]
    middle = np.sin(0.5 * (times[1:] + times[:-1]))[:, None, None] * pattern[None]
    assert np.max(np.abs(rate - curvature * middle)) <= 1e-3


def test_theta_of_zero_is_zero():
    zeros = np.zeros(GRID.shape)
    theta, theta_star = theta_fields(zeros, zeros, np.ones(GRID.ny), 4.0, 0.01)
    assert not np.any(theta)
    assert not np.any(theta_star)


def test_theta_star_vanishes_at_time_zero_for_couette():
    state = _initial(COUETTE)
    cmap = build_coordinates(state, COUETTE)
    profile = pull_back_profile(state, cmap)
    profile.complete(solve_phi_prime(profile.F, COUETTE, 0.0), profile.F)
    assert np.linalg.norm(profile.theta) > 0
    assert np.linalg.norm(profile.theta_star) <= 1e-8 * np.linalg.norm(profile.theta)


def test_theta_star_is_small_on_a_short_run():
    tracker = profile_history([_initial(PERTURBED), _evolved(PERTURBED)], PERTURBED)
    assert [check["t"] for check in tracker.checks] == [0.0, pytest.approx(1.0)]
    assert tracker.checks[-1]["theta_star_ratio"] <= 1e-2
    assert tracker.checks[-1]["identity_residual"] <= 1e-5
    assert tracker.checks[0]["roundtrip_residual"] <= 1e-3
    assert tracker.checks[-1]["roundtrip_residual"] <= 1e-3


def test_energies_of_zero_fields_vanish():
    state = SimState(0.0, ChannelField.zeros(GRID, name="omega"))
    report = ProfileTracker(COUETTE).update(state)
    assert report.energies == dict.fromkeys(ENERGY_NAMES, 0.0)
    assert report.integrals == dict.fromkeys(ENERGY_NAMES, 0.0)


def test_energies_need_completed_fields():
    state = _initial(COUETTE)
    cmap = build_coordinates(state, COUETTE)
    with pytest.raises(ValueError):
        energies(pull_back_profile(state, cmap), cmap)


def test_energy_scales_with_the_square_of_the_amplitude():
    values = []
    for eps in (2e-3, 1e-3):
        values.append(ProfileTracker(PERTURBED).update(_initial(PERTURBED, eps=eps)))
    assert values[0].energies["F"] / values[1].energies["F"] == pytest.approx(4.0, rel=0.2)
    assert values[0].energies["Theta"] / values[1].energies["Theta"] == pytest.approx(4.0, rel=0.2)


def test_space_time_integrals_grow_along_a_run(tmp_path):
    result = run(SimConfig(PERTURBED, SMALL, eps=1e-2, t_end=3.0, cadence=0.5))
    tracker = profile_history(result.snapshots, PERTURBED)
    reports = tracker.reports
    assert len(reports) == 7
    for report in reports:
        assert all(value >= 0 for value in report.energies.values())
        assert all(value >= 0 for value in report.integrals.values())
    for name in ENERGY_NAMES:
        series = [report.integrals[name] for report in reports]
        assert all(later >= earlier for earlier, later in zip(series, series[1:]))
    assert reports[-1].integrals["F"] > 0
    assert reports[-1].b_f_mu >= 0

    with pytest.raises(ValueError):
        tracker.update(result.snapshots[0])

    path = tmp_path / "energies.csv"
    write_energy_csv(path, reports)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == ENERGY_COLUMNS
    assert len(rows[0]) == 19
    assert len(rows) == 8


def test_bootstrap_passes_trivially_without_data():
    verdict = bootstrap_monitor([_report(0.0, 0.0), _report(2.0, 0.0)], 0.0)
    assert verdict["passed"]
    assert [row["margin"] for row in verdict["rows"]] == [0.0, 0.0]
    assert verdict["h_decay"]["bounded"]


def test_bootstrap_checks_both_regimes():
    eps = 1e-3
    eps1 = eps ** (2 / 3)
    verdict = bootstrap_monitor(
        [_report(0.5, 50 * eps1**3), _report(2.0, 0.5 * eps1**2), _report(3.0, 2 * eps1**2)],
        eps,
    )
    assert verdict["eps1"] == pytest.approx(1e-2)
    assert [row["passed"] for row in verdict["rows"]] == [True, True, False]
    assert not verdict["passed"]
    assert verdict["rows"][0]["bound"] == pytest.approx(100 * eps1**3)


def test_bootstrap_flags_slow_h_decay():
    slow = [_report(t, 0.0, h_norm=1.0) for t in (1.0, 2.0, 10.0, 50.0)]
    fast = [_report(t, 0.0, h_norm=t**-1.0) for t in (1.0, 2.0, 10.0, 50.0)]
    assert not bootstrap_monitor(slow, 1e-3)["h_decay"]["bounded"]
    assert bootstrap_monitor(fast, 1e-3)["h_decay"]["bounded"]


def test_stronger_bound_exponent():
    series = {eps: [_report(2.0, 7.0 * eps**2)] for eps in (1e-3, 5e-4, 2.5e-4)}
    exponents = stronger_bound_exponents(series)
    assert exponents["F"] == pytest.approx(3.0)
    assert exponents["Theta"] is None


def test_amplitude_scaling_of_a_quadratic_energy():
    series = {
        1e-3: [_report(40.0, 7.0 * 1e-6), _report(50.0, 7.0 * 1e-6), _report(60.0, 1.0)],
        5e-4: [_report(49.0, 7.0 * 2.5e-7)],
    }
    scaling = amplitude_scaling(series, at=50.0)
    assert scaling["eps"] == [1e-3, 5e-4]
    assert scaling["t"] == [50.0, 49.0]
    assert scaling["ratio"] == pytest.approx(4.0)
    assert scaling["relative"] == pytest.approx(1.0)


def test_amplitude_scaling_needs_two_amplitudes():
    assert amplitude_scaling({1e-3: [_report(50.0, 1.0)], 0.0: [_report(50.0, 0.0)]}) is None
    scaling = amplitude_scaling({1e-3: [_report(50.0, 1.0)], 5e-4: [_report(50.0, 0.0)]})
    assert scaling["ratio"] is None
    assert scaling["relative"] is None


def test_couette_rates():
    couette = make_couette(theta0=0.05)
    grid = ChannelGrid(16, 257)
    result = run(SimConfig(couette, grid, eps=1e-3, t_end=160.0, cadence=1.0))
    rates = theorem_rates(result.snapshots, couette, window=(80.0, 160.0))
    fits = rates["fits"]
    assert fits["uy"]["slope"] == pytest.approx(-2.0, abs=0.5)
    assert fits["ux_fluct"]["slope"] == pytest.approx(-1.0, abs=0.5)
    assert fits["mean_flow"]["window"] == [40.0, 80.0]
    assert len(rates["u_inf"]) == grid.ny
    assert rates["series"]["profile"][-1] == 0.0
    assert rates["series"]["mean_flow"][-1] <= 1e-12 * max(rates["series"]["mean_flow"])
    assert rates["horizon"] == pytest.approx(160.0)


def test_default_rate_windows():
    result = run(SimConfig(COUETTE, GRID, eps=1e-3, t_end=8.0, cadence=1.0))
    fits = theorem_rates(result.snapshots, COUETTE)["fits"]
    assert fits["uy"]["window"] == [4.0, 8.0]
    assert fits["profile"]["window"] == [2.0, 4.0]
