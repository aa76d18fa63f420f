#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from damping_lab.channel_spectral import (
    ChannelField,
    ChannelGrid,
    GridMismatchError,
    InvalidFieldError,
    InvalidGridError,
    ModeFunction,
    SingularSystemError,
    green_function,
    green_quadrature_solve,
    poisson_mode_solve,
    read_field,
    velocity_from_vorticity,
    write_field,
    write_field_csv,
    x_average,
)

NX = 16
NY = 129
GRID = ChannelGrid(NX, NY)
H = GRID.h


def test_grid_nodes():
    assert GRID.y[0] == 0.0
    assert GRID.y[-1] == 1.0
    assert np.all(np.diff(GRID.y) > 0)
    assert list(GRID.wavenumbers) == list(range(NX // 2 + 1))


@pytest.mark.parametrize(
    "nx, ny, fraction",
    [(15, 129, 2 / 3), (8, 129, 2 / 3), (16, 33, 2 / 3), (16, 129, 0.0), (16, 129, 1.5)],
)
def test_grid_rejects(nx, ny, fraction):
    with pytest.raises(InvalidGridError):
        ChannelGrid(nx, ny, dealias_fraction=fraction)


def test_green_examples():
    assert green_function(0, 0.5, 0.5) == pytest.approx(0.25)
    assert green_function(3, 0.0, 0.7) == 0.0
    assert green_function(5, 0.3, 0.6) == green_function(5, 0.6, 0.3)


def test_green_large_k_is_finite():
    values = green_function(400, GRID.y[:, None], GRID.y[None, :])
    assert np.all(np.isfinite(values))
    assert np.all(values >= 0)
    # diagonal behaves like 1 / (2|k|) away from the walls
    assert values[NY // 2, NY // 2] == pytest.approx(1 / 800, rel=1e-10)


def test_green_symmetry_samples():
    rng = np.random.default_rng(0)
    k = rng.integers(-40, 41, size=200)
    y = rng.random(200)
    z = rng.random(200)
    for k_, y_, z_ in zip(k, y, z, strict=True):
        assert abs(green_function(k_, y_, z_) - green_function(k_, z_, y_)) <= 1e-13


@given(
    st.integers(min_value=-64, max_value=64),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_green_symmetry_property(k, y, z):
    assert abs(green_function(k, y, z) - green_function(k, z, y)) <= 1e-13


def test_poisson_zero():
    phi = poisson_mode_solve(2, ModeFunction(2, GRID.y, np.zeros(NY)))
    assert np.all(phi.values == 0)


def test_poisson_sine():
    f = ModeFunction(1, GRID.y, -(np.pi**2 + 1) * np.sin(np.pi * GRID.y))
    phi = poisson_mode_solve(1, f)
    assert np.max(np.abs(phi.values - np.sin(np.pi * GRID.y))) <= 2 * H**2


def test_poisson_constant_k0():
    phi = poisson_mode_solve(0, ModeFunction(0, GRID.y, np.ones(NY)))
    expected = GRID.y * (GRID.y - 1) / 2
    assert np.max(np.abs(phi.values - expected)) <= 1e-12


def test_poisson_too_small():
    y = np.array([0.0, 1.0])
    with pytest.raises(SingularSystemError):
        poisson_mode_solve(1, ModeFunction(1, y, np.ones(2)))


@pytest.mark.parametrize("k", range(17))
def test_poisson_matches_green_oracle(k):
    rng = np.random.default_rng(k)
    c = rng.normal(size=2) + 1j * rng.normal(size=2)
    values = c[0] * np.sin(np.pi * GRID.y) + c[1] * np.sin(2 * np.pi * GRID.y)
    f = ModeFunction(k, GRID.y, values)
    solved = poisson_mode_solve(k, f)
    oracle = green_quadrature_solve(k, f)
    error = np.linalg.norm(solved.values - oracle.values)
    assert error <= 5 / NY**2 * np.linalg.norm(oracle.values)


def test_green_oracle_k0_is_exact_for_quadratics():
    f = ModeFunction(0, GRID.y, np.ones(NY))
    oracle = green_quadrature_solve(0, f)
    assert np.max(np.abs(oracle.values - GRID.y * (GRID.y - 1) / 2)) <= 1e-12


def test_mode_conjugate_symmetry():
    rng = np.random.default_rng(3)
    field = ChannelField(GRID, rng.normal(size=GRID.shape))
    plus = field.mode(3)
    minus = field.mode(-3)
    assert np.allclose(plus.values, np.conj(minus.values))
    assert minus.k == -3
    assert np.allclose(plus.conj().values, minus.values)


def test_field_rejects_shape():
    with pytest.raises(GridMismatchError):
        ChannelField(GRID, np.zeros((NX, NY - 1)))


def test_field_dirichlet_flag():
    values = np.ones(GRID.shape)
    with pytest.raises(InvalidFieldError):
        ChannelField(GRID, values, dirichlet=True)
    values[:, [0, -1]] = 0.0
    assert ChannelField(GRID, values, dirichlet=True).dirichlet


def test_velocity_zero():
    ux, uy = velocity_from_vorticity(ChannelField.zeros(GRID))
    assert np.all(ux.values == 0)
    assert np.all(uy.values == 0)


def test_velocity_analytic():
    x, y = np.meshgrid(GRID.x, GRID.y, indexing="ij")
    omega = ChannelField(GRID, -np.sin(np.pi * y) * (np.pi**2 + 1) * np.cos(x))
    ux, uy = velocity_from_vorticity(omega)
    expected = -np.sin(x) * np.sin(np.pi * y)
    assert np.max(np.abs(uy.values - expected)) <= 2 * H**2
    assert np.all(uy.values[:, [0, -1]] == 0)
    assert np.max(np.abs(ux.values + np.pi * np.cos(x) * np.cos(np.pi * y))) <= 0.01


def test_velocity_grid_mismatch():
    with pytest.raises(GridMismatchError):
        velocity_from_vorticity(ChannelField.zeros(GRID), grid=ChannelGrid(NX, 65))


def test_velocity_mean_and_integral():
    rng = np.random.default_rng(7)
    omega = ChannelField(GRID, rng.normal(size=GRID.shape))
    __, uy = velocity_from_vorticity(omega)
    assert np.max(np.abs(x_average(uy))) <= 1e-13
    assert abs(uy.integral()) <= 1e-12


def test_x_average():
    x, y = np.meshgrid(GRID.x, GRID.y, indexing="ij")
    g = np.exp(-y)
    assert np.allclose(x_average(ChannelField(GRID, np.full(GRID.shape, 2.5))), 2.5)
    assert np.max(np.abs(x_average(ChannelField(GRID, np.cos(x) * g)))) <= 1e-15
    assert np.allclose(x_average(ChannelField(GRID, (1 + np.cos(x)) * g)), g[0])


def test_binary_dump(tmp_path):
    rng = np.random.default_rng(1)
    field = ChannelField(GRID, rng.normal(size=GRID.shape), name="omega")
    path = tmp_path / "omega.bin"
    write_field(path, field)

    payload = path.read_bytes()
    assert len(payload) == 16 + 8 * NX * NY
    assert np.frombuffer(payload[:16], dtype="<i8").tolist() == [NX, NY]

    loaded = read_field(path, name="omega")
    assert loaded.grid == GRID
    assert np.array_equal(loaded.values, field.values)


def test_binary_dump_truncated(tmp_path):
    path = tmp_path / "broken.bin"
    path.write_bytes(np.array([NX, NY], dtype="<i8").tobytes() + b"\x00" * 8)
    with pytest.raises(GridMismatchError):
        read_field(path)


def test_csv_dump(tmp_path):
    field = ChannelField(GRID, np.ones(GRID.shape), name="ones")
    path = tmp_path / "ones.csv"
    write_field_csv(path, field)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,value"
    assert len(lines) == 1 + NX * NY
    assert lines[1] == "0.0,0.0,1.0"
