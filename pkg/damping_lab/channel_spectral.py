#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Channel discretization: the periodic-by-bounded domain T x [0, 1].

- `ChannelGrid`: uniform nodes in y (endpoints included), Fourier modes in x
- `ChannelField` / `ModeFunction`: real fields and their x-modes
- `green_function`, `poisson_mode_solve`: per-mode Dirichlet Poisson problem
- `velocity_from_vorticity`, `x_average`
- binary and CSV field dumps
"""
import csv

import numpy as np
from scipy.linalg import solve_banded

from damping_lab.logger import logger

DEFAULT_DEALIAS_FRACTION = 2.0 / 3.0
MIN_NX = 16
MIN_NY = 65
DIRICHLET_TOLERANCE = 1e-12
HEADER_DTYPE = "<i8"
VALUES_DTYPE = "<f8"


class InvalidGridError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


class InvalidFieldError(ValueError):
    pass


class SingularSystemError(ValueError):
    pass


class ChannelGrid:
    """Uniform discretization of T x [0, 1].

    `ny` counts every y node, both walls included. x nodes are
    x_j = 2*pi*j/nx and real fields carry the wavenumbers 0..nx/2.
    """

    def __init__(self, nx, ny, dealias_fraction=DEFAULT_DEALIAS_FRACTION):
        if nx < MIN_NX or nx % 2:
            raise InvalidGridError(f"nx must be even and >= {MIN_NX}, got {nx}")
        if ny < MIN_NY:
            raise InvalidGridError(f"ny must be >= {MIN_NY}, got {ny}")
        if not 0 < dealias_fraction <= 1:
            raise InvalidGridError(
                f"dealias_fraction must be in (0, 1], got {dealias_fraction}"
            )
        self.nx = int(nx)
        self.ny = int(ny)
        self.dealias_fraction = dealias_fraction
        self.y = np.linspace(0.0, 1.0, self.ny)
        self.h = 1.0 / (self.ny - 1)
        self.x = 2 * np.pi * np.arange(self.nx) / self.nx
        self.dx = 2 * np.pi / self.nx
        self.wavenumbers = np.arange(self.nx // 2 + 1)

    def __eq__(self, other):
        if not isinstance(other, ChannelGrid):
            return False
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and self.dealias_fraction == other.dealias_fraction
        )

    def __hash__(self):
        return hash((self.nx, self.ny, self.dealias_fraction))

    def __repr__(self):
        return f"ChannelGrid(nx={self.nx}, ny={self.ny})"

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def trapezoid_weights(self):
        return trapezoid_weights(self.y)

    def derivative_symbol(self):
        """i*k for the rfft modes, with the Nyquist mode removed."""
        symbol = 1j * self.wavenumbers.astype(float)
        symbol[-1] = 0.0
        return symbol

    def dealias_mask(self):
        cutoff = self.dealias_fraction * self.nx / 2
        return (self.wavenumbers <= cutoff).astype(float)


def trapezoid_weights(y):
    weights = np.empty_like(y)
    steps = np.diff(y)
    weights[0] = steps[0] / 2
    weights[-1] = steps[-1] / 2
    weights[1:-1] = (steps[:-1] + steps[1:]) / 2
    return weights


class ModeFunction:
    """The k-th x-Fourier coefficient of a channel field, sampled on y."""

    def __init__(self, k, y, values):
        self.k = int(k)
        self.y = np.asarray(y, dtype=float)
        self.values = np.asarray(values, dtype=complex)
        if self.values.shape != self.y.shape:
            raise GridMismatchError(
                f"mode has {self.values.shape} values for {self.y.shape} nodes"
            )

    def conj(self):
        return ModeFunction(-self.k, self.y, np.conj(self.values))

    def l2_norm(self):
        return float(np.sqrt(np.sum(trapezoid_weights(self.y) * np.abs(self.values) ** 2)))


class ChannelField:
    """Real scalar field on the channel grid, values of shape (nx, ny)."""

    def __init__(self, grid, values, name="field", dirichlet=False):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise GridMismatchError(
                f"{name}: values of shape {values.shape} do not fit {grid}"
            )
        if dirichlet:
            scale = np.max(np.abs(values)) if values.size else 0.0
            walls = np.max(np.abs(values[:, [0, -1]]))
            if walls > DIRICHLET_TOLERANCE * scale:
                raise InvalidFieldError(
                    f"{name}: wall values {walls:.3e} do not vanish (scale {scale:.3e})"
                )
        self.grid = grid
        self.values = values
        self.name = name
        self.dirichlet = dirichlet

    def __repr__(self):
        return f"ChannelField({self.name!r}, {self.grid})"

    @classmethod
    def zeros(cls, grid, name="field"):
        return cls(grid, np.zeros(grid.shape), name=name)

    @classmethod
    def from_modes(cls, grid, modes, name="field", dirichlet=False):
        values = np.fft.irfft(modes * grid.nx, n=grid.nx, axis=0)
        if dirichlet:
            values[:, [0, -1]] = 0.0
        return cls(grid, values, name=name, dirichlet=dirichlet)

    def modes(self):
        """rfft coefficients normalized so that f = sum_k f_k e^{ikx}."""
        return np.fft.rfft(self.values, axis=0) / self.grid.nx

    def mode(self, k):
        if abs(k) > self.grid.nx // 2:
            raise GridMismatchError(f"wavenumber {k} not retained by {self.grid}")
        coefficient = self.modes()[abs(k)]
        if k < 0:
            coefficient = np.conj(coefficient)
        return ModeFunction(k, self.grid.y, coefficient)

    def integral(self):
        """Integral over T x [0, 1]: exact in x, trapezoid in y."""
        return float(
            self.grid.dx * np.sum(self.values.sum(axis=0) * self.grid.trapezoid_weights)
        )

    def l2_norm(self):
        return float(
            np.sqrt(
                self.grid.dx
                * np.sum((self.values**2).sum(axis=0) * self.grid.trapezoid_weights)
            )
        )


def green_function(k, y, z):
    """G_k(y, z) for (d^2/dy^2 - k^2) on [0, 1] with Dirichlet ends.

    The solution of (d^2/dy^2 - k^2) phi = f is phi(y) = -int G_k(y, z) f(z) dz.
    Works elementwise on arrays. The exponential form never overflows.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    low = np.minimum(y, z)
    high = np.maximum(y, z)
    if k == 0:
        return (1.0 - high) * low
    a = float(abs(k))
    numerator = (
        np.exp(-a * (high - low))
        * (-np.expm1(-2 * a * low))
        * (-np.expm1(-2 * a * (1.0 - high)))
    )
    return numerator / (2 * a * (-np.expm1(-2 * a)))


def green_matrix(k, y):
    return green_function(k, y[:, None], y[None, :])


def green_wall_slope(k, y, wall):
    """d_z G_k(y, z) at z = wall, wall in {0, 1}."""
    y = np.asarray(y, dtype=float)
    distance = y if wall == 0 else 1.0 - y
    sign = 1.0 if wall == 0 else -1.0
    if k == 0:
        return sign * (1.0 - distance)
    a = float(abs(k))
    slope = np.exp(-a * distance) * (-np.expm1(-2 * a * (1.0 - distance)))
    return sign * slope / (-np.expm1(-2 * a))


def green_quadrature_solve(k, f):
    """Reference solution phi_k = -int G_k f.

    Trapezoid in z with the h^2/12 end corrections for the kink of G_k at
    z = y and for both walls, which makes it fourth order on uniform nodes.
    """
    y = f.y
    h = y[1] - y[0]
    values = green_matrix(k, y) @ (trapezoid_weights(y) * f.values)
    jumps = (
        f.values
        - green_wall_slope(k, y, 0) * f.values[0]
        + green_wall_slope(k, y, 1) * f.values[-1]
    )
    return ModeFunction(k, y, -(values - h**2 / 12 * jumps))


def _poisson_bands(k, ny, h):
    bands = np.zeros((3, ny))
    bands[1, :] = -2.0 / h**2 - float(k) ** 2
    bands[1, 0] = bands[1, -1] = 1.0
    bands[0, 2:] = 1.0 / h**2
    bands[2, :-2] = 1.0 / h**2
    return bands


def poisson_mode_solve(k, f):
    """Solves (d^2/dy^2 - k^2) phi = f with phi(0) = phi(1) = 0.

    Second-order central differences on the nodes of `f`, which must be
    uniform.
    """
    ny = len(f.y)
    if ny < 3:
        raise SingularSystemError(f"at least 3 nodes are needed, got {ny}")
    h = f.y[1] - f.y[0]
    rhs = np.array(f.values, dtype=complex)
    rhs[0] = rhs[-1] = 0.0
    values = solve_banded((1, 1), _poisson_bands(k, ny, h), rhs)
    return ModeFunction(k, f.y, values)


def poisson_solve_modes(grid, modes):
    """Solves every retained mode of a (nx/2+1, ny) coefficient array."""
    bands_rhs = np.array(modes, dtype=complex)
    bands_rhs[:, 0] = bands_rhs[:, -1] = 0.0
    solution = np.empty_like(bands_rhs)
    for k in grid.wavenumbers:
        solution[k] = solve_banded(
            (1, 1), _poisson_bands(k, grid.ny, grid.h), bands_rhs[k]
        )
    return solution


def stream_function(omega):
    """psi with Laplacian omega, vanishing on both walls."""
    psi_modes = poisson_solve_modes(omega.grid, omega.modes())
    return ChannelField.from_modes(omega.grid, psi_modes, name="psi", dirichlet=True)


def dx_values(grid, values):
    """Spectral x-derivative of a real (nx, ny) array."""
    modes = np.fft.rfft(values, axis=0)
    modes *= grid.derivative_symbol()[:, None]
    return np.fft.irfft(modes, n=grid.nx, axis=0)


def dealias_values(grid, values):
    modes = np.fft.rfft(values, axis=0)
    modes *= grid.dealias_mask()[:, None]
    return np.fft.irfft(modes, n=grid.nx, axis=0)


def velocity_from_stream(psi):
    grid = psi.grid
    ux = -np.gradient(psi.values, grid.h, axis=1, edge_order=2)
    uy = dx_values(grid, psi.values)
    uy[:, [0, -1]] = 0.0
    return (
        ChannelField(grid, ux, name="ux"),
        ChannelField(grid, uy, name="uy", dirichlet=True),
    )


def velocity_from_vorticity(omega, grid=None):
    """Returns (u^x, u^y) = (-d_y psi, d_x psi) with Laplacian psi = omega."""
    if grid is not None and grid != omega.grid:
        raise GridMismatchError(f"{omega} does not live on {grid}")
    return velocity_from_stream(stream_function(omega))


def x_average(f):
    return f.values.mean(axis=0)


def write_array(path, values):
    """Binary dump: the two dimensions as little-endian int64, then the
    values row-major as float64."""
    values = np.asarray(values, dtype=VALUES_DTYPE)
    header = np.array(values.shape, dtype=HEADER_DTYPE)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(values).tobytes())


def read_array(path):
    with open(path, "rb") as f:
        payload = f.read()
    rows, columns = np.frombuffer(payload[:16], dtype=HEADER_DTYPE)
    values = np.frombuffer(payload[16:], dtype=VALUES_DTYPE)
    if values.size != rows * columns:
        raise GridMismatchError(
            f"{path}: header announces {rows}x{columns} values, found {values.size}"
        )
    return values.reshape(int(rows), int(columns)).copy()


def write_field(path, field):
    write_array(path, field.values)
    logger.debug(f"Wrote {field.name} to {path}")


def read_field(path, name="field", dealias_fraction=DEFAULT_DEALIAS_FRACTION):
    values = read_array(path)
    grid = ChannelGrid(*values.shape, dealias_fraction=dealias_fraction)
    return ChannelField(grid, values, name=name)


def write_field_csv(path, field):
    grid = field.grid
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "value"])
        for i, x in enumerate(grid.x):
            for j, y in enumerate(grid.y):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(field.values[i, j]))])
