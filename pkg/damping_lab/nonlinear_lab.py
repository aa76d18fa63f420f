#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Time integration of the perturbed vorticity equation on T x [0, 1]

    d_t omega + b d_x omega - b'' d_x psi + u . grad omega = 0,

spectral in x, fourth-order finite differences in y, classical RK4.
The transport term is written in flux form, d_x(u^x omega) + d_y(u^y omega),
which conserves the total vorticity exactly while omega stays away from
the walls.
"""
import csv
import math
import os
from functools import cached_property

import numpy as np

from damping_lab.channel_spectral import (
    ChannelField,
    dealias_values,
    dx_values,
    stream_function,
    write_field,
)
from damping_lab.logger import logger
from damping_lab.profiles import gevrey_cutoff

DEFAULT_EPS = 1e-3
DEFAULT_T_END = 100.0
DEFAULT_CFL = 0.4
CFL_LIMIT = 0.5
DEFAULT_CADENCE = 1.0
SUPPORT_TOLERANCE = 1e-10
SUPPORT_HALO = 2
MEAN_FLOW_TOLERANCE = 0.05
DIAGNOSTIC_COLUMNS = (
    "t",
    "supmin_y",
    "supmax_y",
    "uy_inf",
    "uxfluct_inf",
    "mass",
    "energy",
)


class BlowupError(RuntimeError):
    pass


class CFLViolationError(RuntimeError):
    pass


class InvalidSimConfigError(ValueError):
    pass


class SimConfig:
    """Parameters of one nonlinear run.

    `eps` is the amplitude of the initial vorticity; `dt` defaults to
    `cfl` times the advective limit of the initial state. Every
    `snapshot_every`-th output is dumped under `output_dir`/fields.
    """

    def __init__(
        self,
        profile,
        grid,
        eps=DEFAULT_EPS,
        t_end=DEFAULT_T_END,
        dt=None,
        cfl=DEFAULT_CFL,
        cadence=DEFAULT_CADENCE,
        dealias=True,
        shape=None,
        snapshot_every=0,
        output_dir=None,
    ):
        if eps < 0:
            raise InvalidSimConfigError(f"eps must be nonnegative, got {eps}")
        if t_end <= 0:
            raise InvalidSimConfigError(f"t_end must be positive, got {t_end}")
        if dt is not None and dt <= 0:
            raise InvalidSimConfigError(f"dt must be positive, got {dt}")
        if not 0 < cfl <= CFL_LIMIT:
            raise InvalidSimConfigError(f"cfl must be in (0, {CFL_LIMIT}], got {cfl}")
        if cadence <= 0:
            raise InvalidSimConfigError(f"cadence must be positive, got {cadence}")
        self.profile = profile
        self.grid = grid
        self.eps = eps
        self.t_end = t_end
        self.dt = dt
        self.cfl = cfl
        self.cadence = cadence
        self.dealias = dealias
        self.shape = shape
        self.snapshot_every = snapshot_every
        self.output_dir = output_dir

    def to_dict(self):
        return {
            "profile": self.profile.name,
            "amplitude": self.profile.amplitude,
            "nx": self.grid.nx,
            "ny": self.grid.ny,
            "eps": self.eps,
            "t_end": self.t_end,
            "dt": self.dt,
            "cfl": self.cfl,
            "cadence": self.cadence,
            "dealias": self.dealias,
        }


def initial_bump(theta0):
    """chi: Gevrey-1/2 bump supported in [2 theta0, 1 - 2 theta0]."""
    return gevrey_cutoff(2 * theta0, 0.5, 0.5, 1 - 2 * theta0, 0.5)


def make_initial_data(grid, theta0, eps, shape=None):
    """omega_0 = eps * (shape - <shape>_x)(x, y) * chi(y), shape = cos x by default.

    `shape` may be a callable of the (x, y) meshes or an array on the grid.
    """
    x, y = np.meshgrid(grid.x, grid.y, indexing="ij")
    if shape is None:
        values = np.cos(x)
    elif callable(shape):
        values = np.asarray(shape(x, y), dtype=float)
    else:
        values = np.array(shape, dtype=float)
    if values.shape != grid.shape:
        raise InvalidSimConfigError(
            f"initial shape {values.shape} does not fit {grid}"
        )
    values = values - values.mean(axis=0, keepdims=True)
    values = eps * values * initial_bump(theta0)(grid.y)[None, :]
    return ChannelField(grid, values, name="omega")


def dy4(values, h):
    """d/dy along the last axis: fourth-order central in the interior,
    second order on the two outer nodes at each wall."""
    out = np.empty_like(values)
    out[..., 2:-2] = (
        values[..., :-4] - 8 * values[..., 1:-3] + 8 * values[..., 3:-1] - values[..., 4:]
    ) / (12 * h)
    out[..., 1] = (values[..., 2] - values[..., 0]) / (2 * h)
    out[..., -2] = (values[..., -1] - values[..., -3]) / (2 * h)
    out[..., 0] = (-3 * values[..., 0] + 4 * values[..., 1] - values[..., 2]) / (2 * h)
    out[..., -1] = (3 * values[..., -1] - 4 * values[..., -2] + values[..., -3]) / (2 * h)
    return out


def velocity(psi):
    """(u^x, u^y) = (-d_y psi, d_x psi) as arrays."""
    grid = psi.grid
    ux = -dy4(psi.values, grid.h)
    uy = dx_values(grid, psi.values)
    uy[:, [0, -1]] = 0.0
    return ux, uy


def _product(grid, first, second, dealias):
    if not dealias:
        return first * second
    return dealias_values(
        grid, dealias_values(grid, first) * dealias_values(grid, second)
    )


def linearized_rhs(omega, p):
    """-b d_x omega + b'' d_x psi."""
    grid = omega.grid
    psi = stream_function(omega)
    b, __, b2 = p.sample(grid.y)
    values = -b[None, :] * dx_values(grid, omega.values)
    values += b2[None, :] * dx_values(grid, psi.values)
    return ChannelField(grid, values, name="rhs")


def _rhs_values(omega, psi, p, dealias):
    grid = omega.grid
    b, __, b2 = p.sample(grid.y)
    ux, uy = velocity(psi)
    values = -b[None, :] * dx_values(grid, omega.values)
    values += b2[None, :] * dx_values(grid, psi.values)
    values -= dx_values(grid, _product(grid, ux, omega.values, dealias))
    values -= dy4(_product(grid, uy, omega.values, dealias), grid.h)
    return values


def rhs(omega, p, dealias=True):
    """-b d_x omega + b'' d_x psi - u . grad omega."""
    values = _rhs_values(omega, stream_function(omega), p, dealias)
    return ChannelField(omega.grid, values, name="rhs")


class SimState:
    """omega at time t with the drift accumulators.

    `phi_drift` is Phi(t, y) = int_0^t <u^x> and `omega_drift` is
    int_0^t <omega>, both accumulated by the trapezoid rule at every step.
    """

    def __init__(self, t, omega, phi_drift=None, omega_drift=None):
        ny = omega.grid.ny
        self.t = float(t)
        self.omega = omega
        self.phi_drift = np.zeros(ny) if phi_drift is None else phi_drift
        self.omega_drift = np.zeros(ny) if omega_drift is None else omega_drift

    def __repr__(self):
        return f"SimState(t={self.t})"

    @property
    def grid(self):
        return self.omega.grid

    @cached_property
    def psi(self):
        return stream_function(self.omega)

    @cached_property
    def _velocity(self):
        return velocity(self.psi)

    @property
    def ux(self):
        return ChannelField(self.grid, self._velocity[0], name="ux")

    @property
    def uy(self):
        return ChannelField(self.grid, self._velocity[1], name="uy")

    @property
    def mean_ux(self):
        return self._velocity[0].mean(axis=0)

    @property
    def mean_omega(self):
        return self.omega.values.mean(axis=0)

    def mean_stress(self):
        """<omega d_x psi>, the forcing of the mean flow."""
        return (self.omega.values * self._velocity[1]).mean(axis=0)

    def support(self):
        """(min y, max y) of the nodes where omega is above tolerance, or None."""
        column = np.max(np.abs(self.omega.values), axis=0)
        top = column.max()
        if top == 0:
            return None
        nodes = np.flatnonzero(column > SUPPORT_TOLERANCE * top)
        return float(self.grid.y[nodes[0]]), float(self.grid.y[nodes[-1]])

    def energy(self):
        ux, uy = self._velocity
        density = (ux**2 + uy**2).sum(axis=0)
        return float(0.5 * self.grid.dx * np.sum(density * self.grid.trapezoid_weights))

    def diagnostics(self):
        ux, uy = self._velocity
        support = self.support()
        low, high = support if support is not None else (math.nan, math.nan)
        return {
            "t": self.t,
            "supmin_y": low,
            "supmax_y": high,
            "uy_inf": float(np.max(np.abs(uy))),
            "uxfluct_inf": float(np.max(np.abs(ux - ux.mean(axis=0)))),
            "mass": self.omega.integral(),
            "energy": self.energy(),
        }


def cfl_limit(state, p):
    """min(0.5 dx / max|b + u^x|, 0.5 dy / max|u^y|)."""
    grid = state.grid
    ux, uy = state._velocity
    along = float(np.max(np.abs(p.b(grid.y)[None, :] + ux)))
    across = float(np.max(np.abs(uy)))
    limits = [math.inf]
    if along > 0:
        limits.append(CFL_LIMIT * grid.dx / along)
    if across > 0:
        limits.append(CFL_LIMIT * grid.h / across)
    return min(limits)


def step_rk4(state, dt, p, dealias=True):
    """One classical RK4 step; the drift accumulators follow by trapezoid."""
    grid = state.grid

    def _stage(values):
        omega = ChannelField(grid, values, name="omega")
        return _rhs_values(omega, stream_function(omega), p, dealias)

    w = state.omega.values
    k1 = _rhs_values(state.omega, state.psi, p, dealias)
    k2 = _stage(w + dt / 2 * k1)
    k3 = _stage(w + dt / 2 * k2)
    k4 = _stage(w + dt * k3)
    values = w + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    new = SimState(state.t + dt, ChannelField(grid, values, name="omega"))
    new.phi_drift = state.phi_drift + dt / 2 * (state.mean_ux + new.mean_ux)
    new.omega_drift = state.omega_drift + dt / 2 * (state.mean_omega + new.mean_omega)
    return new


def reflect_x(state):
    """omega(x) -> omega(-x), the time reversal of the equation."""
    values = np.roll(state.omega.values[::-1], 1, axis=0)
    return SimState(state.t, ChannelField(state.grid, values, name="omega"))


class SimRun:
    """Output of `run`: diagnostics rows and cadence snapshots."""

    def __init__(self, config, dt):
        self.config = config
        self.dt = dt
        self.rows = []
        self.snapshots = []
        self.support_violations = []

    @property
    def final(self):
        return self.snapshots[-1]

    def column(self, name):
        return np.array([row[name] for row in self.rows], dtype=float)

    def record(self, state):
        row = state.diagnostics()
        self.rows.append(row)
        self.snapshots.append(state)
        p = self.config.profile
        halo = SUPPORT_HALO * state.grid.h
        if not math.isnan(row["supmin_y"]) and (
            row["supmin_y"] < p.theta0 - halo or row["supmax_y"] > 1 - p.theta0 + halo
        ):
            logger.warning(
                f"Support [{row['supmin_y']:.4f}, {row['supmax_y']:.4f}] left the halo at t={state.t}"
            )
            self.support_violations.append(state.t)

    def conservation(self):
        """Largest drift of the total vorticity relative to int |omega_0|."""
        mass = self.column("mass")
        scale = float(np.sum(np.abs(self.snapshots[0].omega.values))) * (
            self.config.grid.dx * self.config.grid.h
        )
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(mass - mass[0])) / scale)


def _dump(config, state, name):
    if not config.output_dir:
        return
    folder = os.path.join(config.output_dir, "fields")
    os.makedirs(folder, exist_ok=True)
    write_field(os.path.join(folder, f"{name}.bin"), state.omega)


def run(config):
    """Integrates from `make_initial_data` to `config.t_end`.

    Raises `CFLViolationError` when dt exceeds the advective limit and
    `BlowupError` on non-finite values, dumping the last good state first.
    """
    p = config.profile
    grid = config.grid
    omega = make_initial_data(grid, p.theta0, config.eps, config.shape)
    state = SimState(0.0, omega)
    dt = config.dt
    if dt is None:
        dt = min(config.cfl / CFL_LIMIT * cfl_limit(state, p), config.cadence)
    result = SimRun(config, dt)
    result.record(state)
    outputs = int(math.ceil(config.t_end / config.cadence - 1e-9))
    logger.info(
        f"Nonlinear run on {grid} with eps={config.eps}, dt={dt:.4g}, {outputs} outputs"
    )
    for index in range(1, outputs + 1):
        target = min(index * config.cadence, config.t_end)
        steps = max(1, math.ceil((target - state.t) / dt - 1e-9))
        step = (target - state.t) / steps
        for __ in range(steps):
            limit = cfl_limit(state, p)
            if step > limit:
                raise CFLViolationError(
                    f"dt={step:.4g} exceeds the CFL limit {limit:.4g} at t={state.t:.4g}"
                )
            new = step_rk4(state, step, p, dealias=config.dealias)
            if not np.all(np.isfinite(new.omega.values)):
                _dump(config, state, "last_good")
                raise BlowupError(f"Non-finite vorticity after t={state.t:.4g}")
            state = new
        state.t = float(target)
        result.record(state)
        if config.snapshot_every and index % config.snapshot_every == 0:
            _dump(config, state, f"omega_{index:05d}")
        logger.debug(f"t={state.t:.3f} uy_inf={result.rows[-1]['uy_inf']:.3e}")
    return result


def write_diagnostics_csv(path, run_result):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for row in run_result.rows:
            writer.writerow([repr(float(row[column])) for column in DIAGNOSTIC_COLUMNS])


def mean_flow_monitor(snapshots, theta0):
    """Checks d/dt <u^x> = <omega d_x psi> and <u^x> = 0 near the walls.

    The time derivative is the central difference of the snapshot history,
    so only interior snapshots are compared; each mismatch is relative to
    the largest forcing seen.
    """
    times = np.array([state.t for state in snapshots])
    history = np.array([state.mean_ux for state in snapshots])
    forcing = np.array([state.mean_stress() for state in snapshots])
    y = snapshots[0].grid.y
    weights = snapshots[0].grid.trapezoid_weights
    scale = float(np.max(np.sqrt((forcing**2) @ weights))) if len(snapshots) else 0.0
    mismatches = []
    if len(snapshots) >= 3:
        rates = np.gradient(history, times, axis=0)
        for index in range(1, len(snapshots) - 1):
            difference = np.sqrt(((rates[index] - forcing[index]) ** 2) @ weights)
            mismatches.append(float(difference / scale) if scale > 0 else 0.0)
    walls = (y <= theta0) | (y >= 1 - theta0)
    wall_max = float(np.max(np.abs(history[:, walls]))) if len(snapshots) else 0.0
    max_mismatch = max(mismatches) if mismatches else 0.0
    return {
        "times": times[1:-1].tolist(),
        "mismatch": mismatches,
        "max_mismatch": max_mismatch,
        "wall_max": wall_max,
        "passed": max_mismatch <= MEAN_FLOW_TOLERANCE,
    }
