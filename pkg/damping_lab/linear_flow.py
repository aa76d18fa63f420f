#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Linearized dynamics around the shear profile, one x-mode at a time.

`evolve_linear` time-steps d_t g + i k L_k g = 0. The same flow is written
through the generalized eigenfunctions psi^{+-}_{k,eps}(y, y0) of L_k by
`spectral_representation`, which gives an independent oracle for the
stream mode phi_k(t).
"""
import csv
import math

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve
from scipy.stats import linregress
from scipy.stats import t as student

from damping_lab.channel_spectral import (
    ModeFunction,
    green_matrix,
    poisson_mode_solve,
    trapezoid_weights,
    write_array,
)
from damping_lab.logger import logger
from damping_lab.profiles import fixed_cutoff, gevrey_cutoff
from damping_lab.spectral_condition import (
    DEFAULT_EPS,
    build_Lk,
    check_shift,
    check_wavenumber,
    singular_weights,
)
from damping_lab.utils import run_blocking

DEFAULT_T_END = 200.0
DEFAULT_OUTPUTS = 201
# k = 1 data stay in the Orr transient until t ~ 40
DEFAULT_WINDOW = (50.0, 200.0)
# dt = DT_FACTOR / (|k| max|b|) unless given; above CFL_LIMIT / (|k| max|b|) we warn
DT_FACTOR = 0.02
CFL_LIMIT = 0.5
SUPPORT_TOLERANCE = 1e-12
RICHARDSON_EPS = (5e-3, 2.5e-3)
RICHARDSON_TOLERANCE = 0.05
MIN_N_Y0 = 256
Y0_BATCH = 64
FREDHOLM_CONDITION = 1e8
ENERGY_STABILITY = 0.2
CONFIDENCE = 0.95


class SupportLeakageError(RuntimeError):
    pass


class InvalidInitialDataError(ValueError):
    pass


def initial_mode(p, y):
    """Default X_k: the Gevrey-1/2 bump supported in [theta0, 1 - theta0]."""
    theta0 = p.theta0
    bump = gevrey_cutoff(theta0, 0.5, 0.5, 1 - theta0, 0.5)
    y = np.asarray(y, dtype=float)
    return ModeFunction(1, y, bump(y))


def _outside(y, low, high):
    return (y < low) | (y > high)


def _max_outside(values, y, low, high):
    mask = _outside(y, low, high)
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(values[mask])))


def check_support(p, X):
    """X_k must vanish outside [theta0, 1 - theta0]."""
    theta0 = p.theta0
    scale = float(np.max(np.abs(X.values))) if X.values.size else 0.0
    leak = _max_outside(X.values, X.y, theta0, 1 - theta0)
    if leak > SUPPORT_TOLERANCE * scale:
        raise InvalidInitialDataError(
            f"initial mode reaches {leak:.3e} outside [{theta0}, {1 - theta0}]"
        )


def modulated(p, k, X, a):
    """X_k e^{-ika b(y)}, the data of the linear problem."""
    return X.values * np.exp(-1j * k * a * p.b(X.y))


class LinearState:
    """g_k(t) and its stream mode phi_k(t) on the y nodes."""

    def __init__(self, k, t, g, phi):
        self.k = k
        self.t = t
        self.g = g
        self.phi = phi

    @classmethod
    def from_vorticity(cls, k, t, g):
        phi = poisson_mode_solve(k, g)
        return cls(k, t, g, phi)

    def elliptic_residual(self):
        """Relative residual of phi'' - k^2 phi = g at the interior nodes."""
        y = self.phi.y
        h = y[1] - y[0]
        phi = self.phi.values
        laplacian = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h**2 - self.k**2 * phi[1:-1]
        scale = np.max(np.abs(self.g.values))
        if scale == 0:
            return 0.0
        walls = max(abs(phi[0]), abs(phi[-1]))
        return float(max(np.max(np.abs(laplacian - self.g.values[1:-1])), walls) / scale)

    @property
    def l2_phi(self):
        return self.phi.l2_norm()

    @property
    def l2_dyphi(self):
        derivative = np.gradient(self.phi.values, self.phi.y, edge_order=2)
        return ModeFunction(self.k, self.phi.y, derivative).l2_norm()

    @property
    def l2_g(self):
        return self.g.l2_norm()


class LinearSeries:
    """States of one linear run at the requested output times."""

    def __init__(self, profile, k, a, dt, states):
        self.profile = profile
        self.k = k
        self.a = a
        self.dt = dt
        self.states = states

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    @property
    def times(self):
        return np.array([state.t for state in self.states])

    def diagnostics(self):
        rows = {"t": [], "L2_phi": [], "L2_dyphi": [], "L2_g": []}
        for state in self.states:
            rows["t"].append(state.t)
            rows["L2_phi"].append(state.l2_phi)
            rows["L2_dyphi"].append(state.l2_dyphi)
            rows["L2_g"].append(state.l2_g)
        diagnostics = {key: np.array(values) for key, values in rows.items()}
        diagnostics["uy"] = abs(self.k) * diagnostics["L2_phi"]
        diagnostics["ux"] = diagnostics["L2_dyphi"]
        return diagnostics

    def state_at(self, t):
        index = int(np.argmin(np.abs(self.times - t)))
        return self.states[index]


def _rk4_propagator(matrix, dt):
    """One classical RK4 step of dg/dt = M g, as a matrix."""
    step = dt * matrix
    identity = np.eye(matrix.shape[0], dtype=complex)
    term = identity
    propagator = identity.copy()
    for order in range(1, 5):
        term = term @ step / order
        propagator = propagator + term
    return propagator


def _output_times(t_end, times):
    if times is None:
        times = np.linspace(0.0, t_end, DEFAULT_OUTPUTS)
    times = np.unique(np.asarray(times, dtype=float))
    if times[0] < 0:
        raise ValueError(f"output times must be nonnegative, got {times[0]}")
    return times


def evolve_linear(p, k, X, a=0.0, t_end=DEFAULT_T_END, dt=None, times=None):
    """RK4 integration of d_t g = -ik L_k g from g(0) = X e^{-ikab}.

    Steps are shortened between output times so every requested time is
    hit exactly. Support leaking beyond [theta0/2, 1 - theta0/2] raises
    `SupportLeakageError`.
    """
    check_wavenumber(k)
    check_support(p, X)
    y = X.y
    times = _output_times(t_end, times)
    speed = abs(k) * float(np.max(np.abs(p.b(y))))
    if dt is None:
        dt = DT_FACTOR / speed
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt > CFL_LIMIT / speed:
        logger.warning(
            f"dt={dt:.4g} exceeds {CFL_LIMIT}/(|k| max|b|)={CFL_LIMIT / speed:.4g}"
        )

    matrix = -1j * k * build_Lk(p, k, y).matrix
    g = modulated(p, k, X, a).astype(complex)
    low, high = p.theta0 / 2, 1 - p.theta0 / 2
    propagators = {}
    states = []
    t = 0.0
    logger.debug(f"Evolving k={k} on {len(y)} nodes up to t={times[-1]} with dt={dt:.4g}")
    for target in times:
        span = target - t
        if span > 0:
            steps = max(1, math.ceil(span / dt - 1e-9))
            step = span / steps
            key = round(step, 15)
            if key not in propagators:
                propagators[key] = _rk4_propagator(matrix, step)
            propagator = propagators[key]
            for __ in range(steps):
                g = propagator @ g
            t = float(target)
        scale = float(np.max(np.abs(g)))
        leak = _max_outside(g, y, low, high)
        if leak > SUPPORT_TOLERANCE * max(scale, 1e-300):
            raise SupportLeakageError(
                f"g_{k} reaches {leak:.3e} outside [{low}, {high}] at t={t}"
            )
        states.append(LinearState.from_vorticity(k, t, ModeFunction(k, y, g)))
    return LinearSeries(p, k, a, dt, states)


def fit_power_law(t, values, window=DEFAULT_WINDOW):
    """Least-squares slope of log(values) against log(t) inside `window`.

    Returns slope, intercept, the 95% confidence interval of the slope and
    the number of points used. Zero or negative samples are skipped; with
    fewer than three points left the slope is None.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    low, high = window
    mask = (t >= low) & (t <= high) & (t > 0) & (values > 0)
    points = int(mask.sum())
    result = {"window": [float(low), float(high)], "points": points}
    if points < 3:
        logger.warning(f"Not enough positive samples in {window} to fit a rate")
        result.update({"slope": None, "intercept": None, "ci": None})
        return result
    fit = linregress(np.log(t[mask]), np.log(values[mask]))
    half = float(student.ppf(0.5 + CONFIDENCE / 2, points - 2) * fit.stderr)
    result.update(
        {
            "slope": float(fit.slope),
            "intercept": float(fit.intercept),
            "ci": [float(fit.slope) - half, float(fit.slope) + half],
        }
    )
    return result


def damping_fit(series, window=DEFAULT_WINDOW):
    """Fitted decay exponents of the u^y and u^x proxies.

    `series` is a `LinearSeries` or a mapping with `t`, `uy` and `ux` arrays:
    u^y ~ |k| ||phi_k|| and u^x ~ ||d_y phi_k||.
    """
    if isinstance(series, LinearSeries):
        series = series.diagnostics()
    return {
        "uy": fit_power_law(series["t"], series["uy"], window),
        "ux": fit_power_law(series["t"], series["ux"], window),
    }


def write_series_csv(path, series):
    diagnostics = series.diagnostics()
    columns = ("t", "L2_phi", "L2_dyphi", "L2_g")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in zip(*[diagnostics[column] for column in columns], strict=True):
            writer.writerow([repr(float(value)) for value in row])
    logger.debug(f"Wrote {len(series)} linear states to {path}")


def _iota_sign(iota):
    if iota in ("+", 1):
        return 1
    if iota in ("-", -1):
        return -1
    raise ValueError(f"iota must be '+' or '-', got {iota!r}")


class GeneralizedEigenfunction:
    """psi^iota_{k,eps}(., y0) on the y nodes."""

    def __init__(self, k, y0, eps, iota, y, values, condition=None):
        self.k = k
        self.y0 = y0
        self.eps = eps
        self.iota = iota
        self.y = y
        self.values = values
        self.condition = condition

    def __repr__(self):
        return f"GeneralizedEigenfunction(k={self.k}, y0={self.y0}, eps={self.eps}, iota={self.iota!r})"

    def mode(self):
        return ModeFunction(self.k, self.y, self.values)


class _FredholmProblem:
    """(I + K) psi = h with K = G diag(w b'') and h = G (w X~), where w are
    the product-integration weights of 1 / (b(z) - shift)."""

    def __init__(self, p, k, y, data):
        self.k = k
        self.y = y
        self.b, self.b1, self.b2 = p.sample(y)
        self.kernel = green_matrix(k, y)
        self.data = np.asarray(data, dtype=complex)
        self.free = not np.any(self.b2)

    def system(self, shift):
        weights = singular_weights(self.y, self.b, shift)
        matrix = np.eye(len(self.y)) + self.kernel * (weights * self.b2)[None, :]
        return matrix, weights

    def solve(self, shift, rhs_data):
        """Solutions for the columns of `rhs_data`, one LU factorization."""
        matrix, weights = self.system(shift)
        rhs = self.kernel @ (weights[:, None] * rhs_data)
        if self.free:
            return rhs
        try:
            return lu_solve(lu_factor(matrix), rhs)
        except LinAlgError as e:
            raise LinAlgError(f"Fredholm system singular at shift {shift}: {e}") from e

    def pair(self, b0, eps):
        """(psi^-, psi^+) for the denominators b - b0 -+ i eps.

        The weights of the conjugate shift are the conjugate weights, so
        conj(psi^+[X~]) = psi^-[conj X~] and one factorization serves both.
        """
        columns = np.stack([self.data, np.conj(self.data)], axis=1)
        solution = self.solve(b0 + 1j * eps, columns)
        return solution[:, 0], np.conj(solution[:, 1])


def generalized_eigenfunction(p, k, y0, eps, iota, X, a=0.0):
    """Solves psi + int G_k b'' psi / (b - b(y0) + i iota eps) = h by collocation."""
    check_wavenumber(k)
    check_shift(eps)
    sign = _iota_sign(iota)
    y = X.y
    problem = _FredholmProblem(p, k, y, modulated(p, k, X, a))
    shift = float(p.b(y0)) - 1j * sign * eps
    matrix, __ = problem.system(shift)
    condition = float(np.linalg.cond(matrix))
    if condition > FREDHOLM_CONDITION:
        logger.warning(
            f"Fredholm system for k={k}, y0={y0}, eps={eps} is ill-conditioned: cond={condition:.3e}"
        )
    values = problem.solve(shift, problem.data[:, None])[:, 0]
    return GeneralizedEigenfunction(
        k, y0, eps, "+" if sign > 0 else "-", y, values, condition=condition
    )


def eigenfunction_residual(p, psi, X, a=0.0):
    """Relative residual of psi'' - k^2 psi - b'' psi / d = -X~ / d at the
    interior nodes, d = b - b(y0) + i iota eps."""
    y = psi.y
    h = y[1] - y[0]
    b, __, b2 = p.sample(y)
    sign = _iota_sign(psi.iota)
    d = b - float(p.b(psi.y0)) + 1j * sign * psi.eps
    rhs = -modulated(p, psi.k, X, a) / d
    values = psi.values
    second = (values[2:] - 2 * values[1:-1] + values[:-2]) / h**2
    residual = second - psi.k**2 * values[1:-1] - b2[1:-1] * values[1:-1] / d[1:-1]
    residual -= rhs[1:-1]
    scale = np.sqrt(np.sum(np.abs(rhs) ** 2))
    if scale == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(residual) ** 2)) / scale)


def write_eigenfunction(path, psi):
    """Binary dump of psi as a 3 x ny array: y, real part, imaginary part."""
    write_array(path, np.stack([psi.y, psi.values.real, psi.values.imag]))


def _y0_count(eps):
    return max(MIN_N_Y0, math.ceil(2 / abs(eps)) + 1)


def _pair_table(problem, p, y0_values, eps, max_concurrency):
    """psi^- and psi^+ for every y0, as two (n_y0, ny) arrays."""
    b0_values = p.b(np.asarray(y0_values, dtype=float))
    batches = [
        b0_values[start:start + Y0_BATCH]
        for start in range(0, len(b0_values), Y0_BATCH)
    ]

    def _batch(b0_batch):
        pairs = [problem.pair(float(b0), eps) for b0 in b0_batch]
        return np.array([minus for minus, __ in pairs]), np.array([plus for __, plus in pairs])

    results = run_blocking(_batch, batches, max_concurrency=max_concurrency)
    minus = np.concatenate([m for m, __ in results])
    plus = np.concatenate([q for __, q in results])
    return minus, plus


class _Representation:
    """phi_eps(t) = -(1/2 pi i) int e^{-ik b(y0) t} b'(y0) [psi^- - psi^+] dy0
    at one eps, trapezoid in y0."""

    def __init__(self, p, k, X, a, eps, n_y0=None, max_concurrency=1):
        check_shift(eps)
        self.k = k
        self.y = X.y
        self.eps = eps
        n_y0 = n_y0 or _y0_count(eps)
        self.y0 = np.linspace(0.0, 1.0, n_y0)
        self.b0 = p.b(self.y0)
        self.quadrature = trapezoid_weights(self.y0) * p.b1(self.y0)
        problem = _FredholmProblem(p, k, self.y, modulated(p, k, X, a))
        minus, plus = _pair_table(problem, p, self.y0, eps, max_concurrency)
        self.jumps = minus - plus

    def __call__(self, t):
        phases = np.exp(-1j * self.k * self.b0 * t) * self.quadrature
        return -(phases @ self.jumps) / (2j * np.pi)


def representation_series(
    p, k, X, times, eps=None, a=0.0, n_y0=None, max_concurrency=1
):
    """Stream modes from the representation formula at each of `times`.

    The eps -> 0+ limit is the two-point Richardson extrapolation
    2 phi_{eps/2} - phi_eps. Returns the modes together with the relative
    size of the extrapolation step at each time; steps above 5% are logged.
    """
    check_wavenumber(k)
    eps = RICHARDSON_EPS[0] if eps is None else eps
    coarse = _Representation(p, k, X, a, eps, n_y0, max_concurrency)
    fine = _Representation(p, k, X, a, eps / 2, n_y0, max_concurrency)
    modes = []
    disagreements = []
    for t in np.atleast_1d(times):
        phi_coarse = coarse(t)
        phi_fine = fine(t)
        phi = 2 * phi_fine - phi_coarse
        norm = np.sqrt(np.sum(trapezoid_weights(X.y) * np.abs(phi) ** 2))
        step = np.sqrt(np.sum(trapezoid_weights(X.y) * np.abs(phi_fine - phi_coarse) ** 2))
        disagreement = float(step / norm) if norm > 0 else 0.0
        if disagreement > RICHARDSON_TOLERANCE:
            logger.warning(
                f"Richardson step at t={t} is {disagreement:.1%} of the extrapolated mode"
            )
        modes.append(ModeFunction(k, X.y, phi))
        disagreements.append(disagreement)
    return {"times": [float(t) for t in np.atleast_1d(times)], "modes": modes, "disagreements": disagreements}


def spectral_representation(p, k, X, t, eps=None, a=0.0, max_concurrency=1):
    """phi_k(t) through the generalized eigenfunctions of L_k."""
    result = representation_series(
        p, k, X, [t], eps=eps, a=a, max_concurrency=max_concurrency
    )
    return result["modes"][0]


def relative_l2(mode, reference):
    weights = trapezoid_weights(reference.y)
    difference = np.sqrt(np.sum(weights * np.abs(mode.values - reference.values) ** 2))
    scale = np.sqrt(np.sum(weights * np.abs(reference.values) ** 2))
    if scale == 0:
        return float(difference)
    return float(difference / scale)


def energy_bound_constant(p, k, X, eps_values=DEFAULT_EPS, a=0.0, n_y0=64):
    """C(eps) = (|k| ||Psi psi|| + ||d_y (Psi psi)||)_{L^2(y, y0)} / ||X||.

    Measured for both signs of iota; the constants are stable when their
    spread across eps stays within 20%.
    """
    check_wavenumber(k)
    y = X.y
    y0 = np.linspace(0.0, 1.0, n_y0)
    cutoff = fixed_cutoff(p)(p.b(y))
    weights = np.outer(trapezoid_weights(y0), trapezoid_weights(y))
    problem = _FredholmProblem(p, k, y, modulated(p, k, X, a))
    data_norm = X.l2_norm()
    constants = {"+": [], "-": []}
    for eps in eps_values:
        check_shift(eps)
        minus, plus = _pair_table(problem, p, y0, eps, 1)
        for label, table in (("-", minus), ("+", plus)):
            cut = cutoff[None, :] * table
            derivative = np.gradient(cut, y, axis=1, edge_order=2)
            value = abs(k) * np.sqrt(np.sum(weights * np.abs(cut) ** 2))
            value += np.sqrt(np.sum(weights * np.abs(derivative) ** 2))
            constants[label].append(float(value / data_norm) if data_norm > 0 else 0.0)
    spread = 0.0
    for values in constants.values():
        top = max(values)
        if top > 0:
            spread = max(spread, (top - min(values)) / top)
    stable = spread <= ENERGY_STABILITY
    if not stable:
        logger.warning(f"Energy bound constant for k={k} moves by {spread:.1%} across eps")
    return {
        "k": k,
        "eps": [float(eps) for eps in eps_values],
        "constants": constants,
        "spread": float(spread),
        "stable": stable,
    }


def boundary_jump(p, k, X, y0_values=None, eps_values=DEFAULT_EPS, a=0.0):
    """||psi^- - psi^+||_{L^2(y, y0)} over y0 near the walls, against eps.

    The jump vanishes as eps -> 0+ for y0 in [0, theta0/2]; the fitted
    exponent of the decay is reported.
    """
    check_wavenumber(k)
    if y0_values is None:
        y0_values = np.linspace(0.0, p.theta0 / 2, 5)
    y0_values = np.asarray(y0_values, dtype=float)
    y = X.y
    problem = _FredholmProblem(p, k, y, modulated(p, k, X, a))
    jumps = []
    for eps in eps_values:
        check_shift(eps)
        minus, plus = _pair_table(problem, p, y0_values, eps, 1)
        squares = np.abs(minus - plus) ** 2 @ trapezoid_weights(y)
        jumps.append(float(np.sqrt(np.mean(squares))))
    positive = [(e, j) for e, j in zip(eps_values, jumps, strict=True) if j > 0]
    exponent = None
    if len(positive) >= 2:
        exponent = float(
            linregress(np.log([e for e, __ in positive]), np.log([j for __, j in positive])).slope
        )
    vanishing = all(j == 0 for j in jumps) or (
        exponent is not None and exponent > 0 and jumps[-1] < jumps[0]
    )
    return {
        "k": k,
        "y0": y0_values.tolist(),
        "eps": [float(eps) for eps in eps_values],
        "jumps": jumps,
        "exponent": exponent,
        "vanishing": vanishing,
    }
