#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Background shear profiles b(y) and Gevrey cutoffs.

- `GevreyCutoff` / `gevrey_cutoff`: compactly supported Gevrey-class bumps
- `ShearProfile`: b, b', b'' with the constants of the monotonicity assumption
- `make_couette`, `make_perturbed_monotone`, `make_profile`
- `gevrey_norm_estimate`, `verify_assumption_A`, `fit_fourier_decay`
"""
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import curve_fit
from scipy.special import expit, roots_legendre

from damping_lab.channel_spectral import ChannelField
from damping_lab.logger import logger

DEFAULT_THETA0 = 0.1
DEFAULT_BETA0 = 0.1
# inverse tables and primitives live on this many cells of [0, 1]
TABLE_CELLS = 8192
GAUSS_NODES, GAUSS_WEIGHTS = roots_legendre(8)
UNRESOLVED_TAIL = 1e-8
TAIL_SHELL = 0.9
SUPPORT_TOLERANCE = 1e-12


class InvalidCutoffError(ValueError):
    pass


class InvalidProfileError(ValueError):
    pass


def _transition_constants(s):
    alpha = s / (1.0 - s)
    # keeps the slope at x = 1/2 equal for every index
    return alpha, 2.0 ** (1.0 - alpha) / alpha


def gevrey_transition(x, s, order=0):
    """Smooth step: 0 for x <= 0, 1 for x >= 1, Gevrey class 1/s in between.

    T(x) = g(x) / (g(x) + g(1 - x)) with g(x) = exp(-c / x^alpha) and
    alpha = s / (1 - s). `order` selects T, T' or T''.
    """
    x = np.asarray(x, dtype=float)
    alpha, c = _transition_constants(s)
    inside = (x > 0) & (x < 1)
    xi = np.where(inside, x, 0.5)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        left = xi ** (-alpha)
        right = (1.0 - xi) ** (-alpha)
        exponent = c * (right - left)
        value = expit(exponent)
        if order == 0:
            return np.where(x >= 1, 1.0, np.where(inside, value, 0.0))
        weight = value * (1.0 - value)
        slope = c * alpha * (right / (1.0 - xi) + left / xi)
        if order == 1:
            out = weight * slope
        elif order == 2:
            curvature = c * alpha * (alpha + 1) * (
                right / (1.0 - xi) ** 2 - left / xi**2
            )
            out = weight * ((1.0 - 2.0 * value) * slope**2 + curvature)
        else:
            raise ValueError(f"Unsupported derivative order {order}")
        out = np.where(weight > 0, out, 0.0)
    return np.where(inside & np.isfinite(out), out, 0.0)


class GevreyCutoff:
    """Psi with Psi = 0 outside [a_prime, b_prime] and Psi = 1 on [a, b]."""

    def __init__(self, a_prime, a, b, b_prime, s):
        if not a_prime < a <= b < b_prime:
            raise InvalidCutoffError(
                f"Need a' < a <= b < b', got {a_prime}, {a}, {b}, {b_prime}"
            )
        if not 0 < s < 1:
            raise InvalidCutoffError(f"Gevrey index must be in (0, 1), got {s}")
        self.support = (a_prime, b_prime)
        self.plateau = (a, b)
        self.s = s
        self._rise = a - a_prime
        self._fall = b_prime - b

    def __repr__(self):
        return f"GevreyCutoff(support={self.support}, plateau={self.plateau}, s={self.s})"

    def _pieces(self, x, order):
        x = np.asarray(x, dtype=float)
        up = (x - self.support[0]) / self._rise
        down = (self.support[1] - x) / self._fall
        return (
            gevrey_transition(up, self.s, order) / self._rise**order,
            gevrey_transition(down, self.s, order) * (-1.0 / self._fall) ** order,
        )

    def __call__(self, x):
        left, right = self._pieces(x, 0)
        return left * right

    def derivative(self, x, order=1):
        left0, right0 = self._pieces(x, 0)
        left1, right1 = self._pieces(x, 1)
        if order == 1:
            return left1 * right0 + left0 * right1
        if order == 2:
            left2, right2 = self._pieces(x, 2)
            return left2 * right0 + 2 * left1 * right1 + left0 * right2
        raise ValueError(f"Unsupported derivative order {order}")


def gevrey_cutoff(a_prime, a, b, b_prime, s):
    return GevreyCutoff(a_prime, a, b, b_prime, s)


class ShearProfile:
    """Background flow b(y) on [0, 1].

    `b`, `b1`, `b2` are vectorized callables for b, b' and b''. The inverse
    b^{-1} is a monotone cubic interpolant on a fine table.
    """

    def __init__(self, name, b, b1, b2, theta0=DEFAULT_THETA0, beta0=DEFAULT_BETA0, amplitude=0.0):
        self.name = name
        self.b = b
        self.b1 = b1
        self.b2 = b2
        self.theta0 = theta0
        self.beta0 = beta0
        self.amplitude = amplitude

    def __repr__(self):
        return f"ShearProfile({self.name!r}, amplitude={self.amplitude}, theta0={self.theta0})"

    @cached_property
    def table(self):
        y = np.linspace(0.0, 1.0, TABLE_CELLS + 1)
        return y, self.b(y)

    @cached_property
    def _inverse(self):
        y, values = self.table
        return PchipInterpolator(values, y, extrapolate=True)

    @property
    def v_range(self):
        values = self.table[1]
        return float(values[0]), float(values[-1])

    def inverse(self, v):
        return self._inverse(np.asarray(v, dtype=float))

    def sample(self, y):
        return self.b(y), self.b1(y), self.b2(y)

    def to_dict(self, y):
        b, b1, b2 = self.sample(np.asarray(y, dtype=float))
        return {
            "name": self.name,
            "theta0": self.theta0,
            "beta0": self.beta0,
            "amplitude": self.amplitude,
            "y": np.asarray(y, dtype=float).tolist(),
            "b": b.tolist(),
            "b1": b1.tolist(),
            "b2": b2.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return make_profile(
            data["name"],
            amplitude=data.get("amplitude", 0.0),
            theta0=data.get("theta0", DEFAULT_THETA0),
            beta0=data.get("beta0", DEFAULT_BETA0),
        )


def make_couette(theta0=DEFAULT_THETA0, beta0=DEFAULT_BETA0):
    def b(y):
        return np.array(y, dtype=float)

    def b1(y):
        return np.ones_like(np.asarray(y, dtype=float))

    def b2(y):
        return np.zeros_like(np.asarray(y, dtype=float))

    return ShearProfile("couette", b, b1, b2, theta0=theta0, beta0=beta0)


def _check_theta0(theta0):
    if not 0 < theta0 <= 0.1:
        raise InvalidProfileError(f"theta0 must be in (0, 1/10], got {theta0}")


class _Primitive:
    """y -> int_0^y f, exact to roundoff for smooth f.

    Cell integrals come from Gauss-Legendre on a fine table and are summed
    once; a query adds one more Gauss-Legendre pass on its partial cell.
    """

    def __init__(self, f, cells=TABLE_CELLS):
        self.f = f
        self.nodes = np.linspace(0.0, 1.0, cells + 1)
        self.h = 1.0 / cells
        cell_integrals = self._gauss(self.nodes[:-1], self.nodes[1:])
        self.cumulative = np.concatenate([[0.0], np.cumsum(cell_integrals)])

    def _gauss(self, start, stop):
        half = (stop - start) / 2
        middle = (stop + start) / 2
        points = middle[:, None] + half[:, None] * GAUSS_NODES[None, :]
        return half * (self.f(points) @ GAUSS_WEIGHTS)

    def __call__(self, y):
        y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
        flat = np.atleast_1d(y).ravel()
        index = np.minimum((flat / self.h).astype(int), len(self.nodes) - 2)
        result = self.cumulative[index] + self._gauss(self.nodes[index], flat)
        return result.reshape(np.shape(y))


def make_perturbed_monotone(amplitude, theta0=DEFAULT_THETA0, beta0=DEFAULT_BETA0):
    """b(y) = y + amplitude * int_0^y chi with chi a Gevrey-1/2 bump.

    chi is supported in [2 theta0, 1 - 2 theta0] and peaks at 1 for y = 1/2,
    so b' = 1 + amplitude * chi and b'' = amplitude * chi'.
    """
    _check_theta0(theta0)
    low = min(1.0, 1.0 + amplitude)
    high = max(1.0, 1.0 + amplitude)
    if low < theta0 or high > 1.0 / theta0:
        raise InvalidProfileError(
            f"amplitude {amplitude} puts b' in [{low}, {high}], outside [{theta0}, {1 / theta0}]"
        )
    if amplitude == 0:
        return make_couette(theta0=theta0, beta0=beta0)

    chi = gevrey_cutoff(2 * theta0, 0.5, 0.5, 1 - 2 * theta0, 0.5)
    primitive = _Primitive(chi)

    def b(y):
        return np.asarray(y, dtype=float) + amplitude * primitive(y)

    def b1(y):
        return 1.0 + amplitude * chi(y)

    def b2(y):
        return amplitude * chi.derivative(y)

    return ShearProfile(
        "perturbed", b, b1, b2, theta0=theta0, beta0=beta0, amplitude=amplitude
    )


def make_profile(kind, amplitude=0.0, theta0=DEFAULT_THETA0, beta0=DEFAULT_BETA0):
    if kind == "couette":
        return make_couette(theta0=theta0, beta0=beta0)
    if kind == "perturbed":
        return make_perturbed_monotone(amplitude, theta0=theta0, beta0=beta0)
    raise InvalidProfileError(f"Unknown profile kind {kind!r}")


def _weighted_spectrum(values, lam, s, y):
    """Weighted squared Fourier magnitudes of the zero extension to a box
    of y-length 2, normalized so that lam = 0 gives the discrete L^2 norm."""
    h = y[1] - y[0]
    n_box = 2 * (len(y) - 1)
    padded = np.zeros(values.shape[:-1] + (n_box,), dtype=values.dtype)
    padded[..., : len(y) - 1] = values[..., :-1]
    xi = 2 * np.pi * np.fft.fftfreq(n_box, d=h)
    shell = np.abs(xi) >= TAIL_SHELL * np.max(np.abs(xi))
    if values.ndim == 1:
        spectrum = np.fft.fft(padded)
        scale = h / n_box
        bracket = np.sqrt(1 + xi**2)
    else:
        nx = values.shape[0]
        spectrum = np.fft.fft2(padded)
        scale = (2 * np.pi / nx) * h / (nx * n_box)
        k = np.fft.fftfreq(nx, d=1.0 / nx)
        bracket = np.sqrt(1 + k[:, None] ** 2 + xi[None, :] ** 2)
        shell = shell[None, :] | (np.abs(k) >= TAIL_SHELL * np.max(np.abs(k)))[:, None]
    weights = np.exp(2 * lam * bracket**s)
    with np.errstate(over="ignore", invalid="ignore"):
        mass = scale * weights * np.abs(spectrum) ** 2
    mass = np.where(np.abs(spectrum) == 0, 0.0, mass)
    return mass, shell


def _field_values(f, y):
    if isinstance(f, ChannelField):
        return f.values, f.grid.y
    values = np.asarray(f)
    if y is None:
        y = np.linspace(0.0, 1.0, values.shape[-1])
    return values, np.asarray(y, dtype=float)


def gevrey_tail_fraction(f, lam, s, y=None):
    """Share of the weighted mass carried by the outer frequency shell."""
    values, y = _field_values(f, y)
    mass, shell = _weighted_spectrum(values, lam, s, y)
    total = np.sum(mass)
    if total == 0:
        return 0.0
    if not np.isfinite(total):
        return 1.0
    return float(np.sum(mass[shell]) / total)


def gevrey_norm_estimate(f, lam, s, y=None):
    """Truncated estimate of || e^{lam <k, xi>^s} f~ ||_{L^2}.

    `f` is a ChannelField or samples on uniform `y` nodes of [0, 1]; it is
    extended by zero to a box of y-length 2. The estimate is only as good as
    the grid resolves the weighted tail, which is reported with a warning.
    """
    values, y = _field_values(f, y)
    mass, shell = _weighted_spectrum(values, lam, s, y)
    total = float(np.sum(mass))
    if total == 0:
        return 0.0
    tail = np.sum(mass[shell]) / total if np.isfinite(total) else 1.0
    if tail > UNRESOLVED_TAIL:
        logger.warning(
            f"Gevrey norm unresolved at lambda={lam}, s={s}: outer shell carries {tail:.3e} of the weighted mass"
        )
    return float(np.sqrt(total))


def verify_assumption_A(p, ny=129):
    """Checks the monotonicity assumption clause by clause.

    Derivative bounds and the b'' support are checked on a 10 * ny grid, the
    Gevrey bound ||b||_inf + ||b''||_{G^{beta0, 1/2}} <= 1/theta0 on a grid
    eight times finer than ny so that the weighted tail is resolved.
    """
    fine = np.linspace(0.0, 1.0, 10 * ny)
    b, b1, b2 = p.sample(fine)
    theta0 = p.theta0
    outside = (fine < 2 * theta0) | (fine > 1 - 2 * theta0)
    b2_outside = float(np.max(np.abs(b2[outside]))) if np.any(outside) else 0.0

    nodes = np.linspace(0.0, 1.0, 8 * (ny - 1) + 1)
    b2_nodes = p.b2(nodes)
    gevrey = gevrey_norm_estimate(b2_nodes, p.beta0, 0.5, y=nodes)
    tail = gevrey_tail_fraction(b2_nodes, p.beta0, 0.5, y=nodes)
    sup_b = float(np.max(np.abs(b)))

    clauses = {
        "derivative_bounds": {
            "passed": bool(np.min(b1) >= theta0 and np.max(b1) <= 1 / theta0),
            "min_b1": float(np.min(b1)),
            "max_b1": float(np.max(b1)),
            "lower": theta0,
            "upper": 1 / theta0,
        },
        "b2_support": {
            "passed": b2_outside <= SUPPORT_TOLERANCE,
            "max_outside": b2_outside,
            "support": [2 * theta0, 1 - 2 * theta0],
        },
        "monotone": {
            "passed": bool(np.all(np.diff(b) > 0)),
            "min_step": float(np.min(np.diff(b))),
        },
        "gevrey_bound": {
            "passed": bool(sup_b + gevrey <= 1 / theta0 and tail <= UNRESOLVED_TAIL),
            "sup_b": sup_b,
            "gevrey_norm_b2": gevrey,
            "beta0": p.beta0,
            "bound": 1 / theta0,
            "tail_fraction": tail,
        },
    }
    passed = all(clause["passed"] for clause in clauses.values())
    logger.info(f"Assumption A for {p.name}: {'pass' if passed else 'fail'}")
    return {"profile": p.name, "passed": passed, "clauses": clauses}


def _decay_model(prefactor):
    def model(xi, intercept, rate, exponent):
        return intercept - prefactor * np.log(xi) - rate * xi**exponent

    return model


def fit_fourier_decay(
    s, n=4096, box_length=8.0, band=8, xi_min=40.0, xi_max=500.0, floor=1e-12
):
    """Fits log|Psi~(xi)| ~ A - (1 - s/2) log|xi| - mu |xi|^s' for a unit-width cutoff.

    The cutoff rises on [0, 1], is flat on [1, 2], falls on [2, 3] and sits
    in a periodic box. The spectrum is smoothed by a band RMS over
    +-`band` samples and fitted on [xi_min, xi_max], cut where it drops
    below `floor` relative to its peak. The algebraic prefactor is the
    saddle-point one of exp(-x^(-s/(1-s))) and stays fixed. Returns
    (s', mu, (xi_lo, xi_hi)).
    """
    cutoff = gevrey_cutoff(0.0, 1.0, 2.0, 3.0, s)
    x = np.arange(n) * box_length / n
    spectrum = np.abs(np.fft.rfft(cutoff(x))) * box_length / n
    xi = 2 * np.pi * np.arange(len(spectrum)) / box_length
    kernel = np.ones(2 * band + 1) / (2 * band + 1)
    envelope = np.sqrt(np.convolve(spectrum**2, kernel, mode="same"))
    below = np.nonzero(envelope < floor * envelope.max())[0]
    stop = xi[below[0]] if below.size else xi[-1]
    window = (xi >= xi_min) & (xi <= min(xi_max, stop))
    params, __ = curve_fit(
        _decay_model(1 - s / 2),
        xi[window],
        np.log(envelope[window]),
        p0=(0.0, 1.0, s),
        bounds=([-np.inf, 0.0, 0.05], [np.inf, np.inf, 1.0]),
        maxfev=20000,
    )
    logger.debug(f"Fourier decay fit for s={s}: s'={params[2]:.3f}, mu={params[1]:.3f}")
    return float(params[2]), float(params[1]), (float(xi_min), float(min(xi_max, stop)))


def fixed_cutoff(p):
    """The Gevrey-3/4 cutoff of the v variable tied to a profile.

    Supported in [b(theta0/4), b(1 - theta0/4)] and equal to 1 on
    [b(theta0/3), b(1 - theta0/3)]; compose with b to get a cutoff in y.
    """
    theta0 = p.theta0
    marks = p.b(np.array([theta0 / 4, theta0 / 3, 1 - theta0 / 3, 1 - theta0 / 4]))
    return gevrey_cutoff(*[float(m) for m in marks], 0.75)
