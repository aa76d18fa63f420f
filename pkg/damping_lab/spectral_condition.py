#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
The spectral condition: L_k has no discrete eigenvalues.

`eigen_scan` looks for unstable or out-of-range eigenvalues of the dense
L_k matrix. Embedded eigenvalues cannot be told apart from the discretized
continuous spectrum that way; they are ruled out quantitatively by the lower
bound kappa of I + T_{k,y0,eps} in H^1_k, computed by `kappa_estimate`.
"""
import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigvals, solve_triangular, svd
from scipy.stats import linregress

from damping_lab.channel_spectral import green_matrix, trapezoid_weights
from damping_lab.logger import logger
from damping_lab.profiles import fixed_cutoff
from damping_lab.utils import run_blocking

DEFAULT_EPS = (1e-2, 1e-3, 1e-4)
DEFAULT_N_Y0 = 64
DEFAULT_EIGEN_TOLERANCE = 1e-8
KAPPA_STABILITY = 0.2
SERIES_THRESHOLD = 1e-2


class InvalidShiftError(ValueError):
    pass


class InvalidWavenumberError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    pass


def check_wavenumber(k):
    if k == 0:
        raise InvalidWavenumberError("k must be a nonzero integer")


def check_shift(eps):
    if eps == 0:
        raise InvalidShiftError("eps must be nonzero")
    if abs(eps) > 0.25:
        raise InvalidShiftError(f"|eps| must not exceed 1/4, got {eps}")


def singular_weights(z, b_values, shift):
    """Quadrature weights for int g(z) / (b(z) - shift) dz.

    Product integration: g and b are taken piecewise linear between the
    nodes and the 1/(b - shift) factor is integrated exactly, so a complex
    `shift` close to the real axis needs no refinement.
    """
    d = np.asarray(b_values, dtype=complex) - shift
    step = np.diff(z)
    delta = np.diff(d)
    ratio = delta / d[:-1]
    small = np.abs(ratio) < SERIES_THRESHOLD
    with np.errstate(divide="ignore", invalid="ignore"):
        i0 = np.log(d[1:] / d[:-1]) / delta
        i1 = (1.0 - d[:-1] * i0) / delta
    x = np.where(small, ratio, 0.0)
    # 1/(1+x) moments on [0, 1], expanded for tiny cells relative to d
    series0 = (1 - x / 2 + x**2 / 3 - x**3 / 4 + x**4 / 5 - x**5 / 6) / d[:-1]
    series1 = (0.5 - x / 3 + x**2 / 4 - x**3 / 5 + x**4 / 6 - x**5 / 7) / d[:-1]
    i0 = np.where(small, series0, i0)
    i1 = np.where(small, series1, i1)
    weights = np.zeros(len(z), dtype=complex)
    weights[:-1] += step * (i0 - i1)
    weights[1:] += step * i1
    return weights


class LkOperator:
    """Dense discretization of L_k f = b f + b'' int G_k f on the y nodes."""

    def __init__(self, k, matrix, profile, y):
        self.k = k
        self.matrix = matrix
        self.profile = profile
        self.y = y

    def apply(self, f):
        b, __, b2 = self.profile.sample(self.y)
        kernel = green_matrix(self.k, self.y)
        return b * f + b2 * (kernel @ (trapezoid_weights(self.y) * f))


def _nodes(grid_or_y):
    y = getattr(grid_or_y, "y", grid_or_y)
    return np.asarray(y, dtype=float)


def build_Lk(p, k, grid):
    check_wavenumber(k)
    y = _nodes(grid)
    b, __, b2 = p.sample(y)
    matrix = np.diag(b) + b2[:, None] * green_matrix(k, y) * trapezoid_weights(y)[None, :]
    return LkOperator(k, matrix, p, y)


def eigen_scan(L, tol=DEFAULT_EIGEN_TOLERANCE):
    """Flags eigenvalues off the real segment [b(0), b(1)].

    Embedded eigenvalues are not decidable here; see `kappa_estimate`.
    """
    try:
        values = eigvals(L.matrix)
    except LinAlgError as e:
        raise EigenSolverError(f"Eigensolver failed for k={L.k}: {e}") from e
    low, high = L.profile.v_range
    flags = []
    for value in values:
        if abs(value.imag) > tol:
            flags.append({"value": [value.real, value.imag], "reason": "complex"})
        elif value.real < low - tol or value.real > high + tol:
            flags.append({"value": [value.real, value.imag], "reason": "out_of_range"})
    if flags:
        logger.warning(f"k={L.k}: {len(flags)} eigenvalues off [{low}, {high}]")
    return {
        "k": L.k,
        "passed": not flags,
        "flags": flags,
        "max_imag": float(np.max(np.abs(values.imag))),
        "real_range": [float(values.real.min()), float(values.real.max())],
        "eigenvalues": sorted([[float(v.real), float(v.imag)] for v in values]),
    }


def h1k_norm(f, k, y):
    """||f||_{L^2} + |k|^{-1} ||f'||_{L^2} on [0, 1]."""
    f = np.asarray(f)
    weights = trapezoid_weights(y)
    derivative = np.gradient(f, y, edge_order=2)
    return float(
        np.sqrt(np.sum(weights * np.abs(f) ** 2))
        + np.sqrt(np.sum(weights * np.abs(derivative) ** 2)) / abs(k)
    )


def h1k_factor(k, y):
    """Upper Cholesky factor R of the H^1_k Gram matrix.

    ||R f||_2^2 = sum W f^2 + k^{-2} sum (f_{j+1} - f_j)^2 / h_j, the Hilbert
    form of the H^1_k norm, within a factor sqrt(2) of `h1k_norm`.
    """
    weights = trapezoid_weights(y)
    steps = np.diff(y)
    difference = np.zeros((len(y) - 1, len(y)))
    idx = np.arange(len(y) - 1)
    difference[idx, idx] = -1.0
    difference[idx, idx + 1] = 1.0
    gram = np.diag(weights) + difference.T @ (difference / steps[:, None]) / k**2
    return cholesky(gram, lower=False)


def _conjugated(operator, factor):
    """R A R^{-1}, whose 2-norm singular values are those of A in H^1_k."""
    left = factor @ operator
    return solve_triangular(factor, left.T, trans="T", lower=False).T


def _t_matrix(p, k, y0, eps, y, cutoff_values=None):
    b, __, b2 = p.sample(y)
    if cutoff_values is None:
        cutoff_values = fixed_cutoff(p)(b)
    weights = singular_weights(y, b, float(p.b(y0)) - 1j * eps)
    return cutoff_values[:, None] * green_matrix(k, y) * (weights * b2)[None, :]


def t_operator_apply(p, k, y0, eps, f, y):
    """T_{k,y0,eps} f on the nodes y, f given by its values there."""
    check_wavenumber(k)
    check_shift(eps)
    return _t_matrix(p, k, y0, eps, np.asarray(y, dtype=float)) @ np.asarray(f, dtype=complex)


def t_operator_norm(p, k, y0, eps, y):
    """Operator norm of T_{k,y0,eps} on H^1_k."""
    check_wavenumber(k)
    check_shift(eps)
    y = np.asarray(y, dtype=float)
    matrix = _conjugated(_t_matrix(p, k, y0, eps, y), h1k_factor(k, y))
    return float(svd(matrix, compute_uv=False)[0])


def fit_norm_decay(k_values, norms):
    """Least-squares slope of log ||T|| against log |k|."""
    fit = linregress(np.log(np.abs(k_values)), np.log(norms))
    return float(fit.slope)


def _smallest_singular_value(operator, factor):
    identity = np.eye(operator.shape[0])
    return float(svd(_conjugated(identity + operator, factor), compute_uv=False)[-1])


class SpectralReport:
    """Per-k eigenvalue verdicts and kappa samples for one profile."""

    def __init__(self, profile, k_values, y0_values, eps_values):
        self.profile = profile
        self.k_values = list(k_values)
        self.y0_values = list(y0_values)
        self.eps_values = list(eps_values)
        self.eigen = []
        self.samples = []
        self.unresolved = []

    @property
    def kappa_min(self):
        if not self.samples:
            return None
        return min(sample["kappa"] for sample in self.samples)

    @property
    def passed(self):
        kappa_min = self.kappa_min
        return (
            kappa_min is not None
            and kappa_min > 0
            and not self.unresolved
            and all(verdict["passed"] for verdict in self.eigen)
        )

    def add_eigen_scan(self, verdict):
        self.eigen.append(verdict)

    def to_dict(self):
        return {
            "profile": self.profile.name,
            "amplitude": self.profile.amplitude,
            "k_values": self.k_values,
            "eps_values": self.eps_values,
            "n_y0": len(self.y0_values),
            "kappa_min": self.kappa_min,
            "passed": self.passed,
            "unresolved": self.unresolved,
            "eigen": [
                {key: value for key, value in verdict.items() if key != "eigenvalues"}
                for verdict in self.eigen
            ],
            "samples": self.samples,
        }


def kappa_estimate(
    p,
    k_values,
    y0_values=None,
    eps_values=DEFAULT_EPS,
    grid=None,
    max_concurrency=1,
):
    """kappa(k, y0, eps) = min ||(I + T) f|| / ||f|| in H^1_k, sampled.

    One task per (k, y0, eps). A (k, y0) pair whose kappa moves by more
    than 20% across the last two eps values is reported unresolved.
    """
    y = _nodes(grid) if grid is not None else np.linspace(0.0, 1.0, 129)
    if y0_values is None:
        y0_values = np.linspace(0.0, 1.0, DEFAULT_N_Y0)
    for eps in eps_values:
        check_shift(eps)
    report = SpectralReport(p, k_values, y0_values, eps_values)
    b, __, b2 = p.sample(y)
    cutoff_values = fixed_cutoff(p)(b)
    factors = {}
    for k in k_values:
        check_wavenumber(k)
        factors[k] = h1k_factor(k, y)

    def _task(item):
        k, y0, eps = item
        if not np.any(b2):
            return {"k": k, "y0": y0, "eps": eps, "kappa": 1.0, "t_norm": 0.0}
        operator = _t_matrix(p, k, y0, eps, y, cutoff_values)
        conjugated = _conjugated(operator, factors[k])
        t_norm = float(svd(conjugated, compute_uv=False)[0])
        kappa = _smallest_singular_value(operator, factors[k])
        return {"k": k, "y0": y0, "eps": eps, "kappa": kappa, "t_norm": t_norm}

    items = [
        (int(k), float(y0), float(eps))
        for k in k_values
        for y0 in y0_values
        for eps in eps_values
    ]
    logger.info(f"Estimating kappa on {len(items)} samples for {p.name}")
    report.samples = run_blocking(_task, items, max_concurrency=max_concurrency)

    if len(eps_values) >= 2:
        last, previous = eps_values[-1], eps_values[-2]
        table = {(s["k"], s["y0"], s["eps"]): s["kappa"] for s in report.samples}
        for k in k_values:
            for y0 in y0_values:
                before = table[(int(k), float(y0), float(previous))]
                after = table[(int(k), float(y0), float(last))]
                if abs(after - before) > KAPPA_STABILITY * max(abs(before), 1e-300):
                    report.unresolved.append({"k": int(k), "y0": float(y0)})
        if report.unresolved:
            logger.warning(
                f"kappa unresolved across eps for {len(report.unresolved)} (k, y0) pairs"
            )
    logger.info(f"kappa_min = {report.kappa_min:.6g}")
    return report


def shifted_operator_matrix(p, k, w, eps, nv=129):
    """S_{k,w,eps} on a uniform v grid over [b(0), b(1)].

    S f(v) = Psi(v) int G_k(b^{-1} v, b^{-1} v') (b''/b')(b^{-1} v') f(v') / (v' - w + i eps) dv'.
    Returns (v, matrix).
    """
    check_wavenumber(k)
    check_shift(eps)
    low, high = p.v_range
    v = np.linspace(low, high, nv)
    y = p.inverse(v)
    y[0], y[-1] = 0.0, 1.0
    __, b1, b2 = p.sample(y)
    weights = singular_weights(v, v, w - 1j * eps)
    cutoff = fixed_cutoff(p)(v)
    matrix = cutoff[:, None] * green_matrix(k, y) * (weights * b2 / b1)[None, :]
    return v, matrix


def shifted_operator_apply(p, k, w, eps, f, nv=129):
    __, matrix = shifted_operator_matrix(p, k, w, eps, nv=nv)
    return matrix @ np.asarray(f, dtype=complex)


def shifted_operator_norm(p, k, w, eps, nv=129):
    """(||S||, min ||(I + S) f|| / ||f||), both in H^1_k of the v variable."""
    v, matrix = shifted_operator_matrix(p, k, w, eps, nv=nv)
    factor = h1k_factor(k, v)
    norm = float(svd(_conjugated(matrix, factor), compute_uv=False)[0])
    return norm, _smallest_singular_value(matrix, factor)
