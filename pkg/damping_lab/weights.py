#
# Copyright Elasticsearch B.V. and/or licensed to Elasticsearch B.V. under one
# or more contributor license agreements. Licensed under the Elastic License 2.0;
# you may not use this file except in compliance with the Elastic License 2.0.
#
"""
Imbalanced weights A_NR, A_R, A_k and their building blocks.

Everything is evaluated in the log domain: at physical frequencies the
weights themselves overflow a float long before their logarithms lose
precision. `Y` selects the family: "NR", "R" or "k" (with a `k` array).
"""
import threading

import numpy as np
from scipy.integrate import quad
from scipy.special import betainc, expit, gammaln, loggamma, logsumexp, roots_legendre

from damping_lab.logger import logger
from damping_lab.profiles import gevrey_cutoff

SIGMA0 = 0.01
DEFAULT_DELTA0 = 0.1
DEFAULT_DELTA = 0.01
TEST_DELTA = 0.5
DEFAULT_BIG_K = 10.0
BUMP_SUPPORT = 8 / 5
BUMP_PLATEAU = 5 / 4
BUMP_NODES = 129
BATCH = 2048
DERIVATIVE_STEP = 1e-3
SEAM_TOLERANCE = 1e-9

_nodes, _weights = roots_legendre(BUMP_NODES)
BUMP = gevrey_cutoff(-BUMP_SUPPORT, -BUMP_PLATEAU, BUMP_PLATEAU, BUMP_SUPPORT, 0.5)
BUMP_X = BUMP_SUPPORT * _nodes
_mass = BUMP_SUPPORT * _weights * BUMP(BUMP_X)
# d_0 = int phi, taken with the same rule so that mollifying 1 gives 1
BUMP_INTEGRAL = float(np.sum(_mass))
with np.errstate(divide="ignore"):
    LOG_BUMP_MASS = np.log(_mass / BUMP_INTEGRAL)
BUMP_MASS = _mass / BUMP_INTEGRAL


class InvalidWeightParamsError(ValueError):
    pass


def bracket(*values):
    """<a, b, ...> = sqrt(1 + a^2 + b^2 + ...)."""
    total = 1.0
    for value in values:
        total = total + np.square(np.asarray(value, dtype=float))
    return np.sqrt(total)


class WeightParams:
    """delta0, delta, delta' and the constant K of the energy functionals."""

    def __init__(
        self, delta0=DEFAULT_DELTA0, delta=DEFAULT_DELTA, delta_prime=None, big_k=DEFAULT_BIG_K
    ):
        if delta_prime is None:
            delta_prime = delta / 10
        if not 0 < delta0 < 1:
            raise InvalidWeightParamsError(f"delta0 must be in (0, 1), got {delta0}")
        if not 0 < delta_prime < delta < 1:
            raise InvalidWeightParamsError(
                f"Need 0 < delta' < delta < 1, got delta'={delta_prime}, delta={delta}"
            )
        if big_k < 1:
            raise InvalidWeightParamsError(f"K must be >= 1, got {big_k}")
        self.delta0 = float(delta0)
        self.delta = float(delta)
        self.delta_prime = float(delta_prime)
        self.sigma0 = SIGMA0
        self.big_k = float(big_k)
        if delta >= delta0:
            logger.debug(f"Test-scale weights: delta={delta} >= delta0={delta0}")

    @property
    def threshold(self):
        """|eta| above which the resonant construction kicks in."""
        return self.delta**-10

    def to_dict(self):
        return {
            "delta0": self.delta0,
            "delta": self.delta,
            "delta_prime": self.delta_prime,
            "sigma0": self.sigma0,
            "big_k": self.big_k,
        }


def resonance_count(eta, delta):
    return int(np.floor(np.sqrt(delta**3 * abs(eta))))


def resonant_time(eta, n):
    """t_{l,eta}, with t_{0,eta} = 2 eta."""
    eta = abs(eta)
    if n == 0:
        return 2 * eta
    return 0.5 * (eta / (n + 1) + eta / n)


class ResonantStructure:
    """Resonant times t_{l,eta} and intervals I_{l,eta} of one frequency.

    `log_w_at_times[l]` is log w_NR(t_{l,eta}, eta), accumulated factor by
    factor from t_{0,eta} = 2 eta downwards.
    """

    def __init__(self, eta, params):
        self.eta = abs(float(eta))
        self.params = params
        if self.eta <= params.threshold:
            self.k0 = 0
            self.times = np.array([2 * self.eta])
            self.log_w_at_times = np.zeros(1)
            return
        self.k0 = resonance_count(self.eta, params.delta)
        n = np.arange(1, self.k0 + 1, dtype=float)
        self.times = np.concatenate([[2 * self.eta], 0.5 * (self.eta / (n + 1) + self.eta / n)])
        x = params.delta**2 * self.eta
        c = np.where(n == 1, 1.0, 1.0 / (2 * n * np.maximum(n - 1, 1)))
        d = 1.0 / (2 * n * (n + 1))
        factors = params.delta0 * np.log1p(x * c) + (1 + params.delta0) * np.log1p(x * d)
        self.log_w_at_times = np.concatenate([[0.0], -np.cumsum(factors)])

    def interval(self, n):
        if not 1 <= n <= self.k0:
            raise IndexError(f"No resonant interval {n} for eta={self.eta}")
        return float(self.times[n]), float(self.times[n - 1])

    def critical_time(self, n):
        return self.eta / n


class _Location:
    """Where each (t, |eta|) sits in the resonant construction."""

    def __init__(self, t, a, params):
        self.t = t
        self.a = a
        self.active = (a > params.threshold) & (t < 2 * a)
        a = np.where(self.active, a, 2 * params.threshold)
        self.k0 = np.floor(np.sqrt(params.delta**3 * a))
        self.t_k0 = a * (2 * self.k0 + 1) / (2 * self.k0 * (self.k0 + 1))
        self.small = self.active & (t < self.t_k0)
        t = np.where(self.active & ~self.small, t, self.t_k0)
        n = np.maximum(np.floor(a / t), 1.0)
        t_l = a * (2 * n + 1) / (2 * n * (n + 1))
        self.index = np.minimum(np.where(t < t_l, n + 1, n), self.k0)
        self.center = a / self.index
        self.x = params.delta**2 * a
        self.safe_a = a


class WeightEvaluator:
    """Pure evaluators of the weight hierarchy for fixed parameters.

    Thread-safe: the only state is the per-eta cache of resonant
    structures, which is guarded by a lock.
    """

    def __init__(self, params=None):
        self.params = params if params is not None else WeightParams()
        self._structures = {}
        self._lock = threading.Lock()
        p = self.params
        # sigma0^2 int_0^oo <s>^{-1-sigma0} ds in closed form
        tail = np.exp(
            0.5 * np.log(np.pi) - np.log(2.0) + gammaln(p.sigma0 / 2) - gammaln((1 + p.sigma0) / 2)
        )
        self.lambda_drop = p.sigma0**2 * tail
        if self.lambda_drop > 0.5:
            raise InvalidWeightParamsError(
                f"lambda would drop below delta0: sigma0^2 int <t>^(-1-sigma0) = {self.lambda_drop}"
            )
        self.lambda_infinity = p.delta0 * (1.5 - self.lambda_drop)

    def resonant(self, eta):
        key = abs(float(eta))
        with self._lock:
            structure = self._structures.get(key)
            if structure is None:
                structure = self._structures[key] = ResonantStructure(key, self.params)
        return structure

    # w_Y

    def _log_w_cumulative(self, x, m):
        """log w_NR(t_{m,eta}, eta) with x = delta^2 eta, O(1) in m.

        The products of the printed factors are ratios of Gamma functions
        at the (possibly complex) roots of 2 j^2 +- 2 j + x.
        """
        delta0 = self.params.delta0
        m = np.asarray(m, dtype=float)
        mm = np.maximum(m, 1.0)
        root = np.sqrt(1.0 - 2.0 * np.asarray(x, dtype=complex))
        r1, r2 = (-1 + root) / 2, (-1 - root) / 2
        s_d = (
            loggamma(mm + 1 - r1) - loggamma(1 - r1) + loggamma(mm + 1 - r2) - loggamma(1 - r2)
        ).real - gammaln(mm + 1) - gammaln(mm + 2)
        q1, q2 = (1 + root) / 2, (1 - root) / 2
        s_c = np.log1p(x) + (
            loggamma(mm + 1 - q1) - loggamma(2 - q1) + loggamma(mm + 1 - q2) - loggamma(2 - q2)
        ).real - gammaln(mm + 1) - gammaln(mm)
        return np.where(m >= 1, -(delta0 * s_c + (1 + delta0) * s_d), 0.0)

    def _log_w_nr(self, loc):
        p = self.params
        n = loc.index
        c_l = np.where(n == 1, 1.0, 1.0 / (2 * n * np.maximum(n - 1, 1)))
        offset = np.abs(loc.t - loc.center)
        log_prev = self._log_w_cumulative(loc.x, n - 1)
        rising = log_prev + p.delta0 * (np.log1p(p.delta**2 * offset) - np.log1p(loc.x * c_l))
        falling = (
            log_prev
            - p.delta0 * np.log1p(loc.x * c_l)
            - (1 + p.delta0) * np.log1p(p.delta**2 * offset)
        )
        inside = np.where(loc.t >= loc.center, rising, falling)
        beta = 1.0 - loc.t / loc.t_k0
        early = -beta * p.delta * np.sqrt(loc.safe_a) + (1 - beta) * self._log_w_cumulative(
            loc.x, loc.k0
        )
        return np.where(loc.active, np.where(loc.small, early, inside), 0.0)

    def _resonant_bonus(self, loc):
        delta = self.params.delta
        width = loc.safe_a / (8 * loc.index**2)
        offset = np.abs(loc.t - loc.center)
        near = loc.active & ~loc.small & (offset <= width)
        bonus = np.log1p(delta**2 * offset) - np.log1p(delta**2 * width)
        return np.where(near, bonus, 0.0)

    def log_w_eval(self, Y, t, eta, k=None):
        t = np.asarray(t, dtype=float)
        eta = np.asarray(eta, dtype=float)
        t, eta = np.broadcast_arrays(t, eta)
        loc = _Location(t, np.abs(eta), self.params)
        log_nr = self._log_w_nr(loc)
        if Y == "NR":
            return log_nr
        if Y == "R":
            return log_nr + self._resonant_bonus(loc)
        if Y == "k":
            k = np.broadcast_to(np.asarray(k, dtype=float), t.shape)
            inside = (
                loc.active
                & ~loc.small
                & (np.abs(k) == loc.index)
                & (k * eta > 0)
            )
            return log_nr + np.where(inside, self._resonant_bonus(loc), 0.0)
        raise ValueError(f"Unknown weight family {Y!r}")

    def w_eval(self, Y, t, eta, k=None):
        return np.exp(self.log_w_eval(Y, t, eta, k))

    # b_Y: mollification in the frequency variable

    def window(self, t, xi):
        """L_{delta'}(t, xi)."""
        dp = self.params.delta_prime
        size = bracket(xi)
        return 1.0 + dp * size / (np.sqrt(size) + dp * np.asarray(t, dtype=float))

    def _mollify(self, values_at, t, xi, k, log_domain):
        t, xi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(xi, dtype=float))
        k = None if k is None else np.broadcast_to(np.asarray(k, dtype=float), t.shape)
        flat_t, flat_xi = t.ravel(), xi.ravel()
        flat_k = None if k is None else k.ravel()
        out = np.empty(flat_t.shape)
        for start in range(0, len(flat_t), BATCH):
            chunk = slice(start, start + BATCH)
            tc = flat_t[chunk][:, None]
            xc = flat_xi[chunk]
            rho = xc[:, None] - self.window(flat_t[chunk], xc)[:, None] * BUMP_X[None, :]
            kc = None if flat_k is None else flat_k[chunk][:, None]
            values = values_at(tc, rho, kc)
            if log_domain:
                out[chunk] = logsumexp(values + LOG_BUMP_MASS[None, :], axis=1)
            else:
                out[chunk] = values @ BUMP_MASS
        return out.reshape(t.shape)

    def log_b_eval(self, Y, t, xi, k=None):
        with np.errstate(divide="ignore"):
            return self._mollify(
                lambda tc, rho, kc: self.log_w_eval(Y, tc, rho, kc), t, xi, k, True
            )

    def b_eval(self, Y, t, xi, k=None):
        return np.exp(self.log_b_eval(Y, t, xi, k))

    # lambda(t)

    def _lambda_rate(self, s):
        p = self.params
        return p.delta0 * p.sigma0**2 * (1.0 + s * s) ** (-(1 + p.sigma0) / 2)

    def lambda_increment(self, t1, t2):
        """lambda(t1) - lambda(t2), by adaptive quadrature of -lambda'."""
        if t2 <= t1:
            return 0.0
        value, __ = quad(self._lambda_rate, t1, t2, epsabs=1e-15, epsrel=1e-12, limit=200)
        return value

    def lambda_eval(self, t):
        """lambda(t) = lambda(oo) + delta0 sigma0^2 int_t^oo <s>^{-1-sigma0} ds.

        The tail integral is an incomplete beta function of 1 / (1 + t^2),
        which stays accurate for any t where quadrature of the slowly
        decaying rate would not.
        """
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("lambda is defined for t >= 0")
        p = self.params
        tail = betainc(p.sigma0 / 2, 0.5, 1.0 / (1.0 + t * t))
        return self.lambda_infinity + p.delta0 * self.lambda_drop * tail

    # A_Y

    def _log_a_rest(self, Y, t, xi, k=None):
        """log A_Y minus its lambda term."""
        root_delta = np.sqrt(self.params.delta)
        log_b = self.log_b_eval(Y, t, xi, k)
        size = np.sqrt(bracket(xi))
        if Y in ("NR", "R"):
            return root_delta * size - log_b
        return np.logaddexp(
            root_delta * size - log_b,
            root_delta * np.sqrt(np.abs(np.asarray(k, dtype=float))),
        )

    def _size(self, Y, xi, k=None):
        if Y == "k":
            return np.sqrt(bracket(k, xi))
        return np.sqrt(bracket(xi))

    def log_A_eval(self, Y, t, xi, k=None):
        return self.lambda_eval(t) * self._size(Y, xi, k) + self._log_a_rest(Y, t, xi, k)

    def A_eval(self, Y, t, xi, k=None):
        """The main weights; overflows to inf once lambda <xi>^(1/2) passes ~700."""
        with np.errstate(over="ignore"):
            return np.exp(self.log_A_eval(Y, t, xi, k))

    def log_A_rate(self, Y, t, xi, k=None):
        """(d/dt A_Y) / A_Y by central differences with step 1e-3 <t>."""
        t, xi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(xi, dtype=float))
        if k is not None:
            k = np.broadcast_to(np.asarray(k, dtype=float), t.shape)
        step = DERIVATIVE_STEP * bracket(t)
        upper = t + step
        lower = np.maximum(t - step, 0.0)
        span = upper - lower
        # lambda depends on t alone
        times, inverse = np.unique(t.ravel(), return_inverse=True)
        spread = DERIVATIVE_STEP * bracket(times)
        drop = np.array(
            [self.lambda_increment(max(s - d, 0.0), s + d) for s, d in zip(times, spread)]
        )
        lam_rate = -drop[inverse].reshape(t.shape) / span
        rest = self._log_a_rest(Y, upper, xi, k) - self._log_a_rest(Y, lower, xi, k)
        return lam_rate * self._size(Y, xi, k) + rest / span

    # mu

    def mu_sharp(self, t, xi):
        t, xi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(xi, dtype=float))
        loc = _Location(t, np.abs(xi), self.params)
        delta2 = self.params.delta**2
        value = np.where(
            loc.small, delta2, delta2 / (1 + delta2 * np.abs(loc.t - loc.center))
        )
        return np.where(loc.active, value, 0.0)

    def mu_star(self, t, xi):
        return self._mollify(lambda tc, rho, kc: self.mu_sharp(tc, rho), t, xi, None, False)

    def mu_eval(self, variant, t, xi, k=None):
        if variant == "#":
            return self.mu_sharp(t, xi)
        star = self.mu_star(t, xi)
        if variant == "*":
            return star
        decay = bracket(t) ** (1 + self.params.sigma0)
        if variant == "R":
            return np.sqrt(bracket(xi)) / decay + star
        if variant == "k":
            root_delta = np.sqrt(self.params.delta)
            gate = expit(
                -(
                    root_delta * (np.sqrt(np.abs(k)) - np.sqrt(bracket(xi)))
                    + self.log_b_eval("k", t, xi, k)
                )
            )
            return np.sqrt(bracket(k, xi)) / decay + star * gate
        raise ValueError(f"Unknown mu variant {variant!r}")


def _ratio_stats(log_ratios):
    """Summary of ratios given by their natural logarithms."""
    logs = np.asarray(log_ratios, dtype=float)
    finite = bool(np.all(np.isfinite(logs)))
    stats = {"count": int(logs.size), "finite": finite}
    if not finite or logs.size == 0:
        stats["max"] = float(np.exp(np.nanmax(logs))) if logs.size else None
        return stats
    counts, edges = np.histogram(logs / np.log(10), bins=20)
    with np.errstate(over="ignore"):
        stats.update(
            {
                "max": float(np.exp(logs.max())),
                "min": float(np.exp(logs.min())),
                "median": float(np.exp(np.median(logs))),
                "p99": float(np.exp(np.quantile(logs, 0.99))),
                "log_max": float(logs.max()),
                "histogram": {"log10_edges": edges.tolist(), "counts": counts.tolist()},
            }
        )
    return stats


def _draw(rng, samples, low, high):
    """(t, xi, eta, k) samples spread over the constant and resonant regimes."""
    size = 10 ** rng.uniform(np.log10(low), np.log10(high), samples)
    xi = size * rng.choice([-1.0, 1.0], samples)
    t = rng.uniform(0.0, 2.5, samples) * size
    gap = 10 ** rng.uniform(-1.0, np.log10(size))
    eta = xi + gap * rng.choice([-1.0, 1.0], samples)
    resonant_k = np.maximum(1.0, np.rint(size / np.maximum(t, 1.0))) * np.sign(xi)
    small_k = rng.integers(-8, 9, samples).astype(float)
    k = np.where(rng.random(samples) < 0.5, resonant_k, small_k)
    return t, xi, eta, k


def _lemma_ratios(evaluator, t, xi, eta, k):
    """Natural logs of the measured LHS / RHS ratios."""
    p = evaluator.params
    root_delta = np.sqrt(p.delta)
    ratios = {}
    allowance = root_delta * np.sqrt(np.abs(xi - eta))
    for Y in ("NR", "R", "k"):
        kk = k if Y == "k" else None
        log_ratio = evaluator.log_w_eval(Y, t, xi, kk) - evaluator.log_w_eval(Y, t, eta, kk)
        ratios[f"w_{Y}_comparison"] = log_ratio - allowance
    with np.errstate(divide="ignore"):
        log_rate_k = np.log(np.abs(evaluator.log_A_rate("k", t, xi, k)))
        log_mu_k = np.log(evaluator.mu_eval("k", t, xi, k))
        ratios["mu_k_over_rate_k"] = log_mu_k - log_rate_k
        ratios["rate_k_over_mu_k"] = log_rate_k - log_mu_k
        log_mu_r = np.log(evaluator.mu_eval("R", t, xi))
        for Y in ("NR", "R"):
            log_rate = np.log(np.abs(evaluator.log_A_rate(Y, t, xi)))
            ratios[f"rate_{Y}_over_mu_R"] = log_rate - log_mu_r
            ratios[f"mu_R_over_rate_{Y}"] = log_mu_r - log_rate
    return ratios


def _check(violations):
    count = int(np.count_nonzero(violations))
    return {"violations": count, "fraction": count / max(violations.size, 1), "held": count == 0}


def structure_checks(params, samples, rng, low=None, high=None):
    """Ordering chain, sandwiches and t-monotonicity on random samples."""
    evaluator = WeightEvaluator(params)
    threshold = params.threshold
    low = threshold / 4 if low is None else low
    high = threshold * 64 if high is None else high
    t, xi, __, k = _draw(rng, samples, low, high)
    tol = 1e-9
    size = np.sqrt(bracket(xi))
    size_k = np.sqrt(bracket(k, xi))
    lam = evaluator.lambda_eval(t)
    root_delta = np.sqrt(params.delta)

    log_b = {Y: evaluator.log_b_eval(Y, t, xi, k if Y == "k" else None) for Y in ("NR", "R", "k")}
    scale = np.maximum(1.0, np.abs(log_b["R"]))
    floor = -params.delta * np.sqrt(np.abs(xi))
    checks = {
        "floor_below_b_R": _check(floor > log_b["R"] + tol * scale),
        "b_R_below_b_k": _check(log_b["R"] > log_b["k"] + tol * scale),
        "b_k_below_b_NR": _check(log_b["k"] > log_b["NR"] + tol * scale),
        "b_NR_below_one": _check(log_b["NR"] > tol),
    }
    log_a = {Y: evaluator.log_A_eval(Y, t, xi, k if Y == "k" else None) for Y in ("NR", "R", "k")}
    scale_a = np.maximum(1.0, np.abs(log_a["R"]))
    checks["sandwich_lower_NR"] = _check(lam * size > log_a["NR"] + tol * scale_a)
    checks["A_NR_below_A_R"] = _check(log_a["NR"] > log_a["R"] + tol * scale_a)
    checks["sandwich_upper_R"] = _check(
        log_a["R"] > lam * size + 2 * root_delta * size + tol * scale_a
    )
    checks["sandwich_lower_k"] = _check(lam * size_k > log_a["k"] + tol * scale_a)
    checks["sandwich_upper_k"] = _check(
        log_a["k"] > np.log(2) + lam * size_k + 2 * root_delta * size_k + tol * scale_a
    )

    later = t * (1 + rng.uniform(0.0, 0.5, samples)) + rng.uniform(0.0, 1.0, samples)
    window_top = np.abs(xi) + BUMP_SUPPORT * evaluator.window(t, xi)
    past_k0 = t >= np.array(
        [resonant_time(top, max(resonance_count(top, params.delta), 1)) for top in window_top]
    )
    for Y in ("NR", "R", "k"):
        kk = k if Y == "k" else None
        grew = evaluator.log_A_eval(Y, later, xi, kk) > log_a[Y] + tol * scale_a
        checks[f"A_{Y}_decreasing"] = _check(grew)
        checks[f"A_{Y}_decreasing_past_k0"] = _check(grew & past_k0)
    held = [name for name, check in checks.items() if not check["held"]]
    if held:
        logger.warning(f"delta={params.delta}: weight structure violated in {held}")
    return {"delta": params.delta, "samples": samples, "checks": checks}


def audit_comparison_lemmas(
    params=None, samples=10_000, seed=0, max_frequency=1e5, small_delta=DEFAULT_DELTA
):
    """Measures the implied constants of the weight comparison lemmas.

    Every ratio is evaluated on `samples` and again on twice as many fresh
    samples. The audit passes iff all ratios are finite and each maximum
    moves by at most a factor 2 under the doubling.
    """
    if params is None:
        params = WeightParams(delta=TEST_DELTA, delta_prime=TEST_DELTA / 10)
    evaluator = WeightEvaluator(params)
    rng = np.random.default_rng(seed)
    logger.info(f"Auditing weight lemmas at delta={params.delta} on {samples} samples")

    first = _lemma_ratios(evaluator, *_draw(rng, samples, 1.0, max_frequency))
    second = _lemma_ratios(evaluator, *_draw(rng, 2 * samples, 1.0, max_frequency))
    ratios = {}
    passed = True
    for name in first:
        stats = _ratio_stats(first[name])
        doubled = _ratio_stats(second[name])
        stable = (
            stats["finite"]
            and doubled["finite"]
            and abs(doubled["log_max"] - stats["log_max"]) <= np.log(2)
        )
        stats["max_doubled"] = doubled["max"]
        stats["stable"] = bool(stable)
        ratios[name] = stats
        passed = passed and stable
        logger.debug(f"{name}: max {stats['max']}, doubled {doubled['max']}")

    t, xi, __, __ = _draw(rng, samples, 1.0, max_frequency)
    excess = evaluator.mu_eval("R", t, xi) - np.sqrt(bracket(xi)) / bracket(t) ** (1 + SIGMA0)
    mu_r_floor = {"min_excess": float(excess.min()), "held": bool(np.all(excess >= 0))}

    small = WeightParams(
        delta0=params.delta0, delta=small_delta, delta_prime=small_delta / 10, big_k=params.big_k
    )
    structure = {
        "test_scale": structure_checks(params, samples, rng),
        "small": structure_checks(small, samples, rng),
    }
    passed = passed and mu_r_floor["held"]
    if not passed:
        logger.warning("Weight audit did not pass: some ratio is unstable or not finite")
    return {
        "params": params.to_dict(),
        "small_params": small.to_dict(),
        "samples": samples,
        "seed": seed,
        "max_frequency": max_frequency,
        "bump_integral": BUMP_INTEGRAL,
        "lambda_infinity": evaluator.lambda_infinity,
        "ratios": ratios,
        "mu_R_floor": mu_r_floor,
        "structure": structure,
        "passed": bool(passed),
    }
