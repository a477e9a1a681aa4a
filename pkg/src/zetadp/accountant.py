"""Privacy accounting for the complex Gaussian mechanism.

All accounting depends on the query's L2 sensitivity and the noise scale
alone; a mechanism on C^d and one on R^d with equal (sensitivity, sigma)
have identical ledgers. `sigma` is always the per-real-component noise
standard deviation (see `mechanism`), and in DP-SGD ledgers it is the noise
multiplier with sensitivity normalised to 1.

The analytic (epsilon, delta) profile is

    delta(eps) = Phi(D/(2 s) - eps s / D) - e^eps * Phi(-D/(2 s) - eps s / D)

with D the sensitivity and s the noise scale; Phi is evaluated through the
complementary error function (scipy's ndtr/log_ndtr, relative error well
below 1e-14 for |x| <= 8). The privacy-loss random variable of the pair of
output distributions is normal with mean D^2/(2 s^2) and variance D^2/s^2,
real-valued even for complex outputs, which the Monte-Carlo oracles below
exercise directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaln, log_ndtr, logsumexp

from .ctensor import Rng, sample_circular_gaussian
from .errors import DomainError

_SQRT2 = math.sqrt(2.0)


def normal_cdf(x: float) -> float:
    """Standard normal CDF through the complementary error function,
    Phi(x) = erfc(-x / sqrt 2) / 2; relative error <= 1e-14 on |x| <= 8."""
    return 0.5 * float(erfc(-x / _SQRT2))

DEFAULT_FRACTIONAL_ALPHAS = (1.25, 1.5, 1.75)
DEFAULT_INTEGER_ALPHAS = tuple(range(2, 257))
DEFAULT_ALPHA_GRID = DEFAULT_FRACTIONAL_ALPHAS + DEFAULT_INTEGER_ALPHAS


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise DomainError(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class RdpPoint:
    alpha: float
    rho: float


@dataclass(frozen=True)
class RdpCurve:
    """RDP guarantees over a fixed alpha grid.

    `gaussian_coeff` is set when the curve is exactly rho(alpha) =
    coeff * alpha (a pure Gaussian composition); the epsilon conversion can
    then minimise in closed form over all alpha > 1 instead of the grid.
    """

    alphas: tuple[float, ...]
    rhos: tuple[float, ...]
    gaussian_coeff: float | None = None

    def __post_init__(self):
        if len(self.alphas) != len(self.rhos):
            raise DomainError("alpha and rho grids differ in length")
        if any(a <= 1 for a in self.alphas):
            raise DomainError("all alpha must be > 1")

    def points(self) -> list[RdpPoint]:
        return [RdpPoint(a, r) for a, r in zip(self.alphas, self.rhos)]


# --------------------------------------------------------------------------
# Analytic (epsilon, delta) profile
# --------------------------------------------------------------------------

def delta_of_epsilon(sensitivity: float, sigma: float, epsilon: float) -> float:
    """Tight delta(eps) of the Gaussian mechanism at the given scales."""
    if not sensitivity > 0 or not sigma > 0:
        raise DomainError("sensitivity and sigma must be > 0")
    if epsilon < 0:
        raise DomainError(f"epsilon must be >= 0, got {epsilon}")
    ratio = sensitivity / sigma
    a = ratio / 2.0 - epsilon / ratio
    b = -ratio / 2.0 - epsilon / ratio
    # e^eps * Phi(b) computed in log space: exact even when Phi(b) underflows.
    value = normal_cdf(a) - math.exp(min(epsilon + float(log_ndtr(b)), 0.0))
    return min(max(value, 0.0), 1.0)


def calibrate_sigma(
    sensitivity: float,
    epsilon: float,
    delta: float,
    rel_tol: float = 1e-12,
) -> float:
    """Smallest sigma with delta_of_epsilon(sensitivity, sigma, epsilon) <= delta.

    delta(eps; sigma) is strictly decreasing in sigma, so plain bisection on
    sigma converges; brackets start at [1e-3, 1e3] * sensitivity and expand
    geometrically if the target lies outside.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")
    if not 0 < delta < 1:
        raise DomainError(f"delta out of range (0, 1): {delta}")
    if not sensitivity > 0:
        raise DomainError(f"sensitivity must be > 0, got {sensitivity}")

    # delta(eps; sigma) -> 1 as sigma -> 0 and -> 0 as sigma -> inf, so a
    # bracket with delta(lo) > delta >= delta(hi) always exists.
    lo = 1e-3 * sensitivity
    hi = 1e3 * sensitivity
    for _ in range(200):
        if delta_of_epsilon(sensitivity, hi, epsilon) <= delta:
            break
        hi *= 2.0
    else:
        raise DomainError("calibration bracket expansion failed")
    for _ in range(2000):
        if delta_of_epsilon(sensitivity, lo, epsilon) > delta:
            break
        hi = lo
        lo /= 2.0
    else:
        raise DomainError("calibration bracket shrink failed")

    for _ in range(400):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if delta_of_epsilon(sensitivity, mid, epsilon) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


# --------------------------------------------------------------------------
# RDP curves
# --------------------------------------------------------------------------

def rdp_gaussian(alpha: float, sensitivity: float, sigma: float) -> float:
    """Closed-form order-alpha Renyi bound alpha * D^2 / (2 sigma^2)."""
    if not alpha > 1:
        raise DomainError(f"alpha must be > 1, got {alpha}")
    if not sensitivity > 0 or not sigma > 0:
        raise DomainError("sensitivity and sigma must be > 0")
    return alpha * sensitivity**2 / (2.0 * sigma**2)


def rdp_subsampled_gaussian(alpha: int, q: float, sigma: float) -> float:
    """Integer-order RDP bound of the Poisson-subsampled Gaussian mechanism
    at sampling rate q and unit sensitivity:

        rho <= log( sum_k C(alpha,k) (1-q)^(alpha-k) q^k e^((k^2-k)/(2 sigma^2)) )
               / (alpha - 1)

    evaluated in log space for stability.
    """
    if isinstance(alpha, float) and not alpha.is_integer():
        raise DomainError(f"subsampled bound needs integer alpha, got {alpha}")
    alpha = int(alpha)
    if alpha < 2:
        raise DomainError(f"alpha must be an integer >= 2, got {alpha}")
    if not 0 < q <= 1:
        raise DomainError(f"q must be in (0, 1], got {q}")
    if not sigma > 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    if q == 1.0:
        # only the k = alpha term survives: rho = alpha / (2 sigma^2)
        return (alpha * alpha - alpha) / (2.0 * sigma**2) / (alpha - 1)
    ks = np.arange(alpha + 1)
    log_binom = gammaln(alpha + 1) - gammaln(ks + 1) - gammaln(alpha - ks + 1)
    terms = (log_binom + ks * math.log(q) + (alpha - ks) * math.log1p(-q)
             + (ks * ks - ks) / (2.0 * sigma**2))
    return float(logsumexp(terms)) / (alpha - 1)


def gaussian_rdp_curve(sensitivity: float, sigma: float,
                       alphas=DEFAULT_ALPHA_GRID) -> RdpCurve:
    coeff = sensitivity**2 / (2.0 * sigma**2)
    return RdpCurve(
        alphas=tuple(float(a) for a in alphas),
        rhos=tuple(rdp_gaussian(a, sensitivity, sigma) for a in alphas),
        gaussian_coeff=coeff,
    )


def subsampled_rdp_curve(q: float, sigma: float,
                         alphas=DEFAULT_INTEGER_ALPHAS) -> RdpCurve:
    return RdpCurve(
        alphas=tuple(float(a) for a in alphas),
        rhos=tuple(rdp_subsampled_gaussian(a, q, sigma) for a in alphas),
    )


def scale_curve(curve: RdpCurve, steps: int) -> RdpCurve:
    """RDP of `steps` identical compositions: rho scales exactly by steps."""
    if steps < 0:
        raise DomainError(f"steps must be >= 0, got {steps}")
    return RdpCurve(
        alphas=curve.alphas,
        rhos=tuple(steps * r for r in curve.rhos),
        gaussian_coeff=None if curve.gaussian_coeff is None else steps * curve.gaussian_coeff,
    )


def compose(curves: list[RdpCurve]) -> RdpCurve:
    """Pointwise sum over a common alpha grid."""
    if not curves:
        raise DomainError("cannot compose an empty list of curves")
    alphas = curves[0].alphas
    for c in curves[1:]:
        if c.alphas != alphas:
            raise DomainError("curves must share a common alpha grid")
    rhos = tuple(sum(c.rhos[i] for c in curves) for i in range(len(alphas)))
    coeffs = [c.gaussian_coeff for c in curves]
    coeff = sum(coeffs) if all(c is not None for c in coeffs) else None
    return RdpCurve(alphas=alphas, rhos=rhos, gaussian_coeff=coeff)


def rdp_to_dp(curve: RdpCurve, delta: float) -> tuple[float, float]:
    """Convert a curve to (epsilon, best alpha) at the target delta via

        epsilon = min_alpha [ rho(alpha) + log(1/delta) / (alpha - 1) ].

    Grid minimisation, except that a pure-Gaussian curve (rho = c * alpha)
    admits the exact continuous minimiser alpha* = 1 + sqrt(log(1/delta)/c),
    which is used when available.
    """
    if not 0 < delta < 1:
        raise DomainError(f"delta must be in (0, 1), got {delta}")
    log_term = math.log(1.0 / delta)
    if curve.gaussian_coeff is not None and curve.gaussian_coeff > 0:
        c = curve.gaussian_coeff
        alpha_star = 1.0 + math.sqrt(log_term / c)
        eps = c * alpha_star + log_term / (alpha_star - 1.0)
        return eps, alpha_star
    best_eps = math.inf
    best_alpha = math.nan
    for a, r in zip(curve.alphas, curve.rhos):
        eps = r + log_term / (a - 1.0)
        if eps < best_eps:
            best_eps = eps
            best_alpha = a
    return best_eps, best_alpha


# --------------------------------------------------------------------------
# Monte-Carlo oracles
# --------------------------------------------------------------------------

MIN_MC_SAMPLES = 10**5


def mc_privacy_loss_delta(
    sensitivity: float,
    sigma: float,
    epsilon: float,
    n_samples: int,
    rng: Rng,
) -> tuple[float, float]:
    """Estimate delta = E[max(0, 1 - e^(eps - Omega))] by sampling the
    privacy-loss random variable Omega ~ N(D^2/(2 s^2), D^2/s^2).

    Returns (estimate, standard error).
    """
    if n_samples < MIN_MC_SAMPLES:
        raise DomainError(f"need at least {MIN_MC_SAMPLES} samples, got {n_samples}")
    if not sensitivity > 0 or not sigma > 0:
        raise DomainError("sensitivity and sigma must be > 0")
    mean = sensitivity**2 / (2.0 * sigma**2)
    std = sensitivity / sigma
    omega = mean + std * rng.normal(n_samples)
    vals = np.maximum(0.0, 1.0 - np.exp(np.minimum(epsilon - omega, 0.0)))
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return est, se


def mc_likelihood_ratio_delta(
    f_d: np.ndarray,
    f_dprime: np.ndarray,
    sigma: float,
    epsilon: float,
    n_samples: int,
    rng: Rng,
) -> tuple[float, float]:
    """End-to-end oracle: run the complex Gaussian mechanism on f(D), form
    the log-likelihood ratio of the two output distributions at the released
    value, and average max(0, 1 - e^(eps - Omega)).

    The log ratio has a real-valued mean D^2/(2 sigma^2) even though the
    outputs live in C^d, so the estimate must agree with delta_of_epsilon.
    """
    if n_samples < MIN_MC_SAMPLES:
        raise DomainError(f"need at least {MIN_MC_SAMPLES} samples, got {n_samples}")
    f_d = np.asarray(f_d, dtype=np.complex128).ravel()
    f_dprime = np.asarray(f_dprime, dtype=np.complex128).ravel()
    if f_d.shape != f_dprime.shape:
        raise DomainError("adjacent outputs must have equal shape")
    d = f_d.size
    # Per-component std sigma => complex coordinate total variance 2 sigma^2.
    noise = np.asarray(sample_circular_gaussian((n_samples, d), 2.0 * sigma**2, rng))
    out = f_d[None, :] + noise
    sq_upper = np.sum(np.abs(out - f_d[None, :]) ** 2, axis=1)
    sq_lower = np.sum(np.abs(out - f_dprime[None, :]) ** 2, axis=1)
    omega = (sq_lower - sq_upper) / (2.0 * sigma**2)
    vals = np.maximum(0.0, 1.0 - np.exp(np.minimum(epsilon - omega, 0.0)))
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return est, se


# --------------------------------------------------------------------------
# Ledger
# --------------------------------------------------------------------------

@dataclass
class StepGroup:
    sigma: float
    q: float
    steps: int
    mode: str = "poisson"


@dataclass
class PrivacyLedger:
    """Composition state of a training run: one group per distinct
    (sigma, q, mode) combination, in first-use order.

    Subsampling amplification assumes Poisson sampling; ledgers recorded
    under uniform-without-replacement sampling reuse the same bound and are
    labelled approximate.
    """

    target_delta: float = 1e-5
    groups: list[StepGroup] = field(default_factory=list)

    def record(self, sigma: float, q: float, steps: int = 1, mode: str = "poisson"):
        if not 0 < q <= 1:
            raise DomainError(f"q must be in (0, 1], got {q}")
        if not sigma > 0:
            raise DomainError(f"sigma must be > 0, got {sigma}")
        if steps < 0:
            raise DomainError(f"steps must be >= 0, got {steps}")
        if mode not in ("poisson", "uniform"):
            raise DomainError(f"unknown sampling mode {mode!r}")
        for g in self.groups:
            if g.sigma == sigma and g.q == q and g.mode == mode:
                g.steps += steps
                return
        self.groups.append(StepGroup(sigma, q, steps, mode))

    @property
    def total_steps(self) -> int:
        return sum(g.steps for g in self.groups)

    @property
    def approximate_under_uniform(self) -> bool:
        return any(g.mode == "uniform" for g in self.groups)

    def composed_curve(self) -> RdpCurve:
        if not self.groups:
            raise DomainError("empty ledger")
        all_full_batch = all(g.q == 1.0 for g in self.groups)
        grid = DEFAULT_ALPHA_GRID if all_full_batch else DEFAULT_INTEGER_ALPHAS
        curves = []
        for g in self.groups:
            if g.q == 1.0:
                step = gaussian_rdp_curve(1.0, g.sigma, alphas=grid)
            else:
                step = subsampled_rdp_curve(g.q, g.sigma, alphas=grid)
            curves.append(scale_curve(step, g.steps))
        return compose(curves)

    def epsilon(self, delta: float | None = None) -> tuple[float, float]:
        """(epsilon, best alpha) at `delta` (default: the target delta)."""
        delta = self.target_delta if delta is None else delta
        if self.total_steps == 0:
            return 0.0, math.nan
        return rdp_to_dp(self.composed_curve(), delta)

    def write_csv(self, path):
        """One row per step group plus a summary row."""
        eps, alpha = self.epsilon()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["record", "sigma", "q", "steps", "mode"])
            for g in self.groups:
                writer.writerow(["group", g.sigma, g.q, g.steps, g.mode])
            writer.writerow(["summary", "epsilon", eps, "delta", self.target_delta])
            writer.writerow(["summary", "best_alpha", alpha, "approximate_under_uniform",
                             self.approximate_under_uniform])
