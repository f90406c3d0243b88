"""Bayesian cross-checks.

* Power priors over a linear marginal cost, F(c) = (c / c_bar)**alpha_exp,
  and the expected buyer-surplus ratio of share-based tariffs against them.
* The randomized-share saddle point: the share distribution from
  :mod:`robustprocure.closedform` against linear costs and against the
  log-kinked cost family, plus the closed-form value of the cost-side
  randomization ``F(g) = g**theta`` over that family.
* The benchmark against the Bayes-optimal tariff, checked on the witness
  family (point masses and theta priors on the log-kinked costs).

Integrals against power priors are taken after the substitution
``w = (c / c_bar)**(alpha_exp - s)`` (with ``s = sigma / (1 - sigma)``),
which turns the ``c**-s`` growth of surplus into a constant integrand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .closedform import (
    b_hat,
    saddle_share_atom,
    saddle_share_density,
    supply_exponent,
)
from .errors import DivergentWelfare, SigmaOutOfRange
from .model import AffineShare, ConstantShare, LogKinked, as_sigma, utility
from .numerics import (
    efficient_quantity,
    graded_breakpoints,
    maximize_unimodal,
    quadrature,
    quadrature_with_atom,
)

LINEAR_CHECK_TOL = 1e-6
FAMILY_CHECK_TOL = 1e-3
THETA_CHECK_TOL = 1e-3
LINEAR_CHECK_COSTS = tuple(10.0 ** np.linspace(-2, 2, 9))
FAMILY_CHECK_GAMMAS = tuple(10.0 ** np.linspace(-2, 2, 10))


@dataclass(frozen=True)
class PowerPrior:
    """Marginal cost c on (0, c_bar] with CDF (c / c_bar)**alpha_exp."""

    alpha_exp: float
    c_bar: float

    def __post_init__(self):
        if not self.alpha_exp > 0:
            raise ValueError("alpha_exp must be positive")
        if not self.c_bar > 0:
            raise ValueError("c_bar must be positive")

    def require_finite_welfare(self, sigma: float):
        s = supply_exponent(sigma)
        if not self.alpha_exp > s:
            raise DivergentWelfare(
                f"expected welfare diverges: alpha_exp={self.alpha_exp} <= {s:g}")


@dataclass(frozen=True)
class SaddleFamilyPrior:
    """Log-kinked cost slope g on (0, 1] with CDF g**theta."""

    theta: float

    def require_finite_welfare(self, sigma: float):
        s = supply_exponent(sigma)
        if not self.theta > s:
            raise DivergentWelfare(f"theta={self.theta} must exceed {s:g}")


# --------------------------------------------------------------------------
# Power priors over linear cost
# --------------------------------------------------------------------------

def _share_terms(sigma: float, m) -> tuple[float, float]:
    if isinstance(m, ConstantShare):
        return m.z, 0.0
    if isinstance(m, AffineShare):
        return m.z, m.intercept
    raise TypeError("expected_linear_ratio supports constant and affine shares")


def participation_cutoff(sigma, m) -> float:
    """Largest linear cost at which the seller still supplies under ``m``."""
    sigma = float(sigma)
    z, k = _share_terms(sigma, m)
    if z == 0:
        return 0.0
    if k == 0:
        return math.inf
    s = supply_exponent(sigma)
    return z * (z * (1.0 - sigma) / (k * sigma)) ** (1.0 / s)


def expected_linear_ratio(sigma, prior: PowerPrior, m, nodes: int = 200) -> float:
    """E[U] / E[W] for a share-based tariff when marginal cost follows ``prior``.

    The seller's response to z*u(q) - K at linear cost c is the interior
    supply (z/c)**(1/(1-sigma)) when that earns strictly positive profit, and
    zero otherwise (a zero-profit tie resolves to no supply).
    """
    sigma = as_sigma(sigma)
    prior.require_finite_welfare(sigma)
    s = supply_exponent(sigma)
    a = prior.alpha_exp
    z, k = _share_terms(sigma, m)
    c_hat = participation_cutoff(sigma, m)
    w_cut = 1.0 if c_hat >= prior.c_bar else (c_hat / prior.c_bar) ** (a - s)
    decay = s / (a - s)
    scale = prior.c_bar ** (-s)

    # In w, U(c) * (c / c_bar)**s splits into a constant share part and the
    # intercept part K * w**decay; both vanish above the participation cutoff.
    def scaled_buyer_surplus(w):
        w = np.asarray(w, dtype=float)
        inside = w < w_cut
        share_part = (1.0 - z) / sigma * z ** s * scale
        return np.where(inside, share_part + k * np.power(w, decay), 0.0)

    def scaled_welfare(w):
        return np.full_like(np.asarray(w, dtype=float), (1.0 - sigma) / sigma * scale)

    breaks = [w_cut] if 0 < w_cut < 1 else []
    if w_cut > 0:
        breaks += list(graded_breakpoints(0.0, w_cut, toward="right"))
    EU = quadrature(scaled_buyer_surplus, 0.0, 1.0, nodes, breaks)
    EW = quadrature(scaled_welfare, 0.0, 1.0, nodes)
    return EU / EW


def virtual_allocation(sigma, alpha_exp: float, c: float) -> float:
    """Quantity maximizing virtual surplus u(q) - (c + c/alpha_exp) q."""
    sigma = float(sigma)
    return (alpha_exp / ((1.0 + alpha_exp) * c)) ** (1.0 / (1.0 - sigma))


# --------------------------------------------------------------------------
# Saddle point
# --------------------------------------------------------------------------

def saddle_cost(sigma, gamma_t: float) -> LogKinked:
    return LogKinked(float(gamma_t), float(sigma))


def family_parameters(sigma, gamma_t):
    """(q0, q1, kappa) of the log-kinked cost with slope ``gamma_t`` (array-friendly)."""
    sigma = float(sigma)
    g = np.asarray(gamma_t, dtype=float)
    q1 = np.power(sigma / g, 1.0 / (1.0 - sigma))
    q0 = (1.0 - sigma) ** (1.0 / sigma) * q1
    kappa = (1.0 - sigma) * np.power(sigma / g, supply_exponent(sigma))
    return q0, q1, kappa


def _family_supply(sigma, z, gamma_t):
    q0, q1, kappa = family_parameters(sigma, gamma_t)
    z = np.asarray(z, dtype=float)
    zc = np.clip(z, 0.0, sigma)
    log_seg = np.clip(np.power(kappa / (1.0 - zc), 1.0 / sigma), q0, q1)
    lin_seg = np.power(np.maximum(z, 0.0) / gamma_t, 1.0 / (1.0 - sigma))
    q = np.where(z <= sigma, log_seg, np.maximum(lin_seg, q1))
    return np.where(z > 0, q, 0.0)


def saddle_best_response(sigma, z, c: LogKinked):
    """Seller's supply under the share ``z`` facing a log-kinked cost.

    On the log segment the first-order condition gives (kappa/(1-z))**(1/sigma),
    which runs from q0 at z=0 to q1 at z=sigma; larger shares push supply onto
    the linear segment.  At z = 0 the seller is indifferent on [0, q0] and
    supplies nothing.
    """
    return _family_supply(sigma, z, c.gamma_t)


def _share_surplus_logkinked(sigma, z, c: LogKinked):
    q = saddle_best_response(sigma, z, c)
    return (1.0 - np.asarray(z, dtype=float)) * utility(sigma, q)


def _share_surplus_linear(sigma, z, c: float):
    s = supply_exponent(sigma)
    z = np.asarray(z, dtype=float)
    return (1.0 - z) / sigma * np.power(z / c, s)


def _expect_over_shares(sigma, f, nodes: int) -> float:
    breaks = graded_breakpoints(0.0, sigma, toward="left")
    return quadrature_with_atom(f, 0.0, sigma, nodes, sigma, saddle_share_atom(sigma),
                                breakpoints=breaks,
                                density=lambda z: saddle_share_density(sigma, z))


def saddle_ratio_linear(sigma, c: float, nodes: int = 200) -> float:
    """E over the randomized share of U/W against the linear cost ``c``."""
    W = (1.0 - sigma) / sigma * c ** (-supply_exponent(sigma))
    return _expect_over_shares(sigma, lambda z: _share_surplus_linear(sigma, z, c), nodes) / W


def saddle_ratio_logkinked(sigma, gamma_t: float, nodes: int = 200) -> float:
    """E over the randomized share of U/W against the log-kinked cost ``gamma_t``."""
    c = saddle_cost(sigma, gamma_t)
    W = efficient_quantity(sigma, c)[1]
    return _expect_over_shares(sigma, lambda z: _share_surplus_logkinked(sigma, z, c), nodes) / W


def minmax_theta_ratio(sigma, theta: float) -> float:
    """Best expected U / expected W over all tariffs when the log-kinked slope
    has CDF g**theta.  The common theta/(theta - s) factor cancels."""
    sigma = float(sigma)
    if not 0 < sigma < 1:
        raise SigmaOutOfRange(f"sigma out of procurement range (0, 1): {sigma}")
    s = supply_exponent(sigma)
    if not theta > s:
        raise DivergentWelfare(f"theta={theta} must exceed {s:g}")
    return _bayes_optimal_scaled(sigma, theta) / _expected_welfare_scaled(sigma)


def _log_term(sigma: float) -> float:
    return sigma ** supply_exponent(sigma) * (1.0 + math.log1p(-sigma) / sigma)


def _bayes_optimal_scaled(sigma: float, theta: float) -> float:
    s = supply_exponent(sigma)
    return ((sigma * (1.0 + theta) / theta - 1.0) * _log_term(sigma)
            + (1.0 - sigma) / sigma * (theta / (1.0 + theta)) ** s)


def _expected_welfare_scaled(sigma: float) -> float:
    return (sigma - 1.0) * _log_term(sigma) + (1.0 - sigma) / sigma


@dataclass(frozen=True)
class SaddleReport:
    sigma: float
    b_hat: float
    linear: list = field(default_factory=list)
    logkinked: list = field(default_factory=list)
    theta: float = math.nan
    theta_value: float = math.nan
    linear_pass: bool = False
    logkinked_pass: bool = False
    theta_pass: bool = False
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.linear_pass and self.logkinked_pass and self.theta_pass

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "b_hat": self.b_hat,
            "checks": "pass" if self.passed else "fail",
            "linear": {"pass": self.linear_pass,
                       "ratios": [{"c": c, "ratio": r} for c, r in self.linear]},
            "logkinked": {"pass": self.logkinked_pass,
                          "ratios": [{"gamma_t": g, "ratio": r} for g, r in self.logkinked]},
            "theta": {"pass": self.theta_pass, "theta": self.theta,
                      "value": self.theta_value},
            "failures": self.failures,
        }


def saddle_verify(sigma, nodes: int = 200) -> SaddleReport:
    """Check the randomized-share guarantee three ways; failures are collected,
    never raised."""
    sigma = as_sigma(sigma)
    bh = b_hat(sigma)
    failures: list[str] = []

    linear = []
    for c in LINEAR_CHECK_COSTS:
        linear.append((float(c), saddle_ratio_linear(sigma, float(c), nodes)))
    linear_pass = all(abs(r - bh) <= LINEAR_CHECK_TOL for _, r in linear)
    if not linear_pass:
        failures.append("linear costs: expected ratio differs from b_hat")

    family = []
    for g in FAMILY_CHECK_GAMMAS:
        family.append((float(g), saddle_ratio_logkinked(sigma, float(g), nodes)))
    family_pass = all(r >= bh - FAMILY_CHECK_TOL for _, r in family)
    if not family_pass:
        failures.append("log-kinked costs: expected ratio below b_hat")

    theta = supply_exponent(sigma) * (1.0 + 1e-3)
    theta_value = minmax_theta_ratio(sigma, theta)
    theta_pass = abs(theta_value - bh) <= THETA_CHECK_TOL
    if not theta_pass:
        failures.append("theta prior: best ratio differs from b_hat")

    return SaddleReport(sigma, bh, linear, family, theta, theta_value,
                        linear_pass, family_pass, theta_pass, failures)


# --------------------------------------------------------------------------
# Benchmark against the Bayes-optimal tariff
# --------------------------------------------------------------------------

def point_mass_benchmark(sigma, cost, tol: float = 1e-12) -> tuple[float, float]:
    """Best constant share against a known cost, measured against W.

    With a single known cost the Bayes-optimal tariff extracts all of W, so
    this is the benchmark ratio for a point-mass prior.  Returns (z, ratio).
    """
    from .numerics import best_response

    sigma = float(sigma)
    W = efficient_quantity(sigma, cost)[1]

    def surplus(z):
        if isinstance(cost, LogKinked):
            q = float(saddle_best_response(sigma, z, cost))
        else:
            q = best_response(sigma, ConstantShare(z), cost)
        return (1.0 - z) * utility(sigma, q)

    z, U = maximize_unimodal(surplus, 0.0, 1.0, tol)
    return z, U / W


def theta_prior_share_surplus(sigma, theta: float, z: float, nodes: int = 200) -> float:
    """Expected buyer surplus of the share ``z`` under the theta prior, scaled
    by (theta - s) / theta.

    Substituting v = g**(theta - s) makes the density of g**-s growth uniform.
    """
    s = supply_exponent(sigma)
    power = 1.0 / (theta - s)

    # Supply scales like g**(-1/(1-sigma)) across the family, so U * g**s is
    # unchanged by raising g to a floor at which supply stays representable.
    g_floor = 10.0 ** (-100.0 * (1.0 - sigma))

    def integrand(v):
        g = np.maximum(np.power(np.asarray(v, dtype=float), power), g_floor)
        q = _family_supply(sigma, z, g)
        return (1.0 - z) * utility(sigma, q) * np.power(g, s)

    breaks = graded_breakpoints(0.0, 1.0, toward="left", levels=20)
    return quadrature(integrand, 0.0, 1.0, nodes, breaks)


@dataclass(frozen=True)
class BenchmarkReport:
    sigma: float
    b_hat: float
    value: float
    point_mass: list
    theta_family: list
    passed: bool

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "b_hat": self.b_hat,
            "value": self.value,
            "checks": "pass" if self.passed else "fail",
            "point_mass": [{"gamma_t": g, "z": z, "ratio": r} for g, z, r in self.point_mass],
            "theta_family": [{"theta": t, "z": z, "ratio": r} for t, z, r in self.theta_family],
        }


def bayes_benchmark_check(sigma, nodes: int = 200,
                          gammas=(0.1, 1.0, 10.0),
                          theta_factors=(1.001, 1.01, 1.1, 2.0, 10.0)) -> BenchmarkReport:
    """Minimum, over the log-kinked witness family, of the best constant share's
    expected buyer surplus relative to the Bayes-optimal tariff's.

    Members are point masses (where the Bayes-optimal tariff extracts W) and
    priors g**theta on the slope.  The minimum should equal b_hat, and no
    member may fall below it.
    """
    sigma = as_sigma(sigma)
    bh = b_hat(sigma)
    s = supply_exponent(sigma)

    point = []
    for g in gammas:
        z, r = point_mass_benchmark(sigma, saddle_cost(sigma, g))
        point.append((float(g), z, r))

    family = []
    for f in theta_factors:
        theta = s * f
        z, best = maximize_unimodal(
            lambda x: theta_prior_share_surplus(sigma, theta, x, nodes), 0.0, 1.0, 1e-6)
        family.append((theta, z, best / _bayes_optimal_scaled(sigma, theta)))

    value = min(r for *_, r in point + family)
    passed = abs(value - bh) <= FAMILY_CHECK_TOL and all(
        r >= bh - FAMILY_CHECK_TOL for *_, r in point + family)
    return BenchmarkReport(sigma, bh, value, point, family, passed)
