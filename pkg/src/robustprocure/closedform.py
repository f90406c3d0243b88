"""Analytic formulas for constant-share tariffs, their guarantees, the
randomized-share saddle point and the constant-markup pricing rule.

Throughout, ``s = sigma / (1 - sigma)`` is the supply exponent.  The formulas
accept any sigma in the open interval (0, 1) (and sigma > 1 where noted), so
limits near the endpoints can be evaluated; mechanism searches elsewhere
apply the tighter numeric clamp.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import DivergentWelfare, SigmaOutOfRange
from .model import AffineShare
from .numerics import maximize_unimodal


class GuaranteePair(NamedTuple):
    z_star: float
    bound: float


class MarkupRule(NamedTuple):
    markup: float
    guarantee: float


class PricingOutcome(NamedTuple):
    q: float
    transfer: float
    profit: float
    welfare: float
    ratio: float


def _procurement(sigma) -> float:
    sigma = float(sigma)
    if not 0.0 < sigma < 1.0:
        raise SigmaOutOfRange(f"sigma out of procurement range (0, 1): {sigma}")
    return sigma


def _pricing(sigma) -> float:
    sigma = float(sigma)
    if not (sigma > 1.0 and math.isfinite(sigma)):
        raise SigmaOutOfRange(f"sigma out of pricing range (1, inf): {sigma}")
    return sigma


def supply_exponent(sigma: float) -> float:
    return sigma / (1.0 - sigma)


def _safe_exp(x: float) -> float:
    return math.inf if x > 709.0 else math.exp(x)


def _pow(base: float, exponent: float) -> float:
    if base == 0.0:
        return 0.0 if exponent > 0 else math.inf
    return _safe_exp(exponent * math.log(base))


# --------------------------------------------------------------------------
# Linear costs
# --------------------------------------------------------------------------

def linear_supply(sigma, z: float, c: float) -> float:
    """Quantity a seller with constant marginal cost ``c`` supplies under share ``z``."""
    s = _procurement(sigma)
    if c == 0:
        raise ZeroDivisionError("supply is unbounded at zero marginal cost")
    return _pow(z / c, 1.0 / (1.0 - s))


def linear_buyer_surplus(sigma, z: float, c: float) -> float:
    s = _procurement(sigma)
    if c == 0:
        raise ZeroDivisionError("surplus is unbounded at zero marginal cost")
    return (1.0 - z) / s * _pow(z / c, supply_exponent(s))


def linear_welfare(sigma, c: float) -> float:
    s = _procurement(sigma)
    if c == 0:
        raise ZeroDivisionError("welfare is unbounded at zero marginal cost")
    return (1.0 - s) / s * _pow(c, -supply_exponent(s))


def linear_ratio(sigma, z: float) -> float:
    """Buyer surplus over efficient surplus under linear cost; cost-free."""
    s = _procurement(sigma)
    return (1.0 - z) * _pow(z, supply_exponent(s)) / (1.0 - s)


def sigma_ratio(sigma) -> float:
    """sigma ** (sigma / (1 - sigma)) for sigma in (0, 1) or sigma > 1."""
    sigma = float(sigma)
    if not (sigma > 0 and sigma != 1.0 and math.isfinite(sigma)):
        raise SigmaOutOfRange(f"sigma must be positive and differ from 1: {sigma}")
    return _pow(sigma, supply_exponent(sigma))


def joint_surplus_bound(sigma) -> float:
    """Lower bound on (U + Pi) / W under the share z = sigma with linear cost."""
    s = _procurement(sigma)
    return sigma_ratio(s) * (1.0 + s)


# --------------------------------------------------------------------------
# Convex costs
# --------------------------------------------------------------------------

def _denominator(s: float, z: float) -> float:
    return (1.0 - s) * _pow(z, -supply_exponent(s)) + s * z


def kinked_ratio(sigma, z: float) -> float:
    """Worst-case buyer surplus ratio of the share ``z`` over convex costs."""
    s = _procurement(sigma)
    if z <= 0:
        return 0.0
    return (1.0 - z) / _denominator(s, z)


def weighted_share_objective(sigma, z: float, alpha: float = 0.0) -> float:
    """Worst case of (U + alpha * Pi) / W for the share ``z``."""
    s = float(sigma)
    if z <= 0:
        return 0.0
    return (1.0 - (1.0 - alpha) * z) / _denominator(s, z)


def _objective_slope_sign(s: float, z: float, alpha: float) -> float:
    num = 1.0 - (1.0 - alpha) * z
    den = _denominator(s, z)
    d_num = -(1.0 - alpha)
    d_den = s * (1.0 - _pow(z, -1.0 / (1.0 - s)))
    return d_num * den - num * d_den


def optimal_share(sigma, alpha: float = 0.0) -> GuaranteePair:
    """Share maximizing the worst-case (U + alpha * Pi) / W and its value."""
    s = _procurement(sigma)
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if _objective_slope_sign(s, 1.0, alpha) >= 0:
        # Only at alpha = 1: the objective still rises at full concession.
        return GuaranteePair(1.0, weighted_share_objective(s, 1.0, alpha))
    z, _ = maximize_unimodal(lambda x: weighted_share_objective(s, x, alpha),
                             1e-12, 1.0, tol=1e-12)
    # Golden section resolves a flat maximum only to ~sqrt(eps); polish on
    # the sign change of the derivative.
    slope = lambda x: _objective_slope_sign(s, x, alpha)
    width = 1e-7
    while width < 1.0:
        lo, hi = max(z * (1 - width), 1e-300), min(z * (1 + width), 1.0)
        if slope(lo) > 0 > slope(hi):
            z = brentq(slope, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
            break
        width *= 10
    return GuaranteePair(float(z), weighted_share_objective(s, z, alpha))


# --------------------------------------------------------------------------
# Randomized shares
# --------------------------------------------------------------------------

def b_hat(sigma) -> float:
    """Guarantee of the optimal randomization over constant shares."""
    s = _procurement(sigma)
    return 1.0 / (_pow(s, -supply_exponent(s)) - s - math.log1p(-s))


def saddle_share_cdf(sigma, z):
    """CDF of the randomized share: -b_hat*log(1-z) below sigma, 1 from sigma on."""
    s = _procurement(sigma)
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=float)
    if np.any((z < 0) | (z > 1)):
        raise ValueError("shares must lie in [0, 1]")
    zc = np.minimum(z, s)
    out = np.where(z < s, -b_hat(s) * np.log1p(-zc), 1.0)
    return float(out) if scalar else out


def saddle_share_density(sigma, z):
    s = _procurement(sigma)
    z = np.asarray(z, dtype=float)
    return np.where(z < s, b_hat(s) / (1.0 - np.minimum(z, s)), 0.0)


def saddle_share_atom(sigma) -> float:
    """Probability mass the randomized share puts on z = sigma."""
    s = _procurement(sigma)
    return 1.0 + b_hat(s) * math.log1p(-s)


# --------------------------------------------------------------------------
# Mechanism constructors
# --------------------------------------------------------------------------

def bayes_transfer(sigma, alpha_exp: float, c_bar: float) -> AffineShare:
    """Optimal affine-share tariff against marginal costs with CDF (c/c_bar)**alpha_exp."""
    s = _procurement(sigma)
    if c_bar <= 0:
        raise ValueError("c_bar must be positive")
    if not alpha_exp > supply_exponent(s):
        raise DivergentWelfare(
            f"expected welfare diverges for alpha_exp={alpha_exp} <= {supply_exponent(s):g}")
    z = alpha_exp / (1.0 + alpha_exp)
    intercept = (1.0 - s) / s * _pow(z, 1.0 / (1.0 - s)) * _pow(c_bar, -supply_exponent(s))
    return AffineShare(z, intercept)


def maximin_transfer(sigma, w_floor: float) -> AffineShare:
    """Full-surplus tariff u(q) - w_floor: the seller keeps welfare above the floor."""
    _procurement(sigma)
    if w_floor < 0:
        raise ValueError("w_floor must be nonnegative")
    return AffineShare(1.0, float(w_floor))


# --------------------------------------------------------------------------
# Nonlinear pricing (sigma > 1)
# --------------------------------------------------------------------------

def markup_rule(sigma) -> MarkupRule:
    s = _pricing(sigma)
    return MarkupRule((s - 1.0) / s, sigma_ratio(s))


def pricing_cost(sigma, q):
    s = float(sigma)
    return (s - 1.0) / s * np.power(q, s) / s


def pricing_outcome(sigma, v: float, factor: float | None = None) -> PricingOutcome:
    """Outcome of the tariff ``factor * c(q)`` for a buyer with linear value ``v``.

    The default factor is sigma, the constant-markup tariff.
    """
    s = _pricing(sigma)
    k = s if factor is None else float(factor)
    if k <= 0 or v <= 0:
        raise ValueError("factor and value must be positive")
    # Marginal cost is (s - 1) / s * q**(s - 1); the buyer sets v = k * c'(q).
    base = v * s / (s - 1.0)
    q = (base / k) ** (1.0 / (s - 1.0))
    q_eff = base ** (1.0 / (s - 1.0))
    cost = float(pricing_cost(s, q))
    W = v * q_eff - float(pricing_cost(s, q_eff))
    profit = (k - 1.0) * cost
    return PricingOutcome(q, k * cost, profit, W, profit / W)
