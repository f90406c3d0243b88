"""Domain types and surplus accounting.

All quantities and money amounts are dimensionless reals ("utils"). The
buyer's gross utility is ``u(q) = q**sigma / sigma``.  Mechanisms map a
quantity to a transfer; cost specs map a quantity to the seller's cost.
Every evaluation function accepts scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import QueryOutOfRange, SigmaOutOfRange, ZeroWelfare

PROCUREMENT_RANGE = (1e-3, 1.0 - 1e-3)
PRICING_RANGE = (1.0 + 1e-3, 50.0)


def check_sigma(sigma: float, mode: str = "procurement") -> float:
    """Validate an elasticity against the numeric clamp for ``mode``."""
    sigma = float(sigma)
    if not math.isfinite(sigma):
        raise SigmaOutOfRange(f"sigma must be finite, got {sigma}")
    if mode == "procurement":
        lo, hi = PROCUREMENT_RANGE
        if not lo <= sigma <= hi:
            raise SigmaOutOfRange(
                f"sigma out of procurement range [{lo}, {hi}]: {sigma}")
    elif mode == "pricing":
        lo, hi = PRICING_RANGE
        if not lo < sigma <= hi:
            raise SigmaOutOfRange(f"sigma out of pricing range ({lo}, {hi}]: {sigma}")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return sigma


@dataclass(frozen=True)
class Elasticity:
    """Utility/cost exponent, validated for procurement or pricing use."""

    sigma: float
    mode: str = "procurement"

    def __post_init__(self):
        object.__setattr__(self, "sigma", check_sigma(self.sigma, self.mode))

    def __float__(self) -> float:
        return self.sigma


def as_sigma(sigma, mode: str = "procurement") -> float:
    if isinstance(sigma, Elasticity):
        return sigma.sigma
    return check_sigma(sigma, mode)


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# Mechanisms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantShare:
    """t(q) = z * u(q)."""

    z: float

    def __post_init__(self):
        if not 0.0 <= self.z <= 1.0:
            raise ValueError(f"share must lie in [0, 1], got {self.z}")


@dataclass(frozen=True)
class AffineShare:
    """t(q) = z * u(q) - intercept for q > 0, with t(0) = 0."""

    z: float
    intercept: float

    def __post_init__(self):
        if not 0.0 <= self.z <= 1.0:
            raise ValueError(f"share must lie in [0, 1], got {self.z}")
        if self.intercept < 0:
            raise ValueError("intercept must be nonnegative")


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Piecewise-linear tariff through ``(q[i], t[i])``; no extrapolation."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        q = _frozen_array(self.q, "q")
        t = _frozen_array(self.t, "t")
        if len(q) != len(t) or len(q) < 2:
            raise ValueError("need at least two (q, t) points of equal length")
        if q[0] != 0.0 or t[0] != 0.0:
            raise ValueError("tabulated mechanism must start at (0, 0)")
        if np.any(np.diff(q) <= 0):
            raise ValueError("tabulated q must be strictly increasing")
        if np.any(np.diff(t) < 0):
            raise ValueError("tabulated t must be nondecreasing")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def from_points(cls, points) -> "Tabulated":
        pts = np.asarray(points, dtype=float)
        return cls(pts[:, 0], pts[:, 1])

    @property
    def q_max(self) -> float:
        return float(self.q[-1])


MechanismSpec = Union[ConstantShare, AffineShare, Tabulated]


# --------------------------------------------------------------------------
# Costs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Linear:
    c: float

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("linear cost must be nonnegative")


@dataclass(frozen=True)
class Kinked:
    """Zero cost up to ``q_hat``, then slope ``gamma``."""

    q_hat: float
    gamma: float

    def __post_init__(self):
        if self.q_hat < 0:
            raise ValueError("q_hat must be nonnegative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class LogKinked:
    """Three-piece cost: zero, then u(q) - u(q0) - kappa*log(q/q0), then linear.

    The marginal cost rises continuously from 0 at ``q0`` to ``gamma_t`` at
    ``q1`` and stays there.  The family depends on sigma, which is stored.
    """

    gamma_t: float
    sigma: float
    q0: float = field(init=False)
    q1: float = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self):
        s, g = float(self.sigma), float(self.gamma_t)
        if not 0 < s < 1:
            raise SigmaOutOfRange(f"LogKinked needs sigma in (0, 1), got {s}")
        if not g > 0:
            raise ValueError("gamma_t must be positive")
        base = (s / g) ** (1.0 / (1.0 - s))
        object.__setattr__(self, "q1", base)
        object.__setattr__(self, "q0", (1.0 - s) ** (1.0 / s) * base)
        object.__setattr__(self, "kappa", (1.0 - s) * (s / g) ** (s / (1.0 - s)))
        mid_q0 = self._middle(self.q0)
        mid_q1 = self._middle(self.q1)
        scale = max(1.0, abs(mid_q1))
        if abs(mid_q0) > 1e-10 * scale:
            raise AssertionError(f"LogKinked discontinuous at q0: {mid_q0}")
        if abs(self._upper(self.q1) - mid_q1) > 1e-10 * scale:
            raise AssertionError("LogKinked discontinuous at q1")

    def _middle(self, q):
        s = self.sigma
        return q ** s / s - self.q0 ** s / s - self.kappa * np.log(q / self.q0)

    def _upper(self, q):
        return self._middle(self.q1) + self.gamma_t * (q - self.q1)


@dataclass(frozen=True, eq=False)
class TabulatedConvex:
    """Piecewise-linear convex cost through ``(q[i], cost[i])``."""

    q: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        q = _frozen_array(self.q, "q")
        c = _frozen_array(self.cost, "cost")
        if len(q) != len(c) or len(q) < 2:
            raise ValueError("need at least two (q, cost) points of equal length")
        if q[0] != 0.0 or c[0] != 0.0:
            raise ValueError("tabulated cost must start at (0, 0)")
        if np.any(np.diff(q) <= 0):
            raise ValueError("tabulated q must be strictly increasing")
        slopes = np.diff(c) / np.diff(q)
        if np.any(slopes < 0):
            raise ValueError("tabulated cost must be nondecreasing")
        scale = max(1.0, float(np.max(np.abs(slopes))))
        if np.any(np.diff(slopes) < -1e-12 * scale):
            raise ValueError("tabulated cost must be convex")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "cost", c)

    @classmethod
    def from_points(cls, points) -> "TabulatedConvex":
        pts = np.asarray(points, dtype=float)
        return cls(pts[:, 0], pts[:, 1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.cost) / np.diff(self.q)


CostSpec = Union[Linear, Kinked, LogKinked, TabulatedConvex]


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def _result(x, scalar: bool):
    return float(x) if scalar else x


def utility(sigma, q):
    """Gross utility q**sigma / sigma."""
    s = float(sigma)
    scalar = np.ndim(q) == 0
    q = np.asarray(q, dtype=float)
    return _result(np.power(q, s) / s, scalar)


def marginal_utility(sigma, q):
    s = float(sigma)
    scalar = np.ndim(q) == 0
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        return _result(np.power(q, s - 1.0), scalar)


def _check_nonnegative(q: np.ndarray):
    if np.any(q < 0):
        raise ValueError("quantities must be nonnegative")


def evaluate_mechanism(m: MechanismSpec, sigma, q):
    """Transfer t(q) paid to the seller for quantity q."""
    scalar = np.ndim(q) == 0
    q = np.asarray(q, dtype=float)
    _check_nonnegative(q)
    if isinstance(m, ConstantShare):
        out = m.z * utility(sigma, q)
    elif isinstance(m, AffineShare):
        out = np.where(q > 0, m.z * utility(sigma, q) - m.intercept, 0.0)
    elif isinstance(m, Tabulated):
        if np.any(q > m.q[-1]):
            raise QueryOutOfRange(
                f"query beyond last knot {m.q[-1]:g} of tabulated mechanism")
        out = np.interp(q, m.q, m.t)
    else:
        raise TypeError(f"not a mechanism: {m!r}")
    return _result(out, scalar)


def evaluate_cost(c: CostSpec, sigma, q):
    """Seller cost c(q).  ``sigma`` must match the stored one for LogKinked."""
    scalar = np.ndim(q) == 0
    q = np.asarray(q, dtype=float)
    _check_nonnegative(q)
    if isinstance(c, Linear):
        out = c.c * q
    elif isinstance(c, Kinked):
        out = c.gamma * np.maximum(q - c.q_hat, 0.0)
    elif isinstance(c, LogKinked):
        _match_sigma(c, sigma)
        qm = np.clip(q, c.q0, c.q1)
        out = np.where(q <= c.q0, 0.0,
                       np.where(q <= c.q1, c._middle(qm), c._upper(q)))
    elif isinstance(c, TabulatedConvex):
        if np.any(q > c.q[-1]):
            raise QueryOutOfRange(
                f"query beyond last knot {c.q[-1]:g} of tabulated cost")
        out = np.interp(q, c.q, c.cost)
    else:
        raise TypeError(f"not a cost: {c!r}")
    return _result(out, scalar)


def marginal_cost(c: CostSpec, sigma, q):
    """Right derivative of the cost."""
    scalar = np.ndim(q) == 0
    q = np.asarray(q, dtype=float)
    if isinstance(c, Linear):
        out = np.full_like(q, c.c)
    elif isinstance(c, Kinked):
        out = np.where(q < c.q_hat, 0.0, c.gamma)
    elif isinstance(c, LogKinked):
        _match_sigma(c, sigma)
        qm = np.clip(q, c.q0, c.q1)
        mid = np.power(qm, c.sigma - 1.0) - c.kappa / qm
        out = np.where(q < c.q0, 0.0, np.where(q < c.q1, mid, c.gamma_t))
    elif isinstance(c, TabulatedConvex):
        if np.any(q >= c.q[-1]):
            raise QueryOutOfRange("marginal cost undefined at or beyond last knot")
        idx = np.searchsorted(c.q, q, side="right") - 1
        out = c.slopes[idx]
    else:
        raise TypeError(f"not a cost: {c!r}")
    return _result(out, scalar)


def _match_sigma(c: LogKinked, sigma):
    if sigma is not None and abs(float(sigma) - c.sigma) > 1e-12:
        raise ValueError(
            f"LogKinked built for sigma={c.sigma} evaluated with sigma={sigma}")


def breakpoints(obj) -> np.ndarray:
    """Quantities where a mechanism or cost is not smooth."""
    if isinstance(obj, Kinked):
        return np.array([obj.q_hat])
    if isinstance(obj, LogKinked):
        return np.array([obj.q0, obj.q1])
    if isinstance(obj, (Tabulated, TabulatedConvex)):
        return np.asarray(obj.q)
    return np.empty(0)


# --------------------------------------------------------------------------
# Surplus accounting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SurplusReport:
    q_supplied: float
    q_efficient: float
    U: float
    Pi: float
    DWL: float
    W: float

    @property
    def ratio(self) -> float:
        if self.W <= 0:
            raise ZeroWelfare("ratio undefined when efficient surplus is zero")
        return self.U / self.W

    def weighted_ratio(self, alpha: float) -> float:
        """(U + alpha * Pi) / W, the regulator's objective."""
        if self.W <= 0:
            raise ZeroWelfare("ratio undefined when efficient surplus is zero")
        return (self.U + alpha * self.Pi) / self.W


def surplus_report(sigma, m: MechanismSpec, c: CostSpec, q_supplied: float) -> SurplusReport:
    """Account for U, Pi, DWL and W at the seller's chosen quantity.

    ``q_supplied`` should be the seller's best response (see
    :func:`robustprocure.numerics.best_response`).  DWL is the residual of
    the accounting identity W = U + Pi + DWL.
    """
    from .numerics import efficient_quantity

    q_eff, W = efficient_quantity(sigma, c)
    if W <= 0:
        raise ZeroWelfare("cost weakly dominates utility everywhere")
    u = utility(sigma, q_supplied)
    t = evaluate_mechanism(m, sigma, q_supplied)
    cost = evaluate_cost(c, sigma, q_supplied)
    U = u - t
    Pi = t - cost
    return SurplusReport(float(q_supplied), float(q_eff), U, Pi, W - U - Pi, W)


def dwl_integral(sigma, c: CostSpec, q_supplied: float, q_efficient: float,
                 nodes: int = 200) -> float:
    """Deadweight loss as the integral of u' - c' from supplied to efficient q."""
    from .numerics import graded_breakpoints, quadrature

    a, b = sorted((float(q_supplied), float(q_efficient)))
    if a == b:
        return 0.0
    inner = [p for p in breakpoints(c) if a < p < b]
    breaks = list(graded_breakpoints(a, b, toward="left")) if a == 0.0 else []
    breaks = sorted(set(breaks) | set(inner))

    def integrand(q):
        return marginal_utility(sigma, q) - marginal_cost(c, sigma, q)

    val = quadrature(integrand, a, b, nodes, breakpoints=breaks)
    return val if q_supplied <= q_efficient else -val
