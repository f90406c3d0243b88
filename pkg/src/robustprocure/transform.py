"""General utilities via a change of quantity units.

Measuring quantity in units x with u(q(x)) = x**sigma / sigma turns any
increasing concave utility into the power form.  The cost in the new units,
c(u^-1(x**sigma / sigma)), stays convex as long as sigma is at least
1 / (1 + delta_lb), where delta_lb is a lower bound on the joint curvature
index

    delta(q, c) = u / (q u') * (q c'' / c' - q u'' / u').

With that sigma, the constant share z*(sigma) of utility guarantees the
buyer the ratio B(sigma) of efficient surplus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .adversary import random_convex_table
from .closedform import optimal_share
from .errors import (
    EmptyDomain,
    InversionFailure,
    NonPositiveDelta,
    NonSmooth,
    SigmaOutOfRange,
    ZeroMarginalCost,
    ZeroWelfare,
)
from .model import ConstantShare, Kinked, Linear, LogKinked, TabulatedConvex, breakpoints, evaluate_cost
from .numerics import GridSpec, maximize_unimodal

KINK_RTOL = 1e-12
CONVEXITY_TOL = 1e-9
INVERSE_RTOL = 1e-12


# --------------------------------------------------------------------------
# Utilities
# --------------------------------------------------------------------------

class _Utility:
    domain: tuple[float, float] = (0.0, math.inf)

    def value(self, q):
        raise NotImplementedError

    def d1(self, q):
        raise NotImplementedError

    def d2(self, q):
        raise NotImplementedError

    def inverse(self, x: float) -> float:
        """Quantity with utility ``x``: geometric bracketing, then Brent's method."""
        x = float(x)
        lo = 0.0
        if x <= self.value(lo):
            return lo
        hi = 1.0
        for _ in range(400):
            if self.value(hi) >= x:
                break
            lo, hi = hi, hi * 2.0
        else:
            raise InversionFailure(f"cannot bracket utility level {x}")
        return brentq(lambda q: self.value(q) - x, lo, hi,
                      xtol=1e-300, rtol=INVERSE_RTOL, maxiter=500)

    def inverse_many(self, x) -> np.ndarray:
        return np.array([self.inverse(v) for v in np.asarray(x, dtype=float)])


@dataclass(frozen=True)
class PowerUtility(_Utility):
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise SigmaOutOfRange("power utility needs a positive exponent")

    def value(self, q):
        return np.power(q, self.sigma) / self.sigma

    def d1(self, q):
        return np.power(q, self.sigma - 1.0)

    def d2(self, q):
        return (self.sigma - 1.0) * np.power(q, self.sigma - 2.0)


@dataclass(frozen=True)
class Log1pUtility(_Utility):
    def value(self, q):
        return np.log1p(q)

    def d1(self, q):
        return 1.0 / (1.0 + np.asarray(q, dtype=float))

    def d2(self, q):
        return -1.0 / (1.0 + np.asarray(q, dtype=float)) ** 2


@dataclass(frozen=True, eq=False)
class TabulatedUtility(_Utility):
    """Utility through tabulated points; derivatives by central differences
    with the local spacing (one-sided at the ends), interpolated linearly."""

    q: np.ndarray
    u: np.ndarray
    _d1: np.ndarray = field(init=False, repr=False)
    _d2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        u = np.array(self.u, dtype=float)
        if q.ndim != 1 or len(q) != len(u) or len(q) < 3:
            raise ValueError("need at least three (q, u) points")
        if np.any(np.diff(q) <= 0) or np.any(np.diff(u) <= 0):
            raise ValueError("tabulated utility must be strictly increasing in q and u")
        d1 = np.gradient(u, q)
        d2 = np.gradient(d1, q)
        for name, arr in (("q", q), ("u", u), ("_d1", d1), ("_d2", d2)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.q[0]), float(self.q[-1])

    def _check(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < self.q[0]) | (q > self.q[-1])):
            raise ValueError("query outside the tabulated utility range")
        return q

    def value(self, q):
        return np.interp(self._check(q), self.q, self.u)

    def d1(self, q):
        return np.interp(self._check(q), self.q, self._d1)

    def d2(self, q):
        return np.interp(self._check(q), self.q, self._d2)

    def inverse(self, x: float) -> float:
        x = float(x)
        if not self.u[0] <= x <= self.u[-1]:
            raise InversionFailure(f"utility level {x} outside the table")
        return float(np.interp(x, self.u, self.q))


UtilitySpec = PowerUtility | Log1pUtility | TabulatedUtility


# --------------------------------------------------------------------------
# Curvature
# --------------------------------------------------------------------------

def curvature_from_derivatives(u, u1, u2, c1, c2, q):
    """delta from utility and cost derivatives at q."""
    return u / (q * u1) * (c2 * q / c1 - q * u2 / u1)


def _near(q: float, point: float) -> bool:
    return abs(q - point) <= KINK_RTOL * max(abs(point), 1e-300)


def cost_derivatives(c, q: float) -> tuple[float, float]:
    """(c'(q), c''(q)) where the cost is twice differentiable.

    Raises NonSmooth at kinks and knots, ZeroMarginalCost where c' = 0.
    """
    if isinstance(c, Linear):
        c1, c2 = c.c, 0.0
    elif isinstance(c, Kinked):
        if _near(q, c.q_hat):
            raise NonSmooth(f"kinked cost is not differentiable at {c.q_hat}")
        c1, c2 = (0.0, 0.0) if q < c.q_hat else (c.gamma, 0.0)
    elif isinstance(c, LogKinked):
        if _near(q, c.q0) or _near(q, c.q1):
            raise NonSmooth("log-kinked cost is not twice differentiable at its joints")
        s = c.sigma
        if q < c.q0:
            c1, c2 = 0.0, 0.0
        elif q < c.q1:
            c1 = q ** (s - 1.0) - c.kappa / q
            c2 = (s - 1.0) * q ** (s - 2.0) + c.kappa / q ** 2
        else:
            c1, c2 = c.gamma_t, 0.0
    elif isinstance(c, TabulatedConvex):
        if any(_near(q, k) for k in c.q) or q > c.q[-1]:
            raise NonSmooth("tabulated cost is only differentiable between knots")
        i = int(np.searchsorted(c.q, q)) - 1
        c1, c2 = float(c.slopes[i]), 0.0
    else:
        raise TypeError(f"not a cost: {c!r}")
    if c1 <= 0:
        raise ZeroMarginalCost(f"marginal cost is zero at q={q}")
    return float(c1), float(c2)


def curvature_index(u: UtilitySpec, c, q: float) -> float:
    q = float(q)
    if not q > 0:
        raise ValueError("curvature index needs q > 0")
    c1, c2 = cost_derivatives(c, q)
    return float(curvature_from_derivatives(u.value(q), u.d1(q), u.d2(q), c1, c2, q))


# --------------------------------------------------------------------------
# Efficient quantity and seller response for general utilities
# --------------------------------------------------------------------------

SEARCH_GRID = GridSpec(1e-6, 1e6, 2001, "log")


def _search_points(u: UtilitySpec, c, grid: GridSpec) -> np.ndarray:
    lo, hi = u.domain
    pts = np.union1d(grid.points(), breakpoints(c))
    if isinstance(c, TabulatedConvex):
        hi = min(hi, float(c.q[-1]))
    pts = np.union1d(pts[(pts >= lo) & (pts <= hi)], [lo])
    if math.isfinite(hi) and hi > pts[-1]:
        pts = np.append(pts, hi)
    return pts


def _maximize_concave(f, pts: np.ndarray) -> tuple[float, float]:
    """Maximize a concave function: best grid point, then golden section
    between its neighbours.  Ties go to the smallest quantity."""
    vals = f(pts)
    i = int(np.argmax(vals))
    lo, hi = pts[max(i - 1, 0)], pts[min(i + 1, len(pts) - 1)]
    best_q, best_v = float(pts[i]), float(vals[i])
    if hi > lo:
        q, v = maximize_unimodal(lambda x: float(f(np.array([x]))[0]), lo, hi, tol=1e-12 * max(hi, 1e-300))
        if v > best_v:
            best_q, best_v = q, v
    return best_q, best_v


def general_efficient_quantity(u: UtilitySpec, c, grid: GridSpec = SEARCH_GRID) -> tuple[float, float]:
    pts = _search_points(u, c, grid)
    q, W = _maximize_concave(lambda q: u.value(q) - evaluate_cost(c, None, q), pts)
    if not W > 0:
        raise ZeroWelfare("efficient surplus is not positive")
    return q, W


def general_ratio(u: UtilitySpec, z: float, c, grid: GridSpec = SEARCH_GRID) -> float:
    """U / W when the seller faces t(q) = z * u(q) and cost ``c``."""
    pts = _search_points(u, c, grid)
    q, _ = _maximize_concave(lambda q: z * u.value(q) - evaluate_cost(c, None, q), pts)
    _, W = general_efficient_quantity(u, c, grid)
    return float((1.0 - z) * u.value(q) / W)


# --------------------------------------------------------------------------
# Curvature lower bound and transformed exponent
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaInfResult:
    value: float
    argmin_q: float
    argmin_cost: object
    n_evaluated: int
    n_skipped: int

    def to_dict(self) -> dict:
        from .adversary import describe_cost
        return {"delta_inf": self.value, "argmin_q": self.argmin_q,
                "argmin_cost": describe_cost(self.argmin_cost),
                "n_evaluated": self.n_evaluated, "n_skipped": self.n_skipped}


def delta_inf(u: UtilitySpec, costs: Sequence, grid: GridSpec) -> DeltaInfResult:
    """Smallest curvature index over the sampled quantities and costs.

    Only quantities up to each cost's efficient quantity count; kinks and
    points with zero marginal cost are skipped.  This is a sampled estimate
    of the infimum, so the argmin is reported for refinement.
    """
    best = (math.inf, math.nan, None)
    n_eval = n_skip = 0
    pts = grid.points()
    for c in costs:
        try:
            q_bar, _ = general_efficient_quantity(u, c)
        except ZeroWelfare:
            n_skip += len(pts)
            continue
        for q in pts:
            if not 0 < q <= q_bar:
                n_skip += 1
                continue
            try:
                d = curvature_index(u, c, q)
            except (NonSmooth, ZeroMarginalCost):
                n_skip += 1
                continue
            n_eval += 1
            if d < best[0]:
                best = (d, float(q), c)
    if n_eval == 0:
        raise EmptyDomain("no (q, cost) pair admits a curvature index")
    return DeltaInfResult(best[0], best[1], best[2], n_eval, n_skip)


def sigma_hat(delta_lb: float) -> float:
    """Exponent 1 / (1 + delta_lb) for the transformed problem."""
    if not delta_lb > 0:
        raise NonPositiveDelta(
            f"curvature lower bound {delta_lb} is not positive; no positive guarantee")
    return 1.0 / (1.0 + delta_lb)


@dataclass(frozen=True)
class ConvexityReport:
    passed: bool
    min_second_difference: float
    worst_x: float
    tolerance: float

    def to_dict(self) -> dict:
        return {"passed": self.passed, "min_second_difference": self.min_second_difference,
                "worst_x": self.worst_x, "tolerance": self.tolerance}


def transformed_cost_check(u: UtilitySpec, c, sigma, grid: GridSpec) -> ConvexityReport:
    """Convexity of x -> c(u^-1(x**sigma / sigma)) on a uniform x-grid spanning
    the quantity range of ``grid``."""
    sigma = float(sigma)
    if not 0 < sigma < 1:
        raise SigmaOutOfRange(f"sigma out of procurement range (0, 1): {sigma}")
    x_lo = (sigma * float(u.value(grid.lo))) ** (1.0 / sigma)
    x_hi = (sigma * float(u.value(grid.hi))) ** (1.0 / sigma)
    x = np.linspace(x_lo, x_hi, grid.n)
    q = u.inverse_many(np.power(x, sigma) / sigma)
    cost = np.asarray(evaluate_cost(c, None, q), dtype=float)
    second = cost[2:] - 2.0 * cost[1:-1] + cost[:-2]
    tol = CONVEXITY_TOL * max(1.0, float(np.max(np.abs(cost))))
    i = int(np.argmin(second))
    return ConvexityReport(bool(second[i] >= -tol), float(second[i]), float(x[i + 1]), tol)


# --------------------------------------------------------------------------
# Guarantee for a general utility
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneralGuarantee:
    sigma_hat: float
    z_star: float
    bound: float
    mechanism: ConstantShare
    utility: object
    delta: DeltaInfResult
    passed: bool | None = None
    min_ratio: float | None = None
    worst_cost: object = None
    n_samples: int = 0

    def to_dict(self) -> dict:
        from .adversary import describe_cost
        return {
            "sigma_hat": self.sigma_hat, "z_star": self.z_star, "bound": self.bound,
            "delta_inf": self.delta.value, "argmin_q": self.delta.argmin_q,
            "verification": None if self.passed is None else {
                "passed": self.passed, "min_ratio": self.min_ratio,
                "worst_cost": describe_cost(self.worst_cost), "n_samples": self.n_samples},
        }


def general_guarantee(u: UtilitySpec, costs: Sequence, grid: GridSpec,
                      samples: Sequence | None = None,
                      tol: float = 1e-6) -> GeneralGuarantee:
    """Share of utility z*(sigma_hat) and its guarantee B(sigma_hat).

    The mechanism pays ``z_star * u(q)`` in the caller's utility units.  If
    ``samples`` are given, the guarantee is checked on each of them by direct
    computation in quantity space.
    """
    d = delta_inf(u, costs, grid)
    s_hat = sigma_hat(d.value)
    z, bound = optimal_share(s_hat)
    result = GeneralGuarantee(s_hat, z, bound, ConstantShare(z), u, d)
    if samples is None:
        return result
    worst, worst_cost = math.inf, None
    for c in samples:
        r = general_ratio(u, z, c)
        if r < worst:
            worst, worst_cost = r, c
    return GeneralGuarantee(s_hat, z, bound, ConstantShare(z), u, d,
                            bool(worst >= bound - tol), worst, worst_cost, len(samples))


def shifted_cost_samples(n: int, q_lo: float, seed: int = 0) -> list:
    """Convex costs that are zero below ``q_lo``: kinked costs with kink at or
    beyond ``q_lo`` and random tabulated costs with a zero first segment."""
    rng = np.random.default_rng(seed)
    out: list = []
    for i in range(n):
        if i % 2 == 0:
            out.append(Kinked(q_lo * 10.0 ** rng.uniform(0, 2), 10.0 ** rng.uniform(-3, -0.5)))
        else:
            table = random_convex_table(rng, min_last_slope=1e-2)
            q = np.concatenate([[0.0], q_lo + table.q])
            cost = np.concatenate([[0.0], table.cost])
            out.append(TabulatedConvex(q, cost))
    return out
