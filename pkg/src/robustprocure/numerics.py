"""Numeric kernels: golden-section search, seller best response, efficient
quantity, upper concave envelope and Gauss-Legendre quadrature."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import UnboundedWelfare, ZeroWelfare
from .model import (
    Kinked,
    Linear,
    LogKinked,
    Tabulated,
    TabulatedConvex,
    breakpoints,
    evaluate_cost,
    evaluate_mechanism,
    utility,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
# Payoffs within a few ulps of the magnitudes of t and c count as ties.
TIE_ULPS = 16 * np.finfo(float).eps
REFINE_ROUNDS = 6
REFINE_POINTS = 21
CHUNK_ROWS = 256
DEFAULT_GRID_N = 4001


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    n: int
    spacing: str = "log"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs at least two points")
        if self.spacing == "log":
            if not 0 < self.lo < self.hi:
                raise ValueError("log grid needs 0 < lo < hi")
        elif self.spacing == "linear":
            if not 0 <= self.lo < self.hi:
                raise ValueError("linear grid needs 0 <= lo < hi")
        else:
            raise ValueError(f"unknown spacing {self.spacing!r}")

    def points(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.lo, self.hi, self.n)
        return np.linspace(self.lo, self.hi, self.n)


def default_grid() -> GridSpec:
    """Log grid on [1e-6, 1e6]; ``ROBUSTPROCURE_GRID_N`` overrides the size."""
    n = int(os.environ.get("ROBUSTPROCURE_GRID_N", DEFAULT_GRID_N))
    return GridSpec(1e-6, 1e6, n, "log")


def maximize_unimodal(f: Callable[[float], float], lo: float, hi: float,
                      tol: float = 1e-10) -> tuple[float, float]:
    """Golden-section search; the endpoints are compared at the end so that
    monotone objectives return the boundary exactly."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    a, b = float(lo), float(hi)
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
    x_best, f_best = (x1, f1) if f1 >= f2 else (x2, f2)
    for x_end in (lo, hi):
        f_end = f(x_end)
        if f_end > f_best:
            x_best, f_best = x_end, f_end
    return float(x_best), float(f_best)


# --------------------------------------------------------------------------
# Seller best response
# --------------------------------------------------------------------------

_PIECEWISE_LINEAR_COSTS = (Linear, Kinked, TabulatedConvex)


def _cost_rows(costs: Sequence, sigma: float, Q: np.ndarray) -> np.ndarray:
    """Cost matrix for ``costs`` (one per row) at quantities ``Q``.

    ``Q`` has one row per cost or a single shared row.  Quantities outside a
    tabulated cost's domain map to +inf so they can never be chosen.
    """
    rows = len(costs)
    kinds = {type(c) for c in costs}
    if kinds == {Kinked}:
        q_hat = np.array([c.q_hat for c in costs])[:, None]
        gamma = np.array([c.gamma for c in costs])[:, None]
        return gamma * np.maximum(Q - q_hat, 0.0)
    if kinds == {Linear}:
        slope = np.array([c.c for c in costs])[:, None]
        return slope * Q
    out = np.empty((rows, Q.shape[1]))
    for i, c in enumerate(costs):
        q = Q[i] if Q.shape[0] > 1 else Q[0]
        if isinstance(c, TabulatedConvex):
            inside = q <= c.q[-1]
            out[i] = np.where(inside, np.interp(np.minimum(q, c.q[-1]), c.q, c.cost), np.inf)
        else:
            out[i] = evaluate_cost(c, sigma, q)
    return out


def _pick_smallest_max(Q: np.ndarray, T: np.ndarray, C: np.ndarray,
                       sorted_prefix: int = 0) -> np.ndarray:
    """Per row, the smallest q whose payoff T - C ties the maximum.

    The tie tolerance is a few ulps of |t| + |c| at the maximizer, i.e. the
    resolution at which the payoff itself is known.  When the first
    ``sorted_prefix`` columns of ``Q`` ascend, the first tying column there is
    found without a masked minimum over the whole block.
    """
    P = T - C
    rows = np.arange(P.shape[0])
    arg = np.argmax(P, axis=1)
    M = P[rows, arg]
    if np.isnan(M).any():
        P = np.where(np.isnan(P), -np.inf, P)
        arg = np.argmax(P, axis=1)
        M = P[rows, arg]
    scale = np.abs(T[rows, arg]) + np.abs(C[rows, arg])
    near = P >= (M - TIE_ULPS * scale)[:, None]
    if not sorted_prefix:
        return np.where(near, Q, np.inf).min(axis=1)
    head = near[:, :sorted_prefix]
    first = np.argmax(head, axis=1)
    best = np.where(head[rows, first], Q[rows, first], np.inf)
    if near.shape[1] > sorted_prefix:
        tail = np.where(near[:, sorted_prefix:], Q[:, sorted_prefix:], np.inf).min(axis=1)
        best = np.minimum(best, tail)
    return best


def _neighbours(Q: np.ndarray, q_best: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest candidates on either side of ``q_best``.  Points within a few
    ulps of it count as the same point, else a near-duplicate would collapse
    the bracket onto one side of the optimum."""
    gap = (8 * np.finfo(float).eps * q_best)[:, None]
    below = np.where(Q < q_best[:, None] - gap, Q, -np.inf).max(axis=1)
    above = np.where(Q > q_best[:, None] + gap, Q, np.inf).min(axis=1)
    below = np.where(np.isfinite(below), below, q_best)
    above = np.where(np.isfinite(above), above, q_best)
    return below, above


def _extra_points(costs: Sequence, hi: float) -> np.ndarray:
    """Cost breakpoints per row, padded by repetition to a rectangle."""
    per_row = []
    for c in costs:
        bp = breakpoints(c)
        bp = bp[(bp >= 0) & (bp <= hi)]
        per_row.append(bp if len(bp) else np.zeros(1))
    width = max(len(bp) for bp in per_row)
    out = np.empty((len(costs), width))
    for i, bp in enumerate(per_row):
        out[i, :len(bp)] = bp
        out[i, len(bp):] = bp[-1]
    return out


def _best_response_chunk(sigma, m, costs, base_q, base_t, hi, exact):
    extra_q = _extra_points(costs, hi)
    extra_t = evaluate_mechanism(m, sigma, extra_q)
    base_c = _cost_rows(costs, sigma, base_q[None, :])
    extra_c = _cost_rows(costs, sigma, extra_q)
    rows = len(costs)
    Q = np.concatenate([np.broadcast_to(base_q, (rows, len(base_q))), extra_q], axis=1)
    T = np.concatenate([np.broadcast_to(base_t, (rows, len(base_t))), extra_t], axis=1)
    C = np.concatenate([base_c, extra_c], axis=1)
    q_best = _pick_smallest_max(Q, T, C, sorted_prefix=len(base_q))
    if exact:
        return q_best
    lo, up = _neighbours(Q, q_best)
    frac = np.linspace(0.0, 1.0, REFINE_POINTS)
    for _ in range(REFINE_ROUNDS):
        Qr = lo[:, None] + (up - lo)[:, None] * frac[None, :]
        Qr = np.concatenate([Qr, q_best[:, None]], axis=1)
        Qr = np.minimum(Qr, hi)
        Tr = evaluate_mechanism(m, sigma, Qr)
        q_best = _pick_smallest_max(Qr, Tr, _cost_rows(costs, sigma, Qr), REFINE_POINTS)
        lo, up = _neighbours(Qr, q_best)
    return q_best


def best_response_many(sigma, m, costs: Sequence, grid: GridSpec | None = None) -> np.ndarray:
    """Seller's smallest profit-maximizing quantity for each cost in ``costs``.

    Candidates are the grid, zero, the mechanism's knots and each cost's
    breakpoints.  A tabulated mechanism facing piecewise-linear costs has a
    piecewise-linear payoff, so its maximum sits on a knot and the search is
    exact.  Otherwise the best candidate is refined locally.
    """
    sigma = float(sigma)
    grid = grid or default_grid()
    base = grid.points()
    hi = grid.hi
    if isinstance(m, Tabulated):
        hi = m.q_max
        base = np.union1d(base[base <= hi], m.q)
    base = np.union1d(base, [0.0])
    exact = isinstance(m, Tabulated) and all(
        isinstance(c, _PIECEWISE_LINEAR_COSTS) for c in costs)
    if exact:
        knots = np.union1d(m.q, [0.0])
        base = knots
    base_t = evaluate_mechanism(m, sigma, base)
    out = np.empty(len(costs))
    for start in range(0, len(costs), CHUNK_ROWS):
        chunk = list(costs[start:start + CHUNK_ROWS])
        out[start:start + len(chunk)] = _best_response_chunk(
            sigma, m, chunk, base, base_t, hi, exact)
    return out


def best_response(sigma, m, c, grid: GridSpec | None = None) -> float:
    """Smallest maximizer of t(q) - c(q); ties resolve toward less supply."""
    return float(best_response_many(sigma, m, [c], grid)[0])


def seller_payoff(sigma, m, c, q):
    return evaluate_mechanism(m, sigma, q) - evaluate_cost(c, sigma, q)


# --------------------------------------------------------------------------
# Efficient quantity
# --------------------------------------------------------------------------

def efficient_quantity(sigma, c) -> tuple[float, float]:
    """Maximizer of u(q) - c(q) and the maximal value W."""
    s = float(sigma)
    if isinstance(c, Linear):
        if c.c <= 0:
            raise UnboundedWelfare("zero marginal cost gives unbounded welfare")
        q = c.c ** (-1.0 / (1.0 - s))
        W = (1.0 - s) / s * c.c ** (-s / (1.0 - s))
    elif isinstance(c, Kinked):
        q = max(c.q_hat, c.gamma ** (1.0 / (s - 1.0)))
        W = utility(s, q) - c.gamma * (q - c.q_hat)
    elif isinstance(c, LogKinked):
        q = c.gamma_t ** (-1.0 / (1.0 - s))
        W = utility(s, q) - evaluate_cost(c, s, q)
    elif isinstance(c, TabulatedConvex):
        q, W = _tabulated_efficient(s, c)
    else:
        raise TypeError(f"not a cost: {c!r}")
    if not W > 0:
        raise ZeroWelfare("efficient surplus is not positive")
    return float(q), float(W)


def _tabulated_efficient(s: float, c: TabulatedConvex) -> tuple[float, float]:
    slopes = c.slopes
    last_q = c.q[-1]
    if last_q ** (s - 1.0) > slopes[-1]:
        raise UnboundedWelfare(
            "utility still outgrows cost at the last tabulated quantity")
    with np.errstate(divide="ignore", over="ignore"):
        interior = np.where(slopes > 0, slopes, np.inf) ** (1.0 / (s - 1.0))
    cand = np.clip(interior, c.q[:-1], c.q[1:])
    cand = np.concatenate([cand, c.q])
    vals = utility(s, cand) - np.interp(cand, c.q, c.cost)
    i = int(np.argmax(vals))
    return float(cand[i]), float(vals[i])


# --------------------------------------------------------------------------
# Concave envelope
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Envelope:
    """Upper concave envelope of a finite point set."""

    hull_points: np.ndarray
    contact_flags: np.ndarray

    @property
    def hull_q(self) -> np.ndarray:
        return self.hull_points[:, 0]

    @property
    def hull_v(self) -> np.ndarray:
        return self.hull_points[:, 1]

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.hull_v) / np.diff(self.hull_q)

    def __call__(self, q):
        return np.interp(q, self.hull_q, self.hull_v)


def concave_envelope(points) -> Envelope:
    """Monotone-chain upper hull.  Collinear interior points are dropped from
    the hull but still flagged as contacts."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (q, value) points")
    if np.any(np.diff(pts[:, 0]) <= 0):
        raise ValueError("q must be strictly increasing")
    hull: list[int] = []
    for i in range(len(pts)):
        while len(hull) >= 2:
            o, a = pts[hull[-2]], pts[hull[-1]]
            cross = (a[0] - o[0]) * (pts[i, 1] - o[1]) - (a[1] - o[1]) * (pts[i, 0] - o[0])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    hull_pts = pts[hull].copy()
    env = np.interp(pts[:, 0], hull_pts[:, 0], hull_pts[:, 1])
    scale = max(1.0, float(np.max(np.abs(pts[:, 1]))))
    contact = env - pts[:, 1] <= 1e-12 * scale
    hull_pts.setflags(write=False)
    contact.setflags(write=False)
    return Envelope(hull_pts, contact)


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _gauss_legendre(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def quadrature(f: Callable, a: float, b: float, nodes: int = 200,
               breakpoints: Sequence[float] = ()) -> float:
    """Gauss-Legendre rule with ``nodes`` points on every segment between
    ``a``, the interior ``breakpoints`` and ``b``.  ``f`` takes arrays."""
    if nodes < 2:
        raise ValueError("need at least two nodes")
    a, b = float(a), float(b)
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    inner = sorted({float(p) for p in breakpoints if a < p < b})
    edges = [a, *inner, b]
    x, w = _gauss_legendre(nodes)
    parts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        vals = np.asarray(f(mid + half * x), dtype=float)
        parts.append(half * float(np.dot(w, vals)))
    return sign * math.fsum(parts)


def quadrature_with_atom(f: Callable, a: float, b: float, nodes: int,
                         atom_x: float, atom_mass: float,
                         breakpoints: Sequence[float] = (),
                         density: Callable | None = None) -> float:
    """Expectation of ``f`` under a measure with ``density`` on [a, b] (Lebesgue
    if omitted) plus a point mass ``atom_mass`` at ``atom_x``."""
    if density is None:
        cont = quadrature(f, a, b, nodes, breakpoints)
    else:
        cont = quadrature(lambda x: np.asarray(f(x)) * np.asarray(density(x)),
                          a, b, nodes, breakpoints)
    atom = atom_mass * float(np.asarray(f(np.array([atom_x])), dtype=float)[0])
    return cont + atom


def graded_breakpoints(a: float, b: float, toward: str = "left",
                       levels: int = 40, ratio: float = 0.5) -> np.ndarray:
    """Geometrically clustered split points for endpoint singularities or
    boundary layers: the segment lengths shrink by ``ratio`` toward one end."""
    offsets = (b - a) * ratio ** np.arange(1, levels + 1)
    pts = a + offsets if toward == "left" else b - offsets
    return np.sort(pts[(pts > a) & (pts < b)])
