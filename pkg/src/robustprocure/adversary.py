"""Worst-case cost search against a given tariff.

For a concave tariff the critical costs are two-piece kinked costs whose
slope matches the tariff's marginal at the kink: the seller supplies exactly
the kink quantity while the efficient quantity lies further out.  For a
non-concave tariff the seller behaves as if facing its concave envelope, so
only kinks where the tariff touches its envelope are equilibrium candidates.
Linear costs are scanned as well.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .closedform import optimal_share
from .errors import CertificateMismatch, DegenerateKink, QueryOutOfRange, ZeroWelfare
from .model import (
    AffineShare,
    ConstantShare,
    Kinked,
    Linear,
    LogKinked,
    Tabulated,
    TabulatedConvex,
    as_sigma,
    evaluate_cost,
    evaluate_mechanism,
    surplus_report,
    utility,
)
from .numerics import GridSpec, best_response, best_response_many, concave_envelope, efficient_quantity

log = logging.getLogger(__name__)

KINK_GRID = GridSpec(1e-4, 1e4, 2001, "log")
LINEAR_GRID = GridSpec(1e-3, 1e3, 201, "log")
FD_STEP = 1e-6
MIN_KINK = 1e-9
WITNESS_TOL = 1e-9
VERIFY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class GuaranteeCertificate:
    bound_claimed: float
    min_ratio_found: float
    worst_cost: object
    worst_q_hat: float | None
    n_candidates: int
    n_skipped: int = 0
    candidate_q_hat: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    candidate_ratios: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def to_dict(self) -> dict:
        return {
            "bound_claimed": self.bound_claimed,
            "min_ratio_found": self.min_ratio_found,
            "worst_cost": describe_cost(self.worst_cost),
            "worst_q_hat": self.worst_q_hat,
            "n_candidates": self.n_candidates,
            "n_skipped": self.n_skipped,
        }


@dataclass(frozen=True, eq=False)
class VerificationReport:
    passed: bool
    bound: float
    min_ratio: float
    worst_cost: object
    n_samples: int
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "bound": self.bound,
            "min_ratio": self.min_ratio,
            "worst_cost": describe_cost(self.worst_cost),
            "n_samples": self.n_samples,
            "n_skipped": self.n_skipped,
        }


def describe_cost(c) -> dict | None:
    if c is None:
        return None
    if isinstance(c, Linear):
        return {"type": "linear", "c": c.c}
    if isinstance(c, Kinked):
        return {"type": "kinked", "q_hat": c.q_hat, "gamma": c.gamma}
    if isinstance(c, LogKinked):
        return {"type": "logkinked", "gamma_t": c.gamma_t, "sigma": c.sigma}
    if isinstance(c, TabulatedConvex):
        return {"type": "table", "q": c.q.tolist(), "cost": c.cost.tolist()}
    raise TypeError(f"not a cost: {c!r}")


# --------------------------------------------------------------------------
# Concave envelope of a tariff
# --------------------------------------------------------------------------

def _affine_tangent_point(sigma: float, m: AffineShare) -> float:
    """Where the chord from the origin touches z*u - intercept."""
    if m.intercept == 0:
        return 0.0
    return (m.intercept * sigma / (m.z * (1.0 - sigma))) ** (1.0 / sigma)


def mechanism_envelope(sigma, m):
    """Concave envelope of the tariff as a vectorized callable."""
    sigma = float(sigma)
    if isinstance(m, ConstantShare):
        return lambda q: evaluate_mechanism(m, sigma, q)
    if isinstance(m, AffineShare):
        if m.z == 0:
            return lambda q: np.zeros_like(np.asarray(q, dtype=float))
        q_t = _affine_tangent_point(sigma, m)
        chord = (m.z * utility(sigma, q_t) - m.intercept) / q_t if q_t > 0 else 0.0

        def env(q):
            q = np.asarray(q, dtype=float)
            return np.where(q < q_t, chord * q, m.z * utility(sigma, q) - m.intercept)
        return env
    if isinstance(m, Tabulated):
        hull = concave_envelope(np.column_stack([m.q, m.t]))

        def env(q):
            if np.any(np.asarray(q) > m.q_max):
                raise QueryOutOfRange("query beyond last knot of tabulated mechanism")
            return hull(q)
        return env
    raise TypeError(f"not a mechanism: {m!r}")


def contact_mask(sigma, m, q) -> np.ndarray:
    """True where the tariff coincides with its concave envelope."""
    q = np.asarray(q, dtype=float)
    if isinstance(m, ConstantShare):
        return np.ones(q.shape, dtype=bool)
    if isinstance(m, AffineShare):
        if m.z == 0:
            return np.zeros(q.shape, dtype=bool)
        return q >= _affine_tangent_point(float(sigma), m)
    if isinstance(m, Tabulated):
        inside = q <= m.q_max
        qi = np.minimum(q, m.q_max)
        env = mechanism_envelope(sigma, m)(qi)
        t = evaluate_mechanism(m, sigma, qi)
        scale = max(1.0, float(np.max(np.abs(m.t))))
        return inside & (env - t <= 1e-12 * scale)
    raise TypeError(f"not a mechanism: {m!r}")


def envelope_marginals(sigma, m, q_hat) -> np.ndarray:
    """Central-difference slope of the tariff's concave envelope at each
    ``q_hat`` (step ``q_hat * 1e-6``; one-sided at a tabulated tariff's end)."""
    sigma = float(sigma)
    q_hat = np.asarray(q_hat, dtype=float)
    env = mechanism_envelope(sigma, m)
    h = q_hat * FD_STEP
    up = q_hat + h
    if isinstance(m, Tabulated):
        past = up > m.q_max
        up = np.where(past, q_hat, up)
        span = np.where(past, h, 2.0 * h)
    else:
        span = 2.0 * h
    return (env(up) - env(q_hat - h)) / span


def kinked_cost_for(sigma, m, q_hat: float) -> Kinked:
    """Kinked cost with kink at ``q_hat`` and slope equal to the envelope's marginal.

    At a knot of a tabulated tariff the central difference averages the two
    adjacent slopes.
    """
    if not q_hat >= MIN_KINK:
        raise DegenerateKink(f"kink quantity {q_hat} below {MIN_KINK}")
    gamma = float(envelope_marginals(sigma, m, q_hat))
    if not gamma > 0:
        raise DegenerateKink(f"tariff marginal at {q_hat} is not positive")
    return Kinked(float(q_hat), gamma)


# --------------------------------------------------------------------------
# Worst-case search
# --------------------------------------------------------------------------

def _welfare_many(sigma, costs):
    W = np.empty(len(costs))
    for i, c in enumerate(costs):
        try:
            W[i] = efficient_quantity(sigma, c)[1]
        except ZeroWelfare:
            W[i] = np.nan
    return W


def _ratios(sigma, m, costs, q, alpha):
    t = evaluate_mechanism(m, sigma, q)
    cost = np.array([evaluate_cost(c, sigma, qi) for c, qi in zip(costs, q)])
    U = utility(sigma, q) - t
    Pi = t - cost
    W = _welfare_many(sigma, costs)
    return (U + alpha * Pi) / W


def worst_case_ratio(sigma, m, q_hat_grid: GridSpec | None = None, alpha: float = 0.0,
                     *, linear_grid: GridSpec | None = LINEAR_GRID,
                     grid: GridSpec | None = None,
                     bound: float | None = None) -> GuaranteeCertificate:
    """Minimum of (U + alpha*Pi) / W over kinked costs (one per envelope-contact
    kink in ``q_hat_grid``) and linear costs (one per efficient quantity in
    ``linear_grid``; pass ``None`` to skip).

    ``bound`` defaults to the best guarantee any tariff can reach at this
    (sigma, alpha).  The witness is re-solved on the scalar path before the
    certificate is returned.
    """
    sigma = as_sigma(sigma)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    q_hats = (q_hat_grid or KINK_GRID).points()
    if isinstance(m, Tabulated):
        q_hats = q_hats[q_hats < m.q_max]
    q_hats = q_hats[contact_mask(sigma, m, q_hats) & (q_hats >= MIN_KINK)]
    gammas = envelope_marginals(sigma, m, q_hats)
    usable = gammas > 0
    skipped = int(np.count_nonzero(~usable))
    kinks = q_hats[usable]
    kinked = [Kinked(float(q), float(g)) for q, g in zip(kinks, gammas[usable])]

    ratios_k = np.empty(0)
    if kinked:
        q_k = best_response_many(sigma, m, kinked, grid)
        ratios_k = _ratios(sigma, m, kinked, q_k, alpha)
    linear = []
    if linear_grid is not None:
        linear = [Linear(q ** (sigma - 1.0)) for q in linear_grid.points()]
    ratios_l = np.empty(0)
    if linear:
        q_l = best_response_many(sigma, m, linear, grid)
        ratios_l = _ratios(sigma, m, linear, q_l, alpha)

    costs = kinked + linear
    ratios = np.concatenate([ratios_k, ratios_l])
    valid = ~np.isnan(ratios)
    skipped += int(np.count_nonzero(~valid))
    if not np.any(valid):
        raise ZeroWelfare("no candidate cost has positive efficient surplus")
    if skipped:
        log.info("worst_case_ratio skipped %d candidates", skipped)
    idx = int(np.argmin(np.where(valid, ratios, np.inf)))
    worst = costs[idx]
    found = float(ratios[idx])

    q_check = best_response(sigma, m, worst, grid)
    check = surplus_report(sigma, m, worst, q_check).weighted_ratio(alpha)
    if abs(check - found) > WITNESS_TOL:
        raise CertificateMismatch(
            f"witness ratio {found!r} re-evaluated as {check!r}")

    if bound is None:
        bound = optimal_share(sigma, alpha).bound
    return GuaranteeCertificate(
        bound_claimed=float(bound),
        min_ratio_found=found,
        worst_cost=worst,
        worst_q_hat=float(kinks[idx]) if idx < len(kinked) else None,
        n_candidates=len(costs),
        n_skipped=skipped,
        candidate_q_hat=kinks,
        candidate_ratios=ratios_k,
    )


def tight_cost(sigma, q_tilde: float) -> Kinked:
    """Kinked cost at which the optimal share exactly attains its guarantee."""
    sigma = as_sigma(sigma)
    if not q_tilde > 0:
        raise ValueError("q_tilde must be positive")
    z = optimal_share(sigma).z_star
    return Kinked(float(q_tilde), z * q_tilde ** (sigma - 1.0))


def verify_guarantee(sigma, m, bound: float, cost_samples: Sequence,
                     grid: GridSpec | None = None) -> VerificationReport:
    """Pass iff U/W >= bound - 1e-6 for every sampled cost."""
    sigma = as_sigma(sigma)
    samples = list(cost_samples)
    if not samples:
        raise ValueError("need at least one cost sample")
    q = best_response_many(sigma, m, samples, grid)
    worst_ratio, worst_cost, skipped = np.inf, None, 0
    for c, qi in zip(samples, q):
        try:
            r = surplus_report(sigma, m, c, qi).ratio
        except ZeroWelfare:
            skipped += 1
            continue
        if r < worst_ratio:
            worst_ratio, worst_cost = r, c
    return VerificationReport(
        passed=bool(worst_ratio >= bound - VERIFY_TOL),
        bound=float(bound),
        min_ratio=float(worst_ratio),
        worst_cost=worst_cost,
        n_samples=len(samples),
        n_skipped=skipped,
    )


# --------------------------------------------------------------------------
# Sample generators
# --------------------------------------------------------------------------

def random_convex_table(rng: np.random.Generator, q_top: float = 1e6,
                        min_last_slope: float = 1.0) -> TabulatedConvex:
    """Random convex piecewise-linear cost covering [0, q_top]."""
    k = int(rng.integers(3, 16))
    inner = np.sort(10.0 ** rng.uniform(-4, 4, size=k))
    q = np.concatenate([[0.0], np.unique(inner), [q_top]])
    slopes = np.sort(10.0 ** rng.uniform(-3, 1, size=len(q) - 1))
    if rng.random() < 0.5:
        slopes[0] = 0.0
    slopes[-1] = max(slopes[-1], min_last_slope)
    cost = np.concatenate([[0.0], np.cumsum(slopes * np.diff(q))])
    return TabulatedConvex(q, cost)


def default_cost_samples(sigma, n: int = 200, seed: int = 0) -> list:
    """Mixed cost sample: tabulated convex, kinked, linear and log-kinked."""
    sigma = as_sigma(sigma)
    rng = np.random.default_rng(seed)
    n_table = n * 7 // 20
    n_kinked = n // 4
    n_linear = n // 4
    n_log = n - n_table - n_kinked - n_linear
    out: list = [random_convex_table(rng) for _ in range(n_table)]
    out += [Kinked(10.0 ** rng.uniform(-3, 3), 10.0 ** rng.uniform(-2, 2))
            for _ in range(n_kinked)]
    out += [Linear(10.0 ** rng.uniform(-2, 2)) for _ in range(n_linear)]
    out += [LogKinked(10.0 ** rng.uniform(-2, 2), sigma) for _ in range(n_log)]
    return out


def share_table(sigma, share, log_step: float = 0.01,
                q_lo: float = 1e-6, q_hi: float = 1e6) -> Tabulated:
    """Tabulate t(q) = share(q) * u(q) on zero plus a log grid."""
    n = int(round(np.log(q_hi / q_lo) / log_step)) + 1
    q = np.concatenate([[0.0], np.geomspace(q_lo, q_hi, n)])
    t = np.concatenate([[0.0], share(q[1:]) * utility(sigma, q[1:])])
    return Tabulated(q, t)


def perturbed_share_table(sigma, z: float, rng: np.random.Generator,
                          log_step: float = 0.01, max_tries: int = 100) -> Tabulated:
    """Tabulated share ``z`` plus a Gaussian bump in log q.

    The bump has absolute height 0.01 to 0.03 (either sign), centre in
    [1e-2, 1e2] and log-width 0.5 to 2.  Draws that would make the tariff
    decreasing are rejected.
    """
    for _ in range(max_tries):
        amp = rng.uniform(0.01, 0.03) * rng.choice([-1.0, 1.0])
        centre = rng.uniform(np.log(1e-2), np.log(1e2))
        width = rng.uniform(0.5, 2.0)

        def share(q):
            return np.clip(z + amp * np.exp(-0.5 * ((np.log(q) - centre) / width) ** 2), 0.0, 1.0)
        try:
            return share_table(sigma, share, log_step)
        except ValueError:
            continue
    raise RuntimeError("could not draw a monotone perturbation")
