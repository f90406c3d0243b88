import math

import numpy as np
import pytest

from robustprocure.closedform import b_hat, linear_ratio, linear_supply, saddle_share_atom, saddle_share_density
from robustprocure.errors import UnboundedWelfare
from robustprocure.model import (
    AffineShare,
    ConstantShare,
    Kinked,
    Linear,
    LogKinked,
    Tabulated,
    TabulatedConvex,
    evaluate_cost,
    utility,
)
from robustprocure.numerics import (
    GridSpec,
    best_response,
    best_response_many,
    concave_envelope,
    default_grid,
    efficient_quantity,
    graded_breakpoints,
    maximize_unimodal,
    quadrature,
    quadrature_with_atom,
    seller_payoff,
)


class TestGridSpec:
    def test_points(self):
        assert np.allclose(GridSpec(1, 100, 3).points(), [1, 10, 100])
        assert np.allclose(GridSpec(0, 1, 3, "linear").points(), [0, 0.5, 1])

    @pytest.mark.parametrize("args", [(0, 1, 5, "log"), (1, 1, 5, "log"), (-1, 1, 5, "linear"),
                                      (1, 2, 1, "log"), (1, 2, 5, "cubic")])
    def test_invariants(self, args):
        with pytest.raises(ValueError):
            GridSpec(*args)

    def test_default_and_env_override(self, monkeypatch):
        g = default_grid()
        assert (g.lo, g.hi, g.n, g.spacing) == (1e-6, 1e6, 4001, "log")
        monkeypatch.setenv("ROBUSTPROCURE_GRID_N", "101")
        assert default_grid().n == 101


class TestMaximizeUnimodal:
    def test_quadratic(self):
        x, f = maximize_unimodal(lambda x: -(x - 0.3) ** 2, 0, 1, 1e-10)
        assert abs(x - 0.3) <= 1e-10 and f <= 0

    def test_linear_ratio(self):
        # a smooth maximum is flat to ~sqrt(eps), which bounds the argmax accuracy
        x, _ = maximize_unimodal(lambda z: linear_ratio(0.5, z), 1e-6, 1 - 1e-6, 1e-10)
        assert abs(x - 0.5) <= 1e-7

    def test_monotone_returns_endpoint(self):
        assert maximize_unimodal(lambda x: x, 0, 1, 1e-10) == (1.0, 1.0)
        assert maximize_unimodal(lambda x: -x, 0, 1, 1e-10) == (0.0, 0.0)

    def test_empty_interval(self):
        with pytest.raises(ValueError):
            maximize_unimodal(lambda x: x, 1, 1)


class TestBestResponse:
    def test_linear_closed_form(self):
        assert best_response(0.5, ConstantShare(0.5), Linear(1.0)) == pytest.approx(0.25, rel=1e-6)

    def test_kinked_stops_at_kink(self):
        assert best_response(0.5, ConstantShare(0.5), Kinked(5.0, 10.0)) == pytest.approx(5.0, rel=1e-12)

    def test_zero_tariff_supplies_nothing(self):
        for c in (Linear(1.0), Kinked(2.0, 1.0), LogKinked(0.5, 0.5)):
            assert best_response(0.5, ConstantShare(0.0), c) == 0.0

    def test_plateau_resolves_left(self):
        # payoff t - 0 rises to 1 at q = 1, stays flat to q = 3
        m = Tabulated.from_points([(0, 0), (1, 1), (3, 1), (4, 1.5)])
        c = Kinked(3.0, 10.0)
        assert best_response(0.5, m, c) == 1.0

    @pytest.mark.parametrize("sigma", [0.3, 0.5, 0.7])
    def test_grid_matches_closed_form_everywhere(self, sigma):
        # 20 x 20 (z, c) grid; c is chosen so supply stays inside the search window
        q_target = np.geomspace(1e-4, 1e4, 20)
        for z in np.linspace(0.05, 0.95, 20):
            costs = [Linear(float(z * q ** (sigma - 1))) for q in q_target]
            q = best_response_many(sigma, ConstantShare(float(z)), costs)
            exact = np.array([linear_supply(sigma, z, c.c) for c in costs])
            assert np.max(np.abs(q / exact - 1)) <= 1e-6

    def test_brute_force_oracle(self):
        sigma, m, c = 0.5, AffineShare(0.5, 0.1), Kinked(0.3, 0.7)
        q = np.linspace(0, 10, 1_000_001)
        payoff = seller_payoff(sigma, m, c, q)
        brute = q[np.argmax(payoff)]
        assert abs(best_response(sigma, m, c) - brute) <= 2e-5

    def test_affine_participation(self):
        # intercept exceeds the best attainable profit, so nothing is supplied
        assert best_response(0.5, AffineShare(0.5, 10.0), Linear(1.0)) == 0.0

    def test_custom_grid(self):
        g = GridSpec(1e-3, 1e3, 301)
        assert best_response(0.5, ConstantShare(0.5), Linear(1.0), g) == pytest.approx(0.25, rel=1e-6)


class TestEfficientQuantity:
    def test_linear(self):
        assert efficient_quantity(0.5, Linear(1.0)) == pytest.approx((1.0, 1.0))

    def test_kinked(self):
        q, W = efficient_quantity(0.5, Kinked(1.0, 1.0))
        assert (q, W) == pytest.approx((1.0, 2.0))

    def test_kinked_interior(self):
        q, W = efficient_quantity(0.5, Kinked(1.0, 0.5))
        assert q == pytest.approx(4.0)
        assert W == pytest.approx(4.0 - 0.5 * 3.0)

    def test_logkinked(self):
        q, W = efficient_quantity(0.5, LogKinked(1.0, 0.5))
        assert q == pytest.approx(1.0)
        grid = np.linspace(1e-6, 10, 2_000_001)
        brute = np.max(utility(0.5, grid) - evaluate_cost(LogKinked(1.0, 0.5), 0.5, grid))
        assert W == pytest.approx(brute, rel=1e-9)

    def test_tabulated(self):
        c = TabulatedConvex([0, 1, 4, 100], [0, 0, 1.5, 100])
        q, W = efficient_quantity(0.5, c)
        grid = np.linspace(0, 100, 1_000_001)
        vals = utility(0.5, grid) - evaluate_cost(c, 0.5, grid)
        assert W == pytest.approx(vals.max(), rel=1e-9)
        assert q == pytest.approx(grid[np.argmax(vals)], abs=1e-3)

    def test_unbounded(self):
        with pytest.raises(UnboundedWelfare):
            efficient_quantity(0.5, Linear(0.0))
        with pytest.raises(UnboundedWelfare):
            efficient_quantity(0.5, TabulatedConvex([0, 1], [0, 0.1]))


class TestConcaveEnvelope:
    def test_concave_input_is_fixed(self):
        q = np.linspace(0, 4, 9)
        env = concave_envelope(np.column_stack([q, np.sqrt(q)]))
        assert env.contact_flags.all()
        assert len(env.hull_q) == 9

    def test_single_chord(self):
        env = concave_envelope([(0, 0), (1, 0), (2, 2)])
        assert env.hull_points.tolist() == [[0, 0], [2, 2]]
        assert env(1.0) == 1.0
        assert env.contact_flags.tolist() == [True, False, True]

    def test_slopes_strictly_decrease(self):
        rng = np.random.default_rng(3)
        q = np.sort(rng.uniform(0, 10, 100))
        env = concave_envelope(np.column_stack([q, rng.normal(size=100)]))
        assert np.all(np.diff(env.slopes) < 0)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            concave_envelope([(1, 0), (0, 1)])


class TestQuadrature:
    def test_polynomials(self):
        assert quadrature(lambda x: x, 0, 1, 50) == pytest.approx(0.5, abs=1e-15)
        assert quadrature(lambda x: x ** 3, 0, 1, 2) == pytest.approx(0.25, abs=1e-15)

    def test_reversed_interval(self):
        assert quadrature(lambda x: x, 1, 0, 5) == pytest.approx(-0.5)

    def test_breakpoints_handle_kinks(self):
        val = quadrature(lambda x: np.abs(x - 0.3), 0, 1, 4, breakpoints=[0.3])
        assert val == pytest.approx(0.5 * (0.3 ** 2 + 0.7 ** 2), abs=1e-15)

    def test_error_decreases_with_nodes(self):
        exact = 1 - math.cos(1.0)
        errs = [abs(quadrature(np.sin, 0, 1, n) - exact) for n in (2, 3, 4)]
        assert errs[0] > errs[1] > errs[2]

    @pytest.mark.parametrize("sigma", [0.1, 0.5, 0.9])
    def test_saddle_mass_is_one(self, sigma):
        total = quadrature_with_atom(
            lambda z: np.ones_like(z), 0.0, sigma, 200, sigma, saddle_share_atom(sigma),
            breakpoints=graded_breakpoints(0.0, sigma),
            density=lambda z: saddle_share_density(sigma, z))
        assert total == pytest.approx(1.0, abs=1e-10)
        assert b_hat(sigma) > 0

    def test_too_few_nodes(self):
        with pytest.raises(ValueError):
            quadrature(lambda x: x, 0, 1, 1)

    def test_graded_breakpoints(self):
        left = graded_breakpoints(0.0, 1.0, "left", levels=3)
        right = graded_breakpoints(0.0, 1.0, "right", levels=3)
        assert left.tolist() == [0.125, 0.25, 0.5]
        assert right.tolist() == [0.5, 0.75, 0.875]
