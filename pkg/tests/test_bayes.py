import math

import numpy as np
import pytest
from scipy import integrate

from robustprocure import bayes
from robustprocure.closedform import b_hat, bayes_transfer, sigma_ratio
from robustprocure.errors import DivergentWelfare
from robustprocure.model import ConstantShare, Linear, evaluate_cost
from robustprocure.numerics import best_response


class TestPowerPrior:
    def test_half_share_is_cost_free(self):
        ratio = bayes.expected_linear_ratio(0.5, bayes.PowerPrior(3.0, 1.0), ConstantShare(0.5))
        assert ratio == pytest.approx(0.5, abs=1e-12)

    def test_bayes_transfer_near_limit(self):
        prior = bayes.PowerPrior(1.05, 1e3)
        m = bayes_transfer(0.5, prior.alpha_exp, prior.c_bar)
        assert abs(bayes.expected_linear_ratio(0.5, prior, m) - 0.5) <= 0.05 * 0.5

    def test_divergent(self):
        with pytest.raises(DivergentWelfare):
            bayes.expected_linear_ratio(0.5, bayes.PowerPrior(0.9, 1.0), ConstantShare(0.5))

    @pytest.mark.parametrize("bad", [(0.0, 1.0), (1.0, 0.0)])
    def test_prior_invariants(self, bad):
        with pytest.raises(ValueError):
            bayes.PowerPrior(*bad)

    def test_participation_cutoff_is_support_max(self):
        m = bayes_transfer(0.4, 2.0, 7.0)
        assert bayes.participation_cutoff(0.4, m) == pytest.approx(7.0, rel=1e-12)

    @pytest.mark.parametrize("c", [0.05, 0.3, 0.9])
    def test_virtual_allocation_matches_indirect_mechanism(self, c):
        sigma, alpha, c_bar = 0.5, 2.0, 1.0
        m = bayes_transfer(sigma, alpha, c_bar)
        direct = bayes.virtual_allocation(sigma, alpha, c)
        assert best_response(sigma, m, Linear(c)) == pytest.approx(direct, rel=1e-6)

    def test_quadrature_against_adaptive_oracle(self):
        sigma, prior = 0.5, bayes.PowerPrior(2.0, 1.0)
        m = bayes_transfer(sigma, prior.alpha_exp, prior.c_bar)
        s = sigma / (1 - sigma)
        density = lambda c: prior.alpha_exp * c ** (prior.alpha_exp - 1) / prior.c_bar ** prior.alpha_exp

        def buyer(c):
            q = (m.z / c) ** (1 / (1 - sigma))
            if m.z * q ** sigma / sigma - m.intercept - c * q <= 0:
                return 0.0
            return ((1 - m.z) * q ** sigma / sigma + m.intercept) * density(c)

        U = integrate.quad(buyer, 0, prior.c_bar, epsabs=1e-13, limit=200)[0]
        W = integrate.quad(lambda c: (1 - sigma) / sigma * c ** -s * density(c), 0, prior.c_bar)[0]
        assert bayes.expected_linear_ratio(sigma, prior, m) == pytest.approx(U / W, rel=1e-8)


class TestSaddleFamily:
    def test_parameters(self):
        c = bayes.saddle_cost(0.5, 1.0)
        assert (c.q0, c.q1, c.kappa) == pytest.approx((0.0625, 0.25, 0.25))

    def test_best_response_endpoints(self):
        c = bayes.saddle_cost(0.5, 0.5)
        assert bayes.saddle_best_response(0.5, 1e-15, c) == pytest.approx(c.q0, rel=1e-9)
        assert bayes.saddle_best_response(0.5, 0.5, c) == pytest.approx(c.q1, rel=1e-12)
        assert bayes.saddle_best_response(0.5, 0.0, c) == 0.0

    @pytest.mark.parametrize("z", [0.1, 0.3, 0.45, 0.7])
    def test_best_response_matches_grid_search(self, z):
        c = bayes.saddle_cost(0.5, 0.5)
        analytic = float(bayes.saddle_best_response(0.5, z, c))
        assert best_response(0.5, ConstantShare(z), c) == pytest.approx(analytic, rel=1e-6)

    def test_convexity_on_dense_grid(self):
        c = bayes.saddle_cost(0.3, 0.8)
        q = np.linspace(0, 3 * c.q1, 10_000)
        v = evaluate_cost(c, 0.3, q)
        assert np.all(v[2:] - 2 * v[1:-1] + v[:-2] >= -1e-9)

    def test_family_prior_requires_theta(self):
        with pytest.raises(DivergentWelfare):
            bayes.SaddleFamilyPrior(0.5).require_finite_welfare(0.5)


class TestSaddleVerify:
    @pytest.mark.parametrize("sigma", [0.1, 0.5, 0.9])
    def test_passes(self, sigma):
        report = bayes.saddle_verify(sigma)
        assert report.passed and not report.failures
        assert report.to_dict()["checks"] == "pass"

    def test_more_nodes_at_high_sigma(self):
        assert bayes.saddle_verify(0.9, nodes=400).passed

    def test_logkinked_ratio_at_least_b_hat(self):
        for g in (0.01, 1.0, 100.0):
            assert bayes.saddle_ratio_logkinked(0.5, g) >= b_hat(0.5) - 1e-9

    def test_theta_limits(self):
        assert bayes.minmax_theta_ratio(0.5, 1.001) == pytest.approx(b_hat(0.5), abs=1e-3)
        assert bayes.minmax_theta_ratio(0.5, 2.0) > b_hat(0.5)
        s = 0.3 / 0.7
        assert bayes.minmax_theta_ratio(0.3, s * 1.0001) == pytest.approx(b_hat(0.3), abs=1e-3)

    def test_theta_ratio_monotone(self):
        values = [bayes.minmax_theta_ratio(0.5, t) for t in (1.01, 1.1, 1.5, 2.0, 5.0)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestBenchmark:
    @pytest.mark.parametrize("sigma", [0.2, 0.5])
    def test_value_is_b_hat(self, sigma):
        report = bayes.bayes_benchmark_check(sigma)
        assert report.passed
        assert abs(report.value - b_hat(sigma)) <= 1e-3

    def test_point_mass_on_linear_cost(self):
        z, ratio = bayes.point_mass_benchmark(0.5, Linear(2.0))
        # the objective inherits best-response noise, so only the ratio is sharp
        assert z == pytest.approx(0.5, abs=1e-4)
        assert ratio == pytest.approx(sigma_ratio(0.5), abs=1e-6)

    def test_theta_prior_matches_closed_form(self):
        # at the share sigma the scaled expected surplus has a closed form
        sigma, theta = 0.5, 2.0
        ratio = (bayes.theta_prior_share_surplus(sigma, theta, sigma)
                 / bayes._bayes_optimal_scaled(sigma, theta))
        s = sigma / (1 - sigma)
        L = 1 + math.log(1 - sigma) / sigma
        N = (sigma * (1 + theta) / theta - 1) * sigma ** s * L + (1 - sigma) / sigma * (theta / (1 + theta)) ** s
        assert ratio == pytest.approx((1 - sigma) * sigma ** (s - 1) / N, rel=1e-8)
