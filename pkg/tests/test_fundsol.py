import math

import numpy as np
import pytest

from stopcert import (DiffusionSpec, GridSpec, NotInCatalog, PayoffSpec, Problem,
                      Source, analytic_fundamental, beta_roots, bm_exponents,
                      fundamental_pair, numeric_fundamental, Expression)
from stopcert.diffusion import Interval


def _problem(process, rho, lo=None, hi=None, n=2001):
    return Problem(process=process, payoff=PayoffSpec(terminal=Expression("x")),
                   discount=rho, direction="l",
                   grid=GridSpec(n_points=n, lo=lo, hi=hi))


class TestBetaRoots:
    def test_exp_bm_case_gives_the_power(self):
        # drift x/2, diffusion x, rho = d^2/2 with d = 2
        bp, bm = beta_roots(0.5, 1.0, 2.0)
        assert bp == pytest.approx(2.0, rel=1e-14)
        assert bm == pytest.approx(-2.0, rel=1e-14)

    def test_quadratic_formula_oracle(self):
        # beta (beta - 1) = 1: golden-ratio roots
        bp, bm = beta_roots(0.0, math.sqrt(2.0), 1.0)
        assert bp == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-14)
        assert bm == pytest.approx((1 - math.sqrt(5)) / 2, rel=1e-14)

    def test_discount_above_drift_forces_root_above_one(self):
        bp, _ = beta_roots(0.03, 0.2, 0.06)
        assert bp > 1.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            beta_roots(0.1, 0.0, 0.1)
        with pytest.raises(ValueError):
            beta_roots(0.1, 0.2, -0.1)


class TestAnalyticPair:
    def test_exp_bm_power_solution(self):
        prob = _problem(DiffusionSpec.gbm(0.5, 1.0), rho=2.0)
        pair = analytic_fundamental(prob)
        xs = pair.x
        x0 = pair.normalization_point
        assert np.allclose(pair.psi_values, (xs / x0) ** 2, rtol=1e-14)
        assert pair.source == Source.ANALYTIC

    def test_normalization_is_exact(self):
        for proc, rho, win in [(DiffusionSpec.gbm(0.05, 0.2), 0.1, (0.1, 10.0)),
                               (DiffusionSpec.brownian(0.4, 1.0), 0.5, (-4.0, 6.0))]:
            prob = _problem(proc, rho, *win)
            pair = analytic_fundamental(prob)
            x0 = pair.normalization_point
            assert pair.psi(x0) == pytest.approx(1.0, rel=1e-14)
            assert pair.phi(x0) == pytest.approx(1.0, rel=1e-14)

    def test_wronskian_constant_on_grid(self):
        prob = _problem(DiffusionSpec.gbm(0.05, 0.2), 0.1, 0.1, 10.0)
        pair = analytic_fundamental(prob)
        series = pair.wronskian_series(prob)
        # symbolic-differentiation oracle at five sample points
        bp, bm = beta_roots(0.05, 0.2, 0.1)
        x0 = pair.normalization_point
        for x in np.linspace(0.2, 9.0, 5):
            num = (bp * (x / x0) ** bp / x) * (x / x0) ** bm \
                - (x / x0) ** bp * (bm * (x / x0) ** bm / x)
            sprime = (x / x0) ** (-2 * 0.05 / 0.04)
            assert num / sprime == pytest.approx(pair.wronskian_B, rel=1e-10)
        assert np.max(np.abs(series / np.median(series) - 1.0)) <= 1e-10

    def test_residuals_analytic(self):
        prob = _problem(DiffusionSpec.gbm(0.05, 0.2), 0.1, 0.1, 10.0)
        pair = analytic_fundamental(prob)
        rp, rf = pair.residuals(prob)
        scale_p = np.maximum(1.0, pair.psi_values[1:-1])
        scale_f = np.maximum(1.0, pair.phi_values[1:-1])
        assert np.max(rp / scale_p) <= 1e-6
        assert np.max(rf / scale_f) <= 1e-6

    def test_not_in_catalog(self):
        proc = DiffusionSpec.from_functions(lambda x: -x, lambda x: 1.0 + 0 * x,
                                            Interval(-math.inf, math.inf))
        with pytest.raises(NotInCatalog):
            analytic_fundamental(_problem(proc, 1.0, -3.0, 3.0))


class TestNumericPair:
    def test_gbm_matches_analytic(self, gbm_numeric_problem):
        ana = analytic_fundamental(gbm_numeric_problem)
        num = numeric_fundamental(gbm_numeric_problem)
        assert np.max(np.abs(num.psi_values / ana.psi_values - 1.0)) <= 1e-4
        assert np.max(np.abs(num.phi_values / ana.phi_values - 1.0)) <= 1e-4
        assert num.source == Source.NUMERIC

    def test_bm_matches_analytic(self, bm_problem):
        ana = analytic_fundamental(bm_problem)
        num = numeric_fundamental(bm_problem)
        gp, gm = bm_exponents(0.0, math.sqrt(2.0), 1.0)
        assert gp == pytest.approx(1.0, rel=1e-12)
        assert np.max(np.abs(num.psi_values / ana.psi_values - 1.0)) <= 1e-4
        assert np.max(np.abs(num.phi_values / ana.phi_values - 1.0)) <= 1e-4

    def test_wronskian_constancy(self, gbm_numeric_problem, bm_problem):
        for prob in (gbm_numeric_problem, bm_problem):
            pair = numeric_fundamental(prob)
            series = pair.wronskian_series(prob)
            assert pair.wronskian_B > 0
            assert np.max(np.abs(series / pair.wronskian_B - 1.0)) <= 1e-5

    def test_residuals_numeric(self, gbm_numeric_problem):
        pair = numeric_fundamental(gbm_numeric_problem)
        rp, rf = pair.residuals(gbm_numeric_problem)
        scale_p = np.maximum(1.0, pair.psi_values[1:-1])
        scale_f = np.maximum(1.0, pair.phi_values[1:-1])
        assert np.max(rp / scale_p) <= 1e-3
        assert np.max(rf / scale_f) <= 1e-3

    def test_monotone_and_positive(self, gbm_numeric_problem):
        pair = numeric_fundamental(gbm_numeric_problem)
        assert (pair.psi_values > 0).all() and (np.diff(pair.psi_values) > 0).all()
        assert (pair.phi_values > 0).all() and (np.diff(pair.phi_values) < 0).all()

    def test_dispatcher(self, gbm_numeric_problem):
        assert fundamental_pair(gbm_numeric_problem).source == Source.ANALYTIC
        assert fundamental_pair(gbm_numeric_problem,
                                source="numeric").source == Source.NUMERIC


class TestCsvDump:
    def test_fixed_header_and_width(self, gbm_numeric_problem):
        pair = analytic_fundamental(gbm_numeric_problem)
        text = pair.csv_text(gbm_numeric_problem)
        lines = text.strip().split("\n")
        assert lines[0] == "x,psi,dpsi,phi,dphi,residual_psi,residual_phi"
        assert len(lines) == 1 + len(pair.x)
        cell = lines[1].split(",")[1]
        assert float(cell) == pair.psi_values[0]

    def test_byte_stable(self, gbm_numeric_problem):
        pair = analytic_fundamental(gbm_numeric_problem)
        assert pair.csv_text(gbm_numeric_problem) == pair.csv_text(gbm_numeric_problem)
