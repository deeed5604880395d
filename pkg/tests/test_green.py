import numpy as np
import pytest

from stopcert import (DiffusionSpec, GreenDivergence, GridSpec, HypothesisFailed,
                      PayoffSpec, Problem, analytic_fundamental, beta_roots,
                      green_decompose, maximize_h, numeric_fundamental,
                      reduce_integral_problem, verify_integral_optimality,
                      gbm_abandonment_threshold, Expression)


def abandonment_problem(alpha=-0.05, sigma=0.25, rho=0.06, c=1.0, L=2.0, n=2001):
    return Problem(process=DiffusionSpec.gbm(alpha, sigma),
                   payoff=PayoffSpec(terminal=Expression(f"-({L})"),
                                     flow=Expression(f"x - ({c})")),
                   discount=rho, direction="r",
                   grid=GridSpec(n_points=n, reference=c))


@pytest.fixture(scope="module")
def abandon_setup():
    prob = abandonment_problem()
    pair = analytic_fundamental(prob)
    dec = green_decompose(prob, pair)
    return prob, pair, dec


class TestDecompose:
    def test_gbm_closed_form(self, abandon_setup):
        prob, pair, dec = abandon_setup
        alpha, rho, c = -0.05, 0.06, 1.0
        expect = dec.x / (rho - alpha) - c / rho
        rel = np.abs(dec.R_values - expect) / np.maximum(1.0, np.abs(expect))
        assert rel.max() <= 1e-4

    def test_zero_flow(self):
        prob = abandonment_problem(n=501)
        prob = Problem(process=prob.process,
                       payoff=PayoffSpec(terminal=Expression("-2"),
                                         flow=Expression("0*x")),
                       discount=0.06, direction="r", grid=prob.grid)
        dec = green_decompose(prob, analytic_fundamental(prob))
        assert np.max(np.abs(dec.R_values)) == 0.0
        assert np.max(np.abs(dec.I1_values)) == 0.0
        assert np.max(np.abs(dec.I2_values)) == 0.0

    def test_constant_flow_is_perpetuity(self):
        # E int c e^{-rho t} dt = c / rho independently of the process
        for proc, win in [(DiffusionSpec.gbm(-0.05, 0.25), GridSpec(501, reference=1.0)),
                          (DiffusionSpec.brownian(0.2, 0.9), GridSpec(501, -6.0, 8.0))]:
            prob = Problem(process=proc,
                           payoff=PayoffSpec(terminal=Expression("-1"),
                                             flow=Expression("0*x + 0.42")),
                           discount=0.06, direction="r", grid=win)
            dec = green_decompose(prob, analytic_fundamental(prob))
            assert np.max(np.abs(dec.R_values - 0.42 / 0.06)) <= 1e-4 * (0.42 / 0.06)

    def test_representation_identity_on_grid(self, abandon_setup):
        prob, pair, dec = abandon_setup
        recon = (pair.phi_values * dec.I1_values
                 + pair.psi_values * dec.I2_values) / dec.B
        assert np.allclose(recon, dec.R_values, rtol=0, atol=1e-12 * np.abs(dec.R_values).max())

    def test_resolvent_residual_analytic(self, abandon_setup):
        prob, pair, dec = abandon_setup
        scale = np.maximum(1.0, np.abs(dec.R_values[1:-1]))
        fd = np.abs(dec.resolvent_residual("fd")) / scale
        rep = np.abs(dec.resolvent_residual("representation")) / scale
        assert fd.max() <= 1e-4
        assert rep.max() <= 1e-6

    def test_resolvent_residual_numeric_pair(self):
        prob = abandonment_problem(n=2001)
        prob = prob.with_grid(lo=0.1, hi=10.0)
        pair = numeric_fundamental(prob)
        dec = green_decompose(prob, pair)
        scale = np.maximum(1.0, np.abs(dec.R_values[1:-1]))
        res = np.abs(dec.resolvent_residual("fd")) / scale
        assert res.max() <= 1e-3

    def test_tail_diagnostics_recorded(self, abandon_setup):
        _, _, dec = abandon_setup
        assert {t.side for t in dec.tails} == {"lower", "upper"}
        assert all(t.converged for t in dec.tails)
        assert all(len(t.chunks) >= 1 for t in dec.tails)

    def test_divergent_flow_detected(self):
        # flow growing like x^4 outruns phi y^{beta-} H: the upper tail diverges
        prob = Problem(process=DiffusionSpec.gbm(-0.05, 0.25),
                       payoff=PayoffSpec(terminal=Expression("-1"),
                                         flow=Expression("x**4")),
                       discount=0.06, direction="r",
                       grid=GridSpec(n_points=301, reference=1.0))
        with pytest.raises(GreenDivergence):
            green_decompose(prob, analytic_fundamental(prob))

    def test_csv_header(self, abandon_setup):
        _, _, dec = abandon_setup
        text = dec.csv_text()
        assert text.startswith("x,R,I1,I2,residual\n")
        assert len(text.strip().split("\n")) == 1 + len(dec.x)


class TestReduce:
    def test_zero_flow_reduces_to_original(self):
        prob = abandonment_problem(n=501)
        prob = Problem(process=prob.process,
                       payoff=PayoffSpec(terminal=Expression("5 - x"),
                                         flow=Expression("0*x")),
                       discount=0.06, direction="r", grid=prob.grid)
        red = reduce_integral_problem(prob, analytic_fundamental(prob))
        xs = prob.grid_points()
        g_red = np.array([red.problem.payoff.terminal(float(x)) for x in xs[::50]])
        g_orig = 5.0 - xs[::50]
        assert np.allclose(g_red, g_orig, rtol=0, atol=1e-12)

    def test_reduced_payoff_for_abandonment(self, abandon_setup):
        prob, pair, dec = abandon_setup
        red = reduce_integral_problem(prob, pair, dec)
        x = 0.8
        expect = -2.0 - float(dec.R(x))
        assert red.problem.payoff.terminal(x) == pytest.approx(expect, rel=1e-12)
        # total value reconstructs as R(x) + reduced value
        assert red.total_value(x, 1.5) == pytest.approx(float(dec.R(x)) + 1.5)

    def test_reduced_solution_matches_closed_form(self, abandon_setup):
        prob, pair, dec = abandon_setup
        red = reduce_integral_problem(prob, pair, dec)
        sol = maximize_h(red.problem, pair)
        expect = gbm_abandonment_threshold(-0.05, 0.25, 0.06, 1.0, 2.0)
        assert sol.p_star == pytest.approx(expect, rel=1e-8)


class TestVerify:
    def test_certificate_passes_at_the_optimum(self, abandon_setup):
        prob, pair, dec = abandon_setup
        sol = maximize_h(reduce_integral_problem(prob, pair, dec).problem, pair)
        cert = verify_integral_optimality(prob, dec, sol.p_star)
        assert cert.passed()
        # the first-order identity specializes to I2(p*) S'(p*) = L phi'(p*)
        sp = float(dec.sprime(sol.p_star))
        lhs = float(dec.I2(sol.p_star)) * sp
        rhs = 2.0 * pair.dphi(sol.p_star)
        assert lhs == pytest.approx(rhs, rel=1e-8)

    def test_upper_integral_negative_at_certified_optimum(self, abandon_setup):
        prob, pair, dec = abandon_setup
        sol = maximize_h(reduce_integral_problem(prob, pair, dec).problem, pair)
        assert float(dec.I2(sol.p_star)) < 0.0

    def test_wrong_threshold_fails_first_order_identity(self, abandon_setup):
        prob, pair, dec = abandon_setup
        cert = verify_integral_optimality(prob, dec, 0.9)
        assert not cert.first_order_condition.passed
        assert not cert.passed()

    def test_hypothesis_violation_raises(self):
        # terminal above the flow value somewhere below p*: g0 >= R fails
        prob = abandonment_problem(L=0.0)
        prob = Problem(process=prob.process,
                       payoff=PayoffSpec(terminal=Expression("0*x - 40"),
                                         flow=Expression("x - 1.0")),
                       discount=0.06, direction="r", grid=prob.grid)
        pair = analytic_fundamental(prob)
        dec = green_decompose(prob, pair)
        with pytest.raises(HypothesisFailed):
            verify_integral_optimality(prob, dec, 0.9)

    def test_threshold_monotone_in_salvage_and_volatility(self):
        # closed form: p* decreasing in L and decreasing in sigma
        base = dict(alpha=-0.04, sigma=0.3, rho=0.05, c=1.5)
        ps_L = [gbm_abandonment_threshold(base["alpha"], base["sigma"], base["rho"],
                                          base["c"], L) for L in np.linspace(0, 10, 8)]
        assert all(a > b for a, b in zip(ps_L, ps_L[1:]))
        ps_s = [gbm_abandonment_threshold(base["alpha"], s, base["rho"],
                                          base["c"], 2.0)
                for s in np.geomspace(0.1, 0.9, 8)]
        assert all(a > b for a, b in zip(ps_s, ps_s[1:]))
