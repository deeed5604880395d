import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stopcert import (DiffusionSpec, DomainError, GridSpec, Interval, KinkError,
                      PayoffSpec, Problem, SchemaError, check_regularity,
                      generator_apply, scale_density, Expression)
from stopcert.diffusion import analytic_log_scale, log_scale_grid


def make_problem(process, g="x", discount=1.0, direction="l", **grid):
    return Problem(process=process, payoff=PayoffSpec(terminal=Expression(g)),
                   discount=discount, direction=direction,
                   grid=GridSpec(**grid) if grid else GridSpec())


class TestTypes:
    def test_interval_requires_order(self):
        with pytest.raises(SchemaError):
            Interval(2.0, 1.0)

    def test_gbm_tag_consistency_enforced(self):
        with pytest.raises(SchemaError):
            DiffusionSpec(drift=lambda x: 2 * x, diffusion=lambda x: 0.3 * x,
                          domain=Interval(0.0, math.inf),
                          catalog_tag=__import__("stopcert").GBM(0.1, 0.3))

    def test_kinks_must_ascend(self):
        with pytest.raises(SchemaError):
            PayoffSpec(terminal=lambda x: x, kinks=(2.0, 1.0))

    def test_kinks_must_be_interior(self):
        with pytest.raises(SchemaError):
            Problem(process=DiffusionSpec.gbm(0.1, 0.2),
                    payoff=PayoffSpec(terminal=Expression("x"), kinks=(-1.0,)),
                    discount=1.0, direction="l", grid=GridSpec())

    def test_discount_positive(self):
        with pytest.raises(SchemaError):
            make_problem(DiffusionSpec.gbm(0.1, 0.2), discount=0.0)

    def test_truncation_bounds_inside_domain(self):
        with pytest.raises(SchemaError):
            make_problem(DiffusionSpec.gbm(0.1, 0.2), lo=-1.0, hi=5.0)

    def test_default_window_and_normalization(self):
        prob = make_problem(DiffusionSpec.gbm(0.1, 0.2))
        lo, hi = prob.window()
        assert lo == pytest.approx(1.0 / 50)
        assert hi == pytest.approx(50.0)
        # geometric midpoint of the default window is the reference itself
        assert prob.normalization_point() == pytest.approx(1.0)

    def test_bm_window_uses_arithmetic_midpoint(self):
        prob = make_problem(DiffusionSpec.brownian(0.0, 1.0), lo=-3.0, hi=5.0)
        assert prob.normalization_point() == pytest.approx(1.0)

    def test_payoff_smoothness_probe_flags_hidden_corner(self):
        pay = PayoffSpec(terminal=lambda x: abs(x - 1.3))
        bad = pay.smoothness_report((0.5, 2.0), n_probe=201)
        assert any(abs(x - 1.3) < 0.02 for x, _, _ in bad)
        smooth = PayoffSpec(terminal=lambda x: x * x)
        assert smooth.smoothness_report((0.5, 2.0)) == []


class TestGenerator:
    def test_linear_payoff_kills_second_order_term(self):
        # GBM(0.05, 0.2), f(x) = x at x = 1: the drift alone survives
        prob = make_problem(DiffusionSpec.gbm(0.05, 0.2))
        assert generator_apply(prob, Expression("x"), 1.0) == pytest.approx(0.05)

    def test_power_payoff_matches_discounted_eigenvalue(self):
        # drift x/2, diffusion x, f = x^2: L f = 2 f = rho f with rho = 2
        prob = make_problem(DiffusionSpec.gbm(0.5, 1.0), discount=2.0)
        val = generator_apply(prob, Expression("x**2"), 1.0)
        assert val == pytest.approx(2.0, rel=1e-12)
        assert val == pytest.approx(prob.discount * 1.0 ** 2, rel=1e-12)

    def test_fundamental_solution_residual(self, gbm_numeric_problem):
        from stopcert import numeric_fundamental
        pair = numeric_fundamental(gbm_numeric_problem)
        f = pair.psi_differentiable()
        for x in [0.5, 1.0, 2.0, 5.0]:
            res = generator_apply(gbm_numeric_problem, f, x) \
                - gbm_numeric_problem.discount * pair.psi(x)
            assert abs(res) <= 1e-3 * max(1.0, pair.psi(x))

    def test_outside_interior_raises(self):
        prob = make_problem(DiffusionSpec.gbm(0.1, 0.2))
        with pytest.raises(DomainError):
            generator_apply(prob, Expression("x"), -1.0)

    def test_kink_raises(self):
        prob = Problem(process=DiffusionSpec.gbm(0.1, 0.2),
                       payoff=PayoffSpec(terminal=Expression("x"), kinks=(1.0,)),
                       discount=1.0, direction="l")
        with pytest.raises(KinkError):
            generator_apply(prob, prob.payoff.as_differentiable(), 1.0)

    @settings(max_examples=25, deadline=None)
    @given(c1=st.floats(-5, 5), c2=st.floats(-5, 5))
    def test_linearity(self, c1, c2):
        prob = make_problem(DiffusionSpec.gbm(0.07, 0.3), discount=1.0)
        f1, f2 = Expression("x**2 + x"), Expression("exp(-x) + 3*x")
        combo = Expression(f"{c1}*(x**2 + x) + {c2}*(exp(-x) + 3*x)")
        x = 1.7
        lhs = generator_apply(prob, combo, x)
        rhs = c1 * generator_apply(prob, f1, x) + c2 * generator_apply(prob, f2, x)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


class TestScaleDensity:
    def test_zero_drift_gives_one(self):
        prob = make_problem(DiffusionSpec.brownian(0.0, 1.3), lo=-4.0, hi=4.0)
        for x in [-2.0, 0.5, 3.0]:
            assert scale_density(prob, x) == pytest.approx(1.0)

    def test_gbm_closed_form(self):
        alpha, sigma = 0.05, 0.2
        prob = make_problem(DiffusionSpec.gbm(alpha, sigma), lo=0.1, hi=10.0)
        x0 = prob.normalization_point()
        for x in [0.3, 1.5, 7.0]:
            expect = (x / x0) ** (-2 * alpha / sigma ** 2)
            assert scale_density(prob, x) == pytest.approx(expect, rel=1e-8)

    def test_exp_bm_closed_form(self):
        # drift x/2, diffusion x, anchored at 1: S'(x) = 1/x
        prob = make_problem(DiffusionSpec.gbm(0.5, 1.0), lo=0.1, hi=10.0)
        x0 = prob.normalization_point()
        for x in [0.2, 2.0, 9.0]:
            assert scale_density(prob, x) == pytest.approx(x0 / x, rel=1e-8)

    def test_anchor_value_is_one(self):
        prob = make_problem(DiffusionSpec.gbm(0.05, 0.2), lo=0.1, hi=10.0)
        assert scale_density(prob, prob.normalization_point()) == 1.0

    def test_log_derivative_property(self):
        # d/dx log S' = -2a/sigma^2, checked by central differences
        prob = make_problem(DiffusionSpec.gbm(0.04, 0.3), lo=0.5, hi=2.0,
                            n_points=2001)
        xs = prob.grid_points()
        logs = log_scale_grid(prob, xs)
        dx = xs[1] - xs[0]
        d_num = (logs[2:] - logs[:-2]) / (2 * dx)
        expect = -2 * 0.04 * xs[1:-1] / (0.3 * xs[1:-1]) ** 2
        rel = np.abs(d_num - expect) / np.abs(expect)
        assert rel.max() <= 1e-6

    def test_analytic_log_scale_matches_quadrature(self):
        prob = make_problem(DiffusionSpec.gbm(0.05, 0.2), lo=0.1, hi=10.0)
        fn = analytic_log_scale(prob)
        assert fn is not None
        for x in [0.4, 2.2]:
            assert math.exp(fn(x)) == pytest.approx(scale_density(prob, x), rel=1e-9)


class TestRegularity:
    def test_gbm_passes_everywhere(self):
        prob = make_problem(DiffusionSpec.gbm(0.05, 0.2), lo=0.1, hi=10.0,
                            n_points=201)
        report = check_regularity(prob)
        assert report.overall_pass
        assert report.point_pass.all()

    def test_vanishing_diffusion_fails_near_the_zero(self):
        proc = DiffusionSpec.from_functions(
            drift=lambda x: 0.0, diffusion=lambda x: abs(x - 1.0),
            domain=Interval(0.0, 2.0))
        prob = make_problem(proc, lo=0.5, hi=1.5, n_points=101)
        report = check_regularity(prob)
        assert not report.overall_pass
        worst_x, worst_v = report.worst()
        assert abs(worst_x - 1.0) < 0.05
        assert not math.isfinite(worst_v) or worst_v > 1e8

    def test_constant_coefficients_pass(self):
        prob = make_problem(DiffusionSpec.brownian(0.3, 1.1), lo=-3.0, hi=3.0,
                            n_points=101)
        assert check_regularity(prob).overall_pass


class TestScaleDensityFailure:
    def test_vanishing_diffusion_raises(self):
        from stopcert import NumericalError
        proc = DiffusionSpec.from_functions(
            drift=lambda x: 1.0, diffusion=lambda x: abs(x - 1.0),
            domain=Interval(0.0, 2.0))
        prob = make_problem(proc, lo=0.5, hi=1.5, n_points=51)
        with pytest.raises(NumericalError):
            scale_density(prob, 1.4, anchor=0.6)
