import numpy as np
import pytest

from stopcert import Expression, KinkError, SchemaError
from stopcert.expressions import Differentiable, as_differentiable, fd_central, fd_one_sided


class TestExpression:
    def test_parse_and_evaluate(self):
        e = Expression("(x-1)**3 + x**4")
        assert e(2.0) == pytest.approx(17.0)
        out = e(np.array([1.0, 2.0]))
        assert out.shape == (2,) and out[1] == pytest.approx(17.0)

    def test_constant_broadcasts(self):
        e = Expression("3.5")
        assert e(2.0) == 3.5
        assert np.all(e(np.zeros(4)) == 3.5)

    def test_exact_derivatives_of_any_order(self):
        e = Expression("x**5")
        assert e.deriv(3)(2.0) == pytest.approx(60 * 4.0)
        assert e.deriv(5)(1.7) == pytest.approx(120.0)
        assert e.deriv(6)(1.7) == 0.0

    def test_parameter_substitution(self):
        e = Expression("a*x + b", params={"a": 2.0, "b": -1.0})
        assert e(3.0) == pytest.approx(5.0)

    def test_unknown_symbol_rejected(self):
        with pytest.raises(SchemaError):
            Expression("x + y")

    def test_garbage_rejected(self):
        with pytest.raises(SchemaError):
            Expression("import os")

    def test_piecewise_max(self):
        e = Expression("Max(x - 1, 0)")
        assert e(0.5) == 0.0 and e(3.0) == 2.0


class TestFiniteDifferences:
    def test_first_derivative_accuracy(self):
        f = lambda x: np.sin(x) + x ** 3
        assert fd_central(f, 0.7, 1) == pytest.approx(np.cos(0.7) + 3 * 0.49,
                                                      rel=1e-9)

    def test_second_derivative_accuracy(self):
        f = lambda x: np.exp(0.5 * x)
        assert fd_central(f, 1.0, 2) == pytest.approx(0.25 * np.exp(0.5), rel=1e-6)

    def test_higher_order(self):
        f = lambda x: x ** 4
        assert fd_central(f, 1.3, 3) == pytest.approx(24 * 1.3, rel=1e-4)

    def test_one_sided_at_a_corner(self):
        f = lambda x: abs(x - 2.0)
        assert fd_one_sided(f, 2.0, +1) == pytest.approx(1.0, abs=1e-8)
        assert fd_one_sided(f, 2.0, -1) == pytest.approx(-1.0, abs=1e-8)


class TestDifferentiable:
    def test_kink_blocks_two_sided(self):
        d = Differentiable(lambda x: abs(x - 1.0), kinks=(1.0,))
        with pytest.raises(KinkError):
            d.deriv(1.0, 1)
        assert d.deriv(1.0, 1, side=+1) == pytest.approx(1.0, abs=1e-8)
        assert d.deriv(1.0, 1, side=-1) == pytest.approx(-1.0, abs=1e-8)

    def test_oracle_preferred_over_differences(self):
        calls = []
        def d1(x):
            calls.append(x)
            return 7.0
        d = Differentiable(lambda x: x, derivs=(d1,))
        assert d.deriv(3.0, 1) == 7.0
        assert calls == [3.0]

    def test_as_differentiable_accepts_expression(self):
        d = as_differentiable(Expression("x**2"))
        assert d.deriv(3.0, 2) == pytest.approx(2.0)
