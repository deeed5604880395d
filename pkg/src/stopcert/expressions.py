"""Function descriptors: parsed expressions, derivative oracles, finite differences.

Coefficients and payoffs enter the library either as plain callables, as
:class:`Expression` objects parsed from a restricted text form (used by the
problem-file loader), or as catalog tags handled in :mod:`stopcert.diffusion`.
Expressions carry exact derivatives of every order; bare callables fall back
to finite differences.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np
import sympy

from .errors import KinkError, SchemaError

X = sympy.Symbol("x", real=True)

_ALLOWED_LOCALS = {
    "x": X,
    "exp": sympy.exp,
    "log": sympy.log,
    "ln": sympy.log,
    "sqrt": sympy.sqrt,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "tan": sympy.tan,
    "sinh": sympy.sinh,
    "cosh": sympy.cosh,
    "tanh": sympy.tanh,
    "abs": sympy.Abs,
    "Abs": sympy.Abs,
    "max": sympy.Max,
    "Max": sympy.Max,
    "min": sympy.Min,
    "Min": sympy.Min,
    "pi": sympy.pi,
    "E": sympy.E,
}


def eval_array(f: Callable, xs: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` on an array, tolerating scalar-only callables."""
    xs = np.asarray(xs, dtype=float)
    try:
        out = np.asarray(f(xs), dtype=float)
    except (TypeError, ValueError):
        return np.array([float(f(float(x))) for x in np.atleast_1d(xs)], dtype=float)
    if out.shape != xs.shape:
        out = np.broadcast_to(out, xs.shape).astype(float)
    return out


class Expression:
    """A univariate function of ``x`` parsed from text or built from sympy.

    Supports exact differentiation to any order; evaluation is numpy-backed.
    """

    def __init__(self, source, params: Optional[dict] = None):
        if isinstance(source, sympy.Expr):
            expr = source
        else:
            try:
                expr = sympy.parse_expr(str(source), local_dict=dict(_ALLOWED_LOCALS))
            except (sympy.SympifyError, SyntaxError, TypeError) as exc:
                raise SchemaError(f"cannot parse expression {source!r}: {exc}") from exc
        if params:
            expr = expr.subs({sympy.Symbol(k, real=True): v for k, v in params.items()})
            expr = expr.subs({sympy.Symbol(k): v for k, v in params.items()})
        extra = expr.free_symbols - {X}
        if extra:
            raise SchemaError(
                f"expression {source!r} has unknown symbols {sorted(map(str, extra))}"
            )
        self.sympy_expr = expr
        self._fn = sympy.lambdify(X, expr, modules=["numpy"])
        self._derivs: dict[int, Expression] = {}

    def __call__(self, x):
        if np.isscalar(x) or np.asarray(x).ndim == 0:
            return float(self._fn(float(x)))
        xs = np.asarray(x, dtype=float)
        out = np.asarray(self._fn(xs), dtype=float)
        if out.shape != xs.shape:
            out = np.broadcast_to(out, xs.shape).astype(float)
        return out

    def deriv(self, order: int = 1) -> "Expression":
        if order <= 0:
            return self
        if order not in self._derivs:
            self._derivs[order] = Expression(sympy.diff(self.sympy_expr, X, order))
        return self._derivs[order]

    def __repr__(self):
        return f"Expression({self.sympy_expr})"


# --------------------------------------------------------------------------- #
# Finite differences
# --------------------------------------------------------------------------- #

def _fd_step(x: float, order: int) -> float:
    # First derivatives use the contract step; higher orders need wider
    # stencils to stay above rounding noise.
    base = {1: 1e-6, 2: 1e-4}.get(order, 2e-2)
    return max(base, base * abs(x))


def fd_central(f: Callable, x: float, order: int = 1, h: Optional[float] = None) -> float:
    """Central finite difference of given order (1 or 2 use 5-point stencils)."""
    if h is None:
        h = _fd_step(x, order)
    if order == 1:
        return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)
    if order == 2:
        return (
            -f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)
        ) / (12 * h * h)
    # Order n >= 3: n-th difference of the binomial stencil, O(h^2),
    # with one Richardson step to push it to O(h^4).
    def dn(step):
        acc = 0.0
        for k in range(order + 1):
            acc += (-1) ** k * math.comb(order, k) * f(x + (order / 2 - k) * step)
        return acc / step**order

    d_h, d_h2 = dn(h), dn(h / 2)
    return (4 * d_h2 - d_h) / 3


def fd_one_sided(f: Callable, x: float, side: int, order: int = 1,
                 h: Optional[float] = None) -> float:
    """One-sided derivative limit; ``side`` +1 from the right, -1 from the left."""
    if side not in (-1, 1):
        raise ValueError("side must be +1 or -1")
    if h is None:
        h = _fd_step(x, order)
    s = side * h
    if order == 1:
        # 5-point one-sided stencil, O(h^4)
        return (
            -25 * f(x) + 48 * f(x + s) - 36 * f(x + 2 * s)
            + 16 * f(x + 3 * s) - 3 * f(x + 4 * s)
        ) / (12 * s)
    if order == 2:
        # 4-point one-sided stencil, O(h^2)
        return (2 * f(x) - 5 * f(x + s) + 4 * f(x + 2 * s) - f(x + 3 * s)) / (h * h)
    raise ValueError("one-sided differences supported for orders 1 and 2 only")


class Differentiable:
    """A function bundled with the best available derivative access.

    ``derivs`` may list analytic derivative callables in increasing order;
    an attached :class:`Expression` supplies all orders exactly.  Without
    either, finite differences are used.  Declared kinks force one-sided
    evaluation; a two-sided request exactly at a kink raises KinkError.
    """

    def __init__(self, fn: Callable, derivs: Optional[Sequence[Callable]] = None,
                 expr: Optional[Expression] = None, kinks: Sequence[float] = ()):
        if expr is None and isinstance(fn, Expression):
            expr = fn
        self.fn = fn
        self.expr = expr
        self.derivs = tuple(derivs) if derivs else ()
        self.kinks = tuple(sorted(float(k) for k in kinks))

    def __call__(self, x):
        return self.fn(x)

    def is_kink(self, x: float, tol: float = 1e-12) -> bool:
        return any(abs(x - k) <= tol * max(1.0, abs(k)) for k in self.kinks)

    def max_analytic_order(self) -> int:
        if self.expr is not None:
            return 10**9
        return len(self.derivs)

    def deriv(self, x: float, order: int = 1, side: int = 0) -> float:
        """Derivative of given order; ``side`` 0 two-sided, +-1 one-sided limit."""
        at_kink = self.is_kink(x)
        if side == 0:
            if at_kink:
                raise KinkError(f"two-sided derivative requested at declared kink x={x}")
            if self.expr is not None:
                return float(self.expr.deriv(order)(x))
            if order <= len(self.derivs):
                return float(self.derivs[order - 1](x))
            return fd_central(self.fn, x, order)
        if not at_kink:
            return self.deriv(x, order=order, side=0)
        if order > 2:
            raise KinkError(f"one-sided order-{order} derivative unavailable at kink x={x}")
        return fd_one_sided(self.fn, x, side, order=order)


def as_differentiable(obj, kinks: Sequence[float] = ()) -> Differentiable:
    if isinstance(obj, Differentiable):
        return obj
    if isinstance(obj, Expression):
        return Differentiable(obj, expr=obj, kinks=kinks)
    if callable(obj):
        return Differentiable(obj, kinks=kinks)
    raise TypeError(f"cannot treat {obj!r} as a differentiable function")
