"""State process, payoff and problem types plus generator-level operations.

A :class:`Problem` bundles a one-dimensional diffusion on an interval, a payoff,
a discount rate and a threshold direction.  All values are immutable after
construction and safe to share across threads; every operation here is a pure
function of its arguments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericalError, SchemaError
from .expressions import Differentiable, Expression, as_differentiable, eval_array

INF = float("inf")


# --------------------------------------------------------------------------- #
# Catalog tags
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class GBM:
    """Geometric Brownian motion: drift alpha*x, diffusion sigma*x on (0, inf)."""
    alpha: float
    sigma: float


@dataclass(frozen=True)
class ArithmeticBM:
    """Arithmetic Brownian motion: constant drift and volatility on the line."""
    drift: float
    sigma: float


# --------------------------------------------------------------------------- #
# Domain types
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Interval:
    """State interval with extended-real endpoints; interior must be nonempty."""
    l: float = -INF
    r: float = INF
    l_included: bool = False
    r_included: bool = False

    def __post_init__(self):
        if not self.l < self.r:
            raise SchemaError(f"interval requires l < r, got [{self.l}, {self.r}]")

    def contains_interior(self, x: float) -> bool:
        return self.l < x < self.r


@dataclass(frozen=True)
class DiffusionSpec:
    """Drift ``a(x)`` and diffusion ``sigma(x) > 0`` on an interval.

    ``catalog_tag`` marks processes with known closed-form fundamental
    solutions; the tag must be consistent with the supplied coefficients.
    """
    drift: Callable[[float], float]
    diffusion: Callable[[float], float]
    domain: Interval
    catalog_tag: Optional[object] = None

    def __post_init__(self):
        tag = self.catalog_tag
        if tag is None:
            return
        if isinstance(tag, GBM):
            probes = [0.5, 1.0, 3.0]
            for t in probes:
                if abs(self.drift(t) - tag.alpha * t) > 1e-12 * max(1, abs(tag.alpha * t)):
                    raise SchemaError(f"GBM tag inconsistent with drift at x={t}")
                if abs(self.diffusion(t) - tag.sigma * t) > 1e-12 * abs(tag.sigma * t):
                    raise SchemaError(f"GBM tag inconsistent with diffusion at x={t}")
        elif isinstance(tag, ArithmeticBM):
            for t in [-1.0, 0.0, 2.0]:
                if abs(self.drift(t) - tag.drift) > 1e-12 * max(1, abs(tag.drift)):
                    raise SchemaError(f"BM tag inconsistent with drift at x={t}")
                if abs(self.diffusion(t) - tag.sigma) > 1e-12 * abs(tag.sigma):
                    raise SchemaError(f"BM tag inconsistent with diffusion at x={t}")
        else:
            raise SchemaError(f"unknown catalog tag {tag!r}")

    @classmethod
    def gbm(cls, alpha: float, sigma: float) -> "DiffusionSpec":
        if sigma <= 0:
            raise SchemaError("GBM requires sigma > 0")
        from .expressions import X
        return cls(
            drift=Expression(alpha * X),
            diffusion=Expression(sigma * X),
            domain=Interval(0.0, INF),
            catalog_tag=GBM(float(alpha), float(sigma)),
        )

    @classmethod
    def brownian(cls, drift: float, sigma: float) -> "DiffusionSpec":
        if sigma <= 0:
            raise SchemaError("arithmetic BM requires sigma > 0")
        from .expressions import X
        return cls(
            drift=Expression(drift + 0 * X),
            diffusion=Expression(sigma + 0 * X),
            domain=Interval(-INF, INF),
            catalog_tag=ArithmeticBM(float(drift), float(sigma)),
        )

    @classmethod
    def from_functions(cls, drift, diffusion, domain: Interval) -> "DiffusionSpec":
        return cls(drift=drift, diffusion=diffusion, domain=domain, catalog_tag=None)


@dataclass(frozen=True)
class PayoffSpec:
    """Terminal payoff ``g`` (or ``g0`` when a flow part is present).

    ``kinks`` lists the interior points where g' may jump; between kinks the
    payoff is assumed C^1.  ``derivative_oracle`` overrides finite differences.
    """
    terminal: Callable[[float], float]
    flow: Optional[Callable[[float], float]] = None
    kinks: Tuple[float, ...] = ()
    derivative_oracle: Optional[Sequence[Callable]] = None

    def __post_init__(self):
        ks = tuple(float(k) for k in self.kinks)
        if list(ks) != sorted(set(ks)):
            raise SchemaError("kinks must be strictly ascending")
        object.__setattr__(self, "kinks", ks)

    def as_differentiable(self) -> Differentiable:
        expr = self.terminal if isinstance(self.terminal, Expression) else None
        return Differentiable(self.terminal, derivs=self.derivative_oracle,
                              expr=expr, kinks=self.kinks)

    def smoothness_report(self, window: Tuple[float, float], n_probe: int = 201,
                          tol: float = 1e-4):
        """Screen for slope jumps between declared kinks (g should be C^1 there).

        Consecutive-slope differences of a C^1 function shrink with the probe
        spacing while a kink contributes its full jump, so jumps show up as
        outliers against the median slope variation.
        """
        lo, hi = window
        xs = np.linspace(lo, hi, n_probe)
        g = eval_array(self.terminal, xs)
        slopes = np.diff(g) / np.diff(xs)
        jumps = np.abs(np.diff(slopes))
        mids = xs[1:-1]
        keep = np.ones(len(mids), dtype=bool)
        for k in self.kinks:
            keep &= np.abs(mids - k) > 1.5 * (xs[1] - xs[0])
        if not keep.any():
            return []
        floor = max(20.0 * float(np.median(jumps[keep])),
                    tol * (1.0 + float(np.max(np.abs(slopes)))))
        bad = []
        for i in np.flatnonzero(keep):
            if jumps[i] > floor:
                bad.append((float(mids[i]), float(slopes[i]), float(slopes[i + 1])))
        return bad


@dataclass(frozen=True)
class GridSpec:
    """Working grid: point count plus optional truncation bounds."""
    n_points: int = 2001
    lo: Optional[float] = None
    hi: Optional[float] = None
    reference: Optional[float] = None   # window centring state, defaults to 1.0

    def __post_init__(self):
        if self.n_points < 9:
            raise SchemaError("grid needs at least 9 points")


class Direction(str, Enum):
    """Threshold side: 'l' stops on upcrossing, 'r' stops on downcrossing."""
    L = "l"
    R = "r"


# Window truncation: infinite endpoints are cut at quantile-style bounds
# [ref/50, 50*ref] on positive domains, additive half-width 24.5*max(1,|ref|)
# on domains reaching below zero.
_WINDOW_RATIO = 50.0


def _resolve_window(domain: Interval, grid: GridSpec) -> Tuple[float, float]:
    lo, hi = grid.lo, grid.hi
    if lo is not None and hi is not None:
        if not (domain.l < lo < hi < domain.r):
            raise SchemaError(f"truncation bounds ({lo}, {hi}) not inside "
                              f"({domain.l}, {domain.r})")
        return float(lo), float(hi)

    ref = grid.reference
    if ref is None:
        if domain.l < 1.0 < domain.r:
            ref = 1.0
        elif math.isfinite(domain.l) and math.isfinite(domain.r):
            ref = 0.5 * (domain.l + domain.r)
        elif math.isfinite(domain.l):
            ref = domain.l + max(1.0, abs(domain.l))
        else:
            ref = domain.r - max(1.0, abs(domain.r))

    if domain.l >= 0:
        d_lo = ref / _WINDOW_RATIO if lo is None else lo
        d_hi = ref * _WINDOW_RATIO if hi is None else hi
        if math.isfinite(domain.l) and d_lo <= domain.l:
            d_lo = domain.l + (ref - domain.l) / _WINDOW_RATIO
        if math.isfinite(domain.r) and d_hi >= domain.r:
            d_hi = domain.r - (domain.r - ref) / _WINDOW_RATIO
    else:
        half = (_WINDOW_RATIO - 1.0) / 2.0 * max(1.0, abs(ref))
        d_lo = ref - half if lo is None else lo
        d_hi = ref + half if hi is None else hi
        if math.isfinite(domain.l):
            d_lo = max(d_lo, domain.l + (ref - domain.l) / _WINDOW_RATIO)
        if math.isfinite(domain.r):
            d_hi = min(d_hi, domain.r - (domain.r - ref) / _WINDOW_RATIO)
    if not (domain.l < d_lo < d_hi < domain.r):
        raise SchemaError(f"resolved window ({d_lo}, {d_hi}) invalid for domain "
                          f"({domain.l}, {domain.r})")
    return float(d_lo), float(d_hi)


@dataclass(frozen=True)
class Problem:
    """A perpetual discounted stopping problem restricted to one threshold side."""
    process: DiffusionSpec
    payoff: PayoffSpec
    discount: float
    direction: Direction = Direction.L
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.discount <= 0:
            raise SchemaError("discount rate must be positive")
        object.__setattr__(self, "direction", Direction(self.direction))
        _resolve_window(self.process.domain, self.grid)   # validate eagerly
        for k in self.payoff.kinks:
            if not self.process.domain.contains_interior(k):
                raise SchemaError(f"kink {k} outside the open state interval")

    # ---- geometry -------------------------------------------------------- #
    def window(self) -> Tuple[float, float]:
        return _resolve_window(self.process.domain, self.grid)

    def grid_points(self) -> np.ndarray:
        lo, hi = self.window()
        return np.linspace(lo, hi, self.grid.n_points)

    def normalization_point(self) -> float:
        """Geometric window midpoint on nonnegative domains, arithmetic otherwise."""
        lo, hi = self.window()
        if self.process.domain.l >= 0 and lo > 0:
            return math.sqrt(lo * hi)
        return 0.5 * (lo + hi)

    def interior_contains(self, x: float) -> bool:
        return self.process.domain.contains_interior(x)

    def with_grid(self, **kwargs) -> "Problem":
        return replace(self, grid=replace(self.grid, **kwargs))

    # ---- coefficient access ---------------------------------------------- #
    def drift(self, x):
        return self.process.drift(x)

    def sigma(self, x):
        return self.process.diffusion(x)

    def sigma2(self, x):
        s = self.process.diffusion(x)
        return s * s


# --------------------------------------------------------------------------- #
# Operations
# --------------------------------------------------------------------------- #

def generator_apply(problem: Problem, f, x: float) -> float:
    """Apply the infinitesimal generator a(x) f'(x) + sigma^2(x) f''(x) / 2."""
    if not problem.interior_contains(x):
        raise DomainError(f"x={x} is not strictly inside the state interval")
    fd = as_differentiable(f)
    f1 = fd.deriv(x, 1)
    f2 = fd.deriv(x, 2)
    sig = problem.sigma(x)
    if not sig > 0:
        raise DomainError(f"diffusion coefficient non-positive at x={x}")
    return problem.drift(x) * f1 + 0.5 * sig * sig * f2


def _log_scale_integrand(problem: Problem):
    a, s = problem.process.drift, problem.process.diffusion
    def integrand(y):
        sig = s(y)
        return 2.0 * a(y) / (sig * sig)
    return integrand


def scale_density(problem: Problem, x: float, anchor: Optional[float] = None) -> float:
    """Scale-function derivative S'(x) = exp(-int_{x0}^{x} 2a/sigma^2), S'(x0) = 1."""
    if not problem.interior_contains(x):
        raise DomainError(f"x={x} is not strictly inside the state interval")
    x0 = problem.normalization_point() if anchor is None else anchor
    if x == x0:
        return 1.0
    integrand = _log_scale_integrand(problem)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, abserr = integrate.quad(integrand, x0, x, limit=200)
        except (integrate.IntegrationWarning, ZeroDivisionError, OverflowError) as exc:
            raise NumericalError(f"scale density quadrature failed on [{x0}, {x}]: {exc}")
    if abs(val) < 700 and abserr > 1e-6 * max(1.0, abs(val)):
        raise NumericalError(
            f"scale density quadrature error {abserr:.3e} too large on [{x0}, {x}]")
    return math.exp(-val)


def analytic_log_scale(problem: Problem, anchor: Optional[float] = None):
    """Closed-form log S' when drift and diffusion are expressions, else None.

    The antiderivative of 2a/sigma^2 is attempted symbolically; exactness here
    removes the dominant quadrature error from Green-integral assembly.
    """
    drift, diff = problem.process.drift, problem.process.diffusion
    if not (isinstance(drift, Expression) and isinstance(diff, Expression)):
        return None
    import sympy
    from .expressions import X
    x0 = problem.normalization_point() if anchor is None else anchor
    integrand = sympy.simplify(2 * drift.sympy_expr / diff.sympy_expr ** 2)
    anti = sympy.integrate(integrand, X)
    if anti.has(sympy.Integral):
        return None
    anti_fn = Expression(anti)
    base = anti_fn(x0)

    def log_sprime(x):
        return -(anti_fn(x) - base)
    return log_sprime


def log_scale_grid(problem: Problem, xs: np.ndarray,
                   anchor: Optional[float] = None) -> np.ndarray:
    """log S' at each grid point, via per-interval quadrature anchored at x0."""
    xs = np.asarray(xs, dtype=float)
    x0 = problem.normalization_point() if anchor is None else anchor
    integrand = _log_scale_integrand(problem)
    incs = np.empty(len(xs) - 1)
    for i in range(len(xs) - 1):
        incs[i], _ = integrate.quad(integrand, xs[i], xs[i + 1], limit=50)
    cum = np.concatenate([[0.0], np.cumsum(incs)])
    base, _ = integrate.quad(integrand, x0, xs[0], limit=200)
    return -(base + cum)


@dataclass(frozen=True)
class RegularityReport:
    """Pointwise local-integrability diagnostics for (1+|a|)/sigma^2."""
    points: np.ndarray
    values: np.ndarray
    point_pass: np.ndarray
    overall_pass: bool
    epsilon: float

    def worst(self) -> Tuple[float, float]:
        i = int(np.nanargmax(self.values))
        return float(self.points[i]), float(self.values[i])


def check_regularity(problem: Problem, epsilon: Optional[float] = None,
                     value_cap: float = 1e8) -> RegularityReport:
    """Evaluate the local integrability of (1+|a|)/sigma^2 around each grid point."""
    xs = problem.grid_points()
    if epsilon is None:
        epsilon = float(xs[1] - xs[0])
    a, s = problem.process.drift, problem.process.diffusion

    def integrand(y):
        sig = s(y)
        return (1.0 + abs(a(y))) / (sig * sig)

    lo_dom, hi_dom = problem.process.domain.l, problem.process.domain.r
    values = np.empty_like(xs)
    ok = np.empty(len(xs), dtype=bool)
    for i, x in enumerate(xs):
        a_lim = max(x - epsilon, lo_dom + 1e-300) if math.isfinite(lo_dom) else x - epsilon
        b_lim = min(x + epsilon, hi_dom - 1e-300) if math.isfinite(hi_dom) else x + epsilon
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(integrand, a_lim, b_lim, limit=100)
            except (integrate.IntegrationWarning, ZeroDivisionError,
                    OverflowError, ValueError):
                val = float("inf")
        values[i] = val
        ok[i] = math.isfinite(val) and val <= value_cap
    return RegularityReport(points=xs, values=values, point_pass=ok,
                            overall_pass=bool(ok.all()), epsilon=epsilon)
