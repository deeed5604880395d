"""Increasing/decreasing fundamental solutions of L u = rho u.

Catalog processes (GBM, arithmetic BM) get closed forms.  Everything else is
integrated numerically: each solution is launched from a point pushed well
beyond the working window toward its characteristic boundary, where the
contamination by the opposite solution decays exponentially, then marched
across the window with a classical fixed-rule RK4 scheme.  Shooting with
bisection on the launch slope is the fallback when the characteristic-root
guess fails the monotonicity screen.
"""

from __future__ import annotations

import io
import math
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
import sympy
from scipy.interpolate import CubicHermiteSpline

from .diffusion import Problem, log_scale_grid
from .errors import FundamentalSolveError, MonotonicityError, NotInCatalog, NumericalError
from .expressions import Differentiable, Expression, X
from . import diffusion as _diffusion

# Tuning constants for the numeric solve.  DECAY_TARGET e-foldings of
# relative contamination are shed on the launch extension; LOCAL_STEP bounds
# the RK4 step against the local solution length scale.
DECAY_TARGET = 18.0
EXT_STEPS = 2400
LOCAL_STEP = 0.05
RENORM_CAP = 1e120


class Source(str, Enum):
    ANALYTIC = "analytic"
    NUMERIC = "numeric"


def beta_roots(alpha: float, sigma: float, rho: float) -> Tuple[float, float]:
    """Roots of sigma^2 b (b-1) / 2 + alpha b = rho, ordered (positive, negative)."""
    if sigma <= 0 or rho <= 0:
        raise ValueError("need sigma > 0 and rho > 0")
    a2 = 0.5 * sigma * sigma
    b = alpha - a2
    disc = b * b + 4.0 * a2 * rho
    root = math.sqrt(disc)
    beta_plus = (-b + root) / (2.0 * a2)
    beta_minus = (-b - root) / (2.0 * a2)
    assert beta_plus > 0 > beta_minus
    if rho > alpha:
        assert beta_plus > 1.0 - 1e-12, "positive root must exceed 1 when rho > alpha"
    return beta_plus, beta_minus


def bm_exponents(drift: float, sigma: float, rho: float) -> Tuple[float, float]:
    """Roots of sigma^2 g^2 / 2 + drift g = rho, ordered (positive, negative)."""
    if sigma <= 0 or rho <= 0:
        raise ValueError("need sigma > 0 and rho > 0")
    a2 = 0.5 * sigma * sigma
    root = math.sqrt(drift * drift + 4.0 * a2 * rho)
    return (-drift + root) / (2.0 * a2), (-drift - root) / (2.0 * a2)


class FundamentalPair:
    """Positive increasing psi and decreasing phi with L u = rho u on the window.

    Values and first derivatives are tabulated on the working grid; evaluation
    between nodes uses cubic Hermite interpolation for numeric pairs and the
    closed form for analytic ones.  Both functions equal 1 at
    ``normalization_point``; ``wronskian_B = (psi' phi - psi phi') / S'`` is
    constant on the grid.
    """

    def __init__(self, x: np.ndarray,
                 psi_values: np.ndarray, dpsi_values: np.ndarray,
                 phi_values: np.ndarray, dphi_values: np.ndarray,
                 wronskian_B: float, normalization_point: float, rho: float,
                 source: Source,
                 psi_eval: Optional[Tuple[Callable, ...]] = None,
                 phi_eval: Optional[Tuple[Callable, ...]] = None,
                 psi_expr: Optional[sympy.Expr] = None,
                 phi_expr: Optional[sympy.Expr] = None):
        self.x = np.asarray(x, dtype=float)
        self.psi_values = np.asarray(psi_values, dtype=float)
        self.dpsi_values = np.asarray(dpsi_values, dtype=float)
        self.phi_values = np.asarray(phi_values, dtype=float)
        self.dphi_values = np.asarray(dphi_values, dtype=float)
        self.wronskian_B = float(wronskian_B)
        self.normalization_point = float(normalization_point)
        self.rho = float(rho)
        self.source = source
        self.psi_expr = psi_expr
        self.phi_expr = phi_expr
        if psi_eval is None:
            psi_eval = _tabulated_eval(self.x, self.psi_values, self.dpsi_values)
        if phi_eval is None:
            phi_eval = _tabulated_eval(self.x, self.phi_values, self.dphi_values)
        self._psi_eval = psi_eval
        self._phi_eval = phi_eval

    # ---- evaluation -------------------------------------------------------- #
    def psi(self, x):
        return _scalar_or_array(self._psi_eval[0], x)

    def dpsi(self, x):
        return _scalar_or_array(self._psi_eval[1], x)

    def ddpsi(self, x):
        return _scalar_or_array(self._psi_eval[2], x)

    def phi(self, x):
        return _scalar_or_array(self._phi_eval[0], x)

    def dphi(self, x):
        return _scalar_or_array(self._phi_eval[1], x)

    def ddphi(self, x):
        return _scalar_or_array(self._phi_eval[2], x)

    def psi_differentiable(self) -> Differentiable:
        return Differentiable(self.psi, derivs=(self.dpsi, self.ddpsi),
                              expr=Expression(self.psi_expr) if self.psi_expr is not None else None)

    def phi_differentiable(self) -> Differentiable:
        return Differentiable(self.phi, derivs=(self.dphi, self.ddphi),
                              expr=Expression(self.phi_expr) if self.phi_expr is not None else None)

    def analytic_order(self) -> int:
        """Highest derivative order available without differencing."""
        return 10**9 if self.psi_expr is not None else 2

    def fundamental(self, increasing: bool):
        """(u, u', u'') triple of callables for the chosen monotone solution."""
        return (self.psi, self.dpsi, self.ddpsi) if increasing \
            else (self.phi, self.dphi, self.ddphi)

    # ---- diagnostics ------------------------------------------------------- #
    def wronskian_series(self, problem: Problem) -> np.ndarray:
        sprime = np.exp(log_scale_grid(problem, self.x, anchor=self.normalization_point))
        return (self.dpsi_values * self.phi_values
                - self.psi_values * self.dphi_values) / sprime

    def residuals(self, problem: Problem) -> Tuple[np.ndarray, np.ndarray]:
        """|L u - rho u| on interior grid points for u = psi and u = phi.

        Second derivatives of numeric pairs are re-differenced from the stored
        first-derivative table, so the diagnostic is independent of the ODE;
        it is only trustworthy where the grid resolves the local length scale
        (spacing small against x near a power-law boundary).
        """
        xs = self.x[1:-1]
        a = _eval(problem.process.drift, xs)
        s2 = _eval(problem.process.diffusion, xs) ** 2
        res_psi = a * self.dpsi(xs) + 0.5 * s2 * self.ddpsi(xs) - self.rho * self.psi(xs)
        res_phi = a * self.dphi(xs) + 0.5 * s2 * self.ddphi(xs) - self.rho * self.phi(xs)
        return np.abs(res_psi), np.abs(res_phi)

    def dump_csv(self, problem: Problem, fh) -> None:
        """Fixed-format table of values, derivatives and ODE residuals."""
        res_psi, res_phi = self.residuals(problem)
        rp = np.concatenate([[res_psi[0]], res_psi, [res_psi[-1]]])
        rf = np.concatenate([[res_phi[0]], res_phi, [res_phi[-1]]])
        fh.write("x,psi,dpsi,phi,dphi,residual_psi,residual_phi\n")
        for i in range(len(self.x)):
            row = (self.x[i], self.psi_values[i], self.dpsi_values[i],
                   self.phi_values[i], self.dphi_values[i], rp[i], rf[i])
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")

    def csv_text(self, problem: Problem) -> str:
        buf = io.StringIO()
        self.dump_csv(problem, buf)
        return buf.getvalue()


def _scalar_or_array(fn, x):
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(fn(float(x)))
    return np.asarray(fn(np.asarray(x, dtype=float)), dtype=float)


def _fd5_array(vals: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order first derivative of uniformly tabulated values."""
    d = np.empty_like(vals)
    d[2:-2] = (-vals[4:] + 8 * vals[3:-1] - 8 * vals[1:-3] + vals[:-4]) / (12 * dx)
    c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    d[0] = c @ vals[:5] / dx
    d[1] = c @ vals[1:6] / dx
    d[-1] = -(c @ vals[-1:-6:-1]) / dx
    d[-2] = -(c @ vals[-2:-7:-1]) / dx
    return d


def _tabulated_eval(x: np.ndarray, vals: np.ndarray, ders: np.ndarray):
    """(u, u', u'') evaluators from integrator-state tables.

    Node second derivatives come from a 5-point stencil on the stored first
    derivatives, which keeps the ODE-residual diagnostic independent of the
    equation being solved.
    """
    dx = x[1] - x[0]
    dd = _fd5_array(ders, dx)
    sp_v = CubicHermiteSpline(x, vals, ders)
    sp_d = CubicHermiteSpline(x, ders, dd)
    return (sp_v, sp_d, sp_d.derivative())


def _eval(f, xs):
    from .expressions import eval_array
    return eval_array(f, xs)


# --------------------------------------------------------------------------- #
# Analytic catalog
# --------------------------------------------------------------------------- #

def analytic_fundamental(problem: Problem) -> FundamentalPair:
    """Closed-form pair for catalog processes, normalized at the window midpoint."""
    tag = problem.process.catalog_tag
    if tag is None:
        raise NotInCatalog("process has no catalog tag; use numeric_fundamental")
    xs = problem.grid_points()
    x0 = problem.normalization_point()
    rho = problem.discount

    if isinstance(tag, _diffusion.GBM):
        bp, bm = beta_roots(tag.alpha, tag.sigma, rho)
        psi_expr = (X / x0) ** bp
        phi_expr = (X / x0) ** bm

        def make(beta):
            def val(x):
                return (x / x0) ** beta
            def d1(x):
                return beta * (x / x0) ** beta / x
            def d2(x):
                return beta * (beta - 1.0) * (x / x0) ** beta / (x * x)
            return val, d1, d2
        psi_eval, phi_eval = make(bp), make(bm)
        wron = (bp - bm) / x0
    elif isinstance(tag, _diffusion.ArithmeticBM):
        gp, gm = bm_exponents(tag.drift, tag.sigma, rho)
        psi_expr = sympy.exp(gp * (X - x0))
        phi_expr = sympy.exp(gm * (X - x0))

        def make(gamma):
            def val(x):
                return np.exp(gamma * (x - x0))
            def d1(x):
                return gamma * np.exp(gamma * (x - x0))
            def d2(x):
                return gamma * gamma * np.exp(gamma * (x - x0))
            return val, d1, d2
        psi_eval, phi_eval = make(gp), make(gm)
        wron = gp - gm
    else:
        raise NotInCatalog(f"no closed form for catalog tag {tag!r}")

    pair = FundamentalPair(
        x=xs,
        psi_values=psi_eval[0](xs), dpsi_values=psi_eval[1](xs),
        phi_values=phi_eval[0](xs), dphi_values=phi_eval[1](xs),
        wronskian_B=wron, normalization_point=x0, rho=rho,
        source=Source.ANALYTIC, psi_eval=psi_eval, phi_eval=phi_eval,
        psi_expr=psi_expr, phi_expr=phi_expr)
    return pair


# --------------------------------------------------------------------------- #
# Numeric solve
# --------------------------------------------------------------------------- #

def _char_roots(A: float, B: float, rho: float) -> Tuple[float, float]:
    # roots of A m^2 / 2 + B m = rho
    root = math.sqrt(B * B + 2.0 * A * rho)
    return (-B + root) / A, (-B - root) / A


def _gap_x(problem: Problem, x: float) -> float:
    # spread of the frozen-coefficient characteristic roots per unit x
    a = problem.drift(x)
    s2 = problem.sigma2(x)
    return 2.0 * math.sqrt(a * a + 2.0 * problem.discount * s2) / s2


def _rk4(rhs, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _LaunchPlan:
    """Transformed-coordinate launch segment toward one domain boundary."""

    def __init__(self, problem: Problem, side: str):
        dom = problem.process.domain
        lo, hi = problem.window()
        self.side = side
        edge = lo if side == "left" else hi
        self.edge = edge
        if side == "left":
            finite = math.isfinite(dom.l)
            self.kind = "log-left" if finite else "linear"
            self.base = dom.l if finite else 0.0
        else:
            if math.isfinite(dom.r):
                self.kind = "log-right"
                self.base = dom.r
            elif dom.l >= 0 and math.isfinite(dom.l):
                self.kind = "log-left"
                self.base = dom.l
            else:
                self.kind = "linear"
                self.base = 0.0
        self.problem = problem
        self.rho = problem.discount

    # coordinate maps ------------------------------------------------------- #
    def to_coord(self, x: float) -> float:
        if self.kind == "log-left":
            return math.log(x - self.base)
        if self.kind == "log-right":
            return math.log(self.base - x)
        return x

    def to_x(self, t: float) -> float:
        if self.kind == "log-left":
            return self.base + math.exp(t)
        if self.kind == "log-right":
            return self.base - math.exp(t)
        return t

    def dx_dt(self, t: float) -> float:
        if self.kind == "log-left":
            return math.exp(t)
        if self.kind == "log-right":
            return -math.exp(t)
        return 1.0

    def ode_AB(self, t: float) -> Tuple[float, float]:
        """Coefficients of A u''/2 + B u' = rho u in the transformed coordinate."""
        x = self.to_x(t)
        a = self.problem.drift(x)
        s2 = self.problem.sigma2(x)
        if self.kind == "log-left":
            e = x - self.base
            A = s2 / (e * e)
            B = a / e - 0.5 * A
        elif self.kind == "log-right":
            e = self.base - x
            A = s2 / (e * e)
            B = -a / e - 0.5 * A
        else:
            A, B = s2, a
        return A, B

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        A, B = self.ode_AB(t)
        u, v = y
        return np.array([v, (2.0 * (self.rho * u) - 2.0 * B * v) / A])

    # launch geometry -------------------------------------------------------- #
    def launch(self) -> Tuple[float, float, float]:
        """(t_start, t_edge, guess slope) for the extension segment."""
        t_edge = self.to_coord(self.edge)
        A, B = self.ode_AB(t_edge)
        gap = 2.0 * math.sqrt(B * B + 2.0 * A * self.rho) / A
        depth = min(max(DECAY_TARGET / gap, 1.0), 200.0)
        # log coordinates place their boundary at t -> -inf, except the
        # r = +inf case seen through the left-anchored log map.
        if self.side == "left" or self.kind == "log-right":
            toward_boundary = -1.0
        else:
            toward_boundary = 1.0
        t_start = t_edge + toward_boundary * depth
        A0, B0 = self.ode_AB(t_start)
        m_plus, m_minus = _char_roots(A0, B0, self.rho)
        # the solution must grow along the direction of integration
        slope = m_plus if t_start < t_edge else m_minus
        return t_start, t_edge, slope


def _integrate_extension(plan: _LaunchPlan, slope: float):
    """March the transformed ODE from the launch point to the window edge.

    Returns (u, v, logscale) at the edge in transformed coordinates, or None
    if positivity/monotone growth fails along the way.
    """
    t0, t1, _ = plan.launch()
    h = (t1 - t0) / EXT_STEPS
    y = np.array([1.0, slope])
    ls = 0.0
    t = t0
    for _ in range(EXT_STEPS):
        y = _rk4(plan.rhs, t, y, h)
        t += h
        if not np.isfinite(y).all() or y[0] <= 0.0:
            return None
        if y[1] * h <= 0.0:
            # u must keep growing strictly along the integration direction
            return None
        if abs(y[0]) > RENORM_CAP:
            ls += math.log(abs(y[0]))
            y = y / abs(y[0])
    return y[0], y[1], ls


def _launch_state(problem: Problem, side: str):
    """State (u, u', logscale) of the monotone solution at the window edge."""
    plan = _LaunchPlan(problem, side)
    t0, t1, guess = plan.launch()
    result = _integrate_extension(plan, guess)
    lo_mul, hi_mul = None, None
    if result is None:
        # Shooting fallback: bisect on a slope multiplier around the guess.
        passing = None
        for k in range(1, 40):
            for mult in (1.0 + 0.5 * k, 1.0 / (1.0 + 0.5 * k)):
                trial = _integrate_extension(plan, guess * mult)
                if trial is not None:
                    passing = mult
                    break
            if passing is not None:
                break
        if passing is None:
            raise FundamentalSolveError(
                f"{side} launch: no monotone positive solution bracketed",
                last_bracket=(guess / 20.0, guess * 20.0))
        lo_mul, hi_mul = min(1.0, passing), max(1.0, passing)
        for _ in range(60):
            mid = 0.5 * (lo_mul + hi_mul)
            if _integrate_extension(plan, guess * mid) is None:
                if passing > 1.0:
                    lo_mul = mid
                else:
                    hi_mul = mid
            else:
                if passing > 1.0:
                    hi_mul = mid
                else:
                    lo_mul = mid
        result = _integrate_extension(plan, guess * (hi_mul if passing > 1.0 else lo_mul))
        if result is None:
            raise FundamentalSolveError(
                f"{side} launch: bisection failed to stabilise a monotone solution",
                last_bracket=(guess * lo_mul, guess * hi_mul))
    u, v, ls = result
    # convert transformed derivative du/dt to du/dx at the edge
    t_edge = plan.to_coord(plan.edge)
    v_x = v / plan.dx_dt(t_edge)
    return u, v_x, ls


def _march_window(problem: Problem, u0: float, v0: float, ls0: float,
                  downward: bool):
    """RK4 across the working grid with deterministic per-interval substeps."""
    xs = problem.grid_points()
    rho = problem.discount

    def rhs(x, y):
        u, v = y
        a = problem.drift(x)
        s2 = problem.sigma2(x)
        return np.array([v, 2.0 * (rho * u - a * v) / s2])

    n = len(xs)
    us = np.empty(n)
    vs = np.empty(n)
    lss = np.empty(n)
    order = range(n - 1, -1, -1) if downward else range(n)
    idx = list(order)
    i0 = idx[0]
    us[i0], vs[i0], lss[i0] = u0, v0, ls0
    y = np.array([u0, v0])
    ls = ls0
    for j in range(1, n):
        i_prev, i_cur = idx[j - 1], idx[j]
        x_a, x_b = xs[i_prev], xs[i_cur]
        gap = _gap_x(problem, min(x_a, x_b) if problem.process.domain.l >= 0 else x_a)
        h_loc = LOCAL_STEP / gap
        nsub = max(1, min(int(math.ceil(abs(x_b - x_a) / h_loc)), 100000))
        h = (x_b - x_a) / nsub
        x = x_a
        for _ in range(nsub):
            y = _rk4(rhs, x, y, h)
            x += h
        if not np.isfinite(y).all():
            raise FundamentalSolveError("window march produced non-finite state")
        if abs(y[0]) > RENORM_CAP:
            ls += math.log(abs(y[0]))
            y = y / abs(y[0])
        us[i_cur], vs[i_cur], lss[i_cur] = y[0], y[1], ls
    return xs, us, vs, lss


def _normalize(xs, us, vs, lss, x0: float):
    """Rescale a logged solution so that its value at x0 equals 1."""
    logs = np.log(np.abs(us)) + lss
    sgn = np.sign(us)
    if not (sgn > 0).all():
        raise MonotonicityError("solution lost positivity on the working grid")
    # Hermite interpolation of log u at the (generally off-node) anchor;
    # d(log u)/dx = u'/u is integrator state, so this is fourth order.
    log0 = float(CubicHermiteSpline(xs, logs, vs / us)(x0))
    rel = logs - log0
    if rel.max() > 700.0:
        raise FundamentalSolveError(
            "normalized solution overflows double precision on the window")
    vals = np.exp(rel)
    ders = vs / us * vals
    return vals, ders


def numeric_fundamental(problem: Problem) -> FundamentalPair:
    """Numerically integrated fundamental pair on the working window."""
    x0 = problem.normalization_point()

    u, v, ls = _launch_state(problem, "left")
    xs, us, vs, lss = _march_window(problem, u, v, ls, downward=False)
    psi, dpsi = _normalize(xs, us, vs, lss, x0)
    if not (np.diff(psi) > 0).all() or not (dpsi > 0).all():
        raise MonotonicityError("psi is not strictly increasing on the grid")

    u, v, ls = _launch_state(problem, "right")
    xs2, us2, vs2, lss2 = _march_window(problem, u, v, ls, downward=True)
    phi, dphi = _normalize(xs2, us2, vs2, lss2, x0)
    if not (np.diff(phi) < 0).all() or not (dphi < 0).all():
        raise MonotonicityError("phi is not strictly decreasing on the grid")

    sprime = np.exp(log_scale_grid(problem, xs, anchor=x0))
    wron = (dpsi * phi - psi * dphi) / sprime
    B = float(np.median(wron))
    spread = float(np.max(np.abs(wron - B)) / abs(B))
    if spread > 1e-5:
        raise NumericalError(
            f"Wronskian drifts by {spread:.3e} relative; solve not trusted")
    if B <= 0:
        raise NumericalError("Wronskian constant must be positive")

    return FundamentalPair(
        x=xs, psi_values=psi, dpsi_values=dpsi,
        phi_values=phi, dphi_values=dphi,
        wronskian_B=B, normalization_point=x0, rho=problem.discount,
        source=Source.NUMERIC)


def fundamental_pair(problem: Problem, source: str = "auto") -> FundamentalPair:
    """Dispatch to the analytic catalog when possible, numeric otherwise."""
    if source == "analytic":
        return analytic_fundamental(problem)
    if source == "numeric":
        return numeric_fundamental(problem)
    if problem.process.catalog_tag is not None:
        return analytic_fundamental(problem)
    return numeric_fundamental(problem)
