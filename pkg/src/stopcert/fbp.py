"""Free-boundary analysis: stationary points of the threshold ratio.

Smooth pasting at a candidate boundary is equivalent to stationarity of the
ratio h, so the free-boundary problem is solved by enumerating roots of h'
and classifying each by its first nonvanishing higher derivative.  A strict
local maximum can be promoted to "solves the stopping problem" through the
second-order conditions; stationarity alone cannot, and the report says so.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
import sympy

from .diffusion import Direction, Problem
from .errors import TrivialProblem
from .expressions import Expression, X, eval_array, fd_central
from .fundsol import FundamentalPair
from .threshold import maximize_h

ROOT_TOL = 1e-12
TOUCH_ACCEPT = 1e-12
VANISH_TOL_ANALYTIC = 1e-8
VANISH_TOL_FD = 1e-4
ORDER_CAP = 6


class Classification(str, Enum):
    STRICT_MAX = "strict-max"
    STRICT_MIN = "strict-min"
    HIGHER_ORDER_MAX = "higher-order-max"
    HIGHER_ORDER_MIN = "higher-order-min"
    DEGENERATE = "degenerate"


class FBPVerdict(str, Enum):
    SOLVES = "solves-stopping-problem"
    FAILS = "fails-stopping-problem"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class StationaryPoint:
    p_bar: float
    h_at: float
    h_derivatives: Tuple[float, ...]      # (h', h'', ...) up to first nonvanishing
    first_nonvanishing: Optional[int]     # derivative order, None if cap reached
    classification: Classification
    H_function: Callable                  # candidate H(x) = h(p_bar) * fundamental(x)
    analytic_derivatives: bool
    note: str = ""

    def as_dict(self):
        return {"p_bar": self.p_bar, "h_at": self.h_at,
                "h_derivatives": list(self.h_derivatives),
                "first_nonvanishing": self.first_nonvanishing,
                "classification": self.classification.value,
                "analytic_derivatives": self.analytic_derivatives,
                "note": self.note}


@dataclass(frozen=True)
class StationaryScan:
    points: Tuple[StationaryPoint, ...]
    notes: Tuple[str, ...] = ()


@dataclass(frozen=True)
class FreeBoundaryReport:
    stationary_points: Tuple[StationaryPoint, ...]
    verdicts: Tuple[Tuple[FBPVerdict, str], ...]   # (verdict, branch used)
    selected: Optional[int]
    notes: Tuple[str, ...] = ()

    def as_dict(self):
        return {"stationary_points": [p.as_dict() for p in self.stationary_points],
                "verdicts": [[v.value, b] for v, b in self.verdicts],
                "selected": self.selected, "notes": list(self.notes)}


# --------------------------------------------------------------------------- #
# Ratio derivatives
# --------------------------------------------------------------------------- #

class _RatioDerivatives:
    """h = g/u with u the direction-matching fundamental solution."""

    def __init__(self, problem: Problem, pair: FundamentalPair):
        self.g = problem.payoff.as_differentiable()
        increasing = Direction(problem.direction) == Direction.L
        self.u, self.du, self.ddu = pair.fundamental(increasing)
        u_expr = pair.psi_expr if increasing else pair.phi_expr
        self.analytic = self.g.expr is not None and u_expr is not None
        self._lams: dict[int, Callable] = {}
        if self.analytic:
            self._h_expr = self.g.expr.sympy_expr / u_expr

    def h(self, p):
        return self.g.fn(p) / self.u(p) if np.isscalar(p) \
            else eval_array(self.g.fn, p) / self.u(p)

    def slope(self, p: float) -> float:
        return (self.g.deriv(p, 1) * self.u(p) - self.g.fn(p) * self.du(p)) \
            / self.u(p) ** 2

    def slope_grid(self, xs: np.ndarray) -> np.ndarray:
        u, du = self.u(xs), self.du(xs)
        gv = eval_array(self.g.fn, xs)
        if self.g.expr is not None:
            g1 = eval_array(self.g.expr.deriv(1), xs)
        else:
            g1 = np.array([self.g.deriv(float(x), 1) for x in xs])
        return (g1 * u - gv * du) / u ** 2

    def deriv(self, p: float, order: int) -> float:
        """n-th derivative of h; exact via symbols, Richardson differences else."""
        if self.analytic:
            if order not in self._lams:
                self._lams[order] = Expression(sympy.diff(self._h_expr, X, order))
            return float(self._lams[order](p))
        return fd_central(self.h, p, order)


# --------------------------------------------------------------------------- #
# Root isolation
# --------------------------------------------------------------------------- #

def _bisect_root(f: Callable, a: float, b: float, fa: float, fb: float) -> float:
    for _ in range(200):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return 0.5 * (a + b)


def _golden_min_abs(f: Callable, a: float, b: float) -> Tuple[float, float]:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    inv_phi2 = (3.0 - math.sqrt(5.0)) / 2.0
    h = b - a
    n = max(1, int(math.ceil(math.log(1e-12 * max(abs(a), abs(b), 1e-12) / h)
                             / math.log(inv_phi))))
    c, d = a + inv_phi2 * h, a + inv_phi * h
    yc, yd = abs(f(c)), abs(f(d))
    for _ in range(n):
        if yc <= yd:
            b, d, yd = d, c, yc
            h *= inv_phi
            c = a + inv_phi2 * h
            yc = abs(f(c))
        else:
            a, c, yc = c, d, yd
            h *= inv_phi
            d = a + inv_phi * h
            yd = abs(f(d))
    return (c, yc) if yc <= yd else (d, yd)


def _polish_touch(rd: _RatioDerivatives, p: float) -> Tuple[float, bool]:
    """Sharpen a tangential root by bisecting the first derivative order
    whose sign flips across it; |h'| alone localizes such roots only to the
    square root of float precision."""
    w = max(1e-5, 1e-5 * abs(p))
    a, b = p - w, p + w
    for order in range(2, ORDER_CAP + 1):
        try:
            fa, fb = rd.deriv(a, order), rd.deriv(b, order)
        except Exception:
            return p, False
        if fa == 0.0 and fb == 0.0:
            continue
        if fa * fb < 0.0:
            root = _bisect_root(lambda q: rd.deriv(q, order), a, b, fa, fb)
            return root, True
    return p, False


def _characterize(rd: _RatioDerivatives, p: float, window_scale: float,
                  dp: float = 1e-12, note: str = "") -> StationaryPoint:
    h0 = float(rd.h(p))
    w = abs(p) if abs(p) > 1e-6 else window_scale
    tol0 = (VANISH_TOL_ANALYTIC if rd.analytic else VANISH_TOL_FD) * max(1.0, abs(h0))
    ders = [rd.slope(p)]
    first = None
    for order in range(2, ORDER_CAP + 1):
        val = rd.deriv(p, order)
        ders.append(val)
        # a derivative within root-location uncertainty of zero counts as zero
        try:
            lookahead = abs(rd.deriv(p, order + 1))
        except Exception:
            lookahead = 0.0
        floor = tol0 / w ** order + 2.0 * lookahead * dp
        if abs(val) > floor:
            first = order
            break
    if first is None:
        cls = Classification.DEGENERATE
        note = note or "no nonvanishing derivative up to the order cap"
    elif first % 2 == 1:
        cls = Classification.DEGENERATE
        note = note or f"first nonvanishing derivative has odd order {first}"
    elif ders[-1] < 0:
        cls = Classification.STRICT_MAX if first == 2 else Classification.HIGHER_ORDER_MAX
    else:
        cls = Classification.STRICT_MIN if first == 2 else Classification.HIGHER_ORDER_MIN
    u = rd.u
    H_fn = lambda x, _h=h0, _u=u: _h * _u(x)
    return StationaryPoint(p_bar=p, h_at=h0, h_derivatives=tuple(ders),
                           first_nonvanishing=first, classification=cls,
                           H_function=H_fn, analytic_derivatives=rd.analytic,
                           note=note)


def find_stationary_points(problem: Problem, pair: FundamentalPair) -> StationaryScan:
    """Enumerate roots of h' on the window: sign changes and tangential zeros."""
    rd = _RatioDerivatives(problem, pair)
    xs = problem.grid_points()
    dx = float(xs[1] - xs[0])
    notes: List[str] = []
    notes.append(f"root scan resolution: {len(xs)} nodes, spacing {dx:.6g}; "
                 "stationary points closer than one node may merge")

    mask = np.ones(len(xs), dtype=bool)
    if rd.g.kinks:
        for k in rd.g.kinks:
            mask &= np.abs(xs - k) > 0.51 * dx
        notes.append(f"kink neighborhoods excluded from the root search: {list(rd.g.kinks)}")
    hp = np.full(len(xs), np.nan)
    hp[mask] = rd.slope_grid(xs[mask])

    hs = rd.h(xs)
    h_scale = max(1.0, float(np.nanmax(np.abs(hs))))
    width = float(xs[-1] - xs[0])
    if np.nanmax(np.abs(hp)) * width <= 1e-10 * h_scale:
        pt = _characterize(rd, float(problem.normalization_point()), width,
                           note="ratio is constant on the window (plateau)")
        pt = StationaryPoint(p_bar=pt.p_bar, h_at=pt.h_at, h_derivatives=pt.h_derivatives,
                             first_nonvanishing=None,
                             classification=Classification.DEGENERATE,
                             H_function=pt.H_function,
                             analytic_derivatives=rd.analytic,
                             note="ratio is constant on the window (plateau)")
        return StationaryScan(points=(pt,), notes=tuple(notes))

    roots: List[Tuple[float, float]] = []      # (location, uncertainty)
    # sign changes
    for i in range(len(xs) - 1):
        if not (mask[i] and mask[i + 1]):
            continue
        a, b, fa, fb = float(xs[i]), float(xs[i + 1]), float(hp[i]), float(hp[i + 1])
        if not (np.isfinite(fa) and np.isfinite(fb)):
            continue
        if fa == 0.0:
            roots.append((a, 1e-12 * max(1.0, abs(a))))
        elif fa * fb < 0.0:
            r = _bisect_root(rd.slope, a, b, fa, fb)
            roots.append((r, 1e-12 * max(1.0, abs(r))))
    if mask[-1] and hp[-1] == 0.0:
        roots.append((float(xs[-1]), 1e-12 * max(1.0, abs(float(xs[-1])))))

    # tangential zeros: local minima of |h'| refined without a sign change
    abs_hp = np.abs(hp)
    for i in range(1, len(xs) - 1):
        if not (mask[i - 1] and mask[i] and mask[i + 1]):
            continue
        if not (abs_hp[i] < abs_hp[i - 1] and abs_hp[i] <= abs_hp[i + 1]):
            continue
        if hp[i - 1] * hp[i + 1] < 0.0:
            continue  # covered by the sign-change route
        p_min, val = _golden_min_abs(rd.slope, float(xs[i - 1]), float(xs[i + 1]))
        if val <= TOUCH_ACCEPT * max(1.0, abs(float(rd.h(p_min)))):
            p_ref, sharp = _polish_touch(rd, p_min)
            if abs(float(rd.slope(p_ref))) <= TOUCH_ACCEPT * max(1.0, abs(float(rd.h(p_ref)))):
                p_min = p_ref
            else:
                sharp = False
            dp = (1e-12 if sharp else 1e-7) * max(1.0, abs(p_min))
            roots.append((p_min, dp))

    # dedupe, keep interior, ascending
    roots = sorted((r, dp) for r, dp in roots if xs[0] < r < xs[-1])
    merged: List[Tuple[float, float]] = []
    for r, dp in roots:
        if merged and abs(r - merged[-1][0]) <= max(1e-9 * max(1.0, abs(r)), 0.25 * dx):
            continue
        merged.append((r, dp))

    if not merged:
        sign = "increasing" if np.nanmean(hp[mask]) > 0 else "decreasing"
        notes.append(f"h' keeps one sign on the window (ratio {sign}); "
                     "no interior free boundary")
        return StationaryScan(points=(), notes=tuple(notes))

    points = tuple(_characterize(rd, r, width, dp=dp) for r, dp in merged)
    return StationaryScan(points=points, notes=tuple(notes))


# --------------------------------------------------------------------------- #
# Second-order promotion / demotion
# --------------------------------------------------------------------------- #

def classify_stationary_points(problem: Problem, pair: FundamentalPair,
                               scan: StationaryScan) -> FreeBoundaryReport:
    """Decide which stationary points actually solve the stopping problem."""
    rd = _RatioDerivatives(problem, pair)
    pts = scan.points
    notes = list(scan.notes)
    verdicts: List[Tuple[FBPVerdict, str]] = []
    xs = problem.grid_points()
    hs = rd.h(xs)

    def is_strict_max(pt: StationaryPoint) -> bool:
        return pt.classification == Classification.STRICT_MAX

    def second_order_sign(pt: StationaryPoint) -> float:
        # h''(p_bar); curvature gap H'' - g'' = -h'' * fundamental
        return pt.h_derivatives[1] if len(pt.h_derivatives) >= 2 else 0.0

    for idx, pt in enumerate(pts):
        h2 = second_order_sign(pt)
        w = abs(pt.p_bar) if abs(pt.p_bar) > 1e-6 else 1.0
        tol = (VANISH_TOL_ANALYTIC if pt.analytic_derivatives else VANISH_TOL_FD) \
            * max(1.0, abs(pt.h_at)) / (w * w)
        if h2 > tol:
            verdicts.append((FBPVerdict.FAILS,
                             "necessary curvature inequality violated (ratio has a local minimum)"))
            continue
        if not is_strict_max(pt):
            verdicts.append((FBPVerdict.UNDETERMINED,
                             "curvature condition not strict; second-order test inconclusive"))
            continue
        others = [q for j, q in enumerate(pts) if j != idx]
        if not others:
            verdicts.append((FBPVerdict.SOLVES, "unique stationary point, strict maximum"))
            continue
        # candidate must dominate the payoff below it on the grid
        below = xs < pt.p_bar
        dominates = bool(np.all(pt.h_at >= hs[below] - 1e-9 * max(1.0, abs(pt.h_at))))
        ok = dominates
        branch = "strict maximum dominating below threshold"
        for q in others:
            if q.p_bar < pt.p_bar:
                branch += "; other solution lies below (2a)"
                continue
            n = q.first_nonvanishing
            if n is not None and n > 2 and q.h_derivatives[-1] < 0:
                branch += f"; higher-order gap at {q.p_bar:.6g} has order {n} (2b)"
            else:
                ok = False
                branch += f"; solution at {q.p_bar:.6g} above threshold not covered by (2b)"
        verdicts.append((FBPVerdict.SOLVES if ok else FBPVerdict.UNDETERMINED, branch))

    # cross-check with the direct ratio maximization
    try:
        sol = maximize_h(problem, pair)
    except TrivialProblem:
        sol = None
        notes.append("payoff non-positive on the window; ratio maximization trivial")
    if sol is not None and not sol.exists:
        for i, (v, b) in enumerate(verdicts):
            if v == FBPVerdict.UNDETERMINED:
                verdicts[i] = (FBPVerdict.FAILS,
                               b + f"; no threshold optimum exists ({sol.diagnostic})")
        notes.append(f"ratio maximization reports {sol.diagnostic}")

    selected = None
    best_h = -np.inf
    for i, (v, _) in enumerate(verdicts):
        if v == FBPVerdict.SOLVES and pts[i].h_at > best_h:
            selected, best_h = i, pts[i].h_at
    return FreeBoundaryReport(stationary_points=pts, verdicts=tuple(verdicts),
                              selected=selected, notes=tuple(notes))


def analyze(problem: Problem, pair: FundamentalPair) -> FreeBoundaryReport:
    return classify_stationary_points(problem, pair, find_stationary_points(problem, pair))


def stationarity_csv(problem: Problem, pair: FundamentalPair, fh) -> None:
    """(p, h, h') table for plotting the stationarity landscape."""
    rd = _RatioDerivatives(problem, pair)
    xs = problem.grid_points()
    hs = rd.h(xs)
    hp = rd.slope_grid(xs)
    fh.write("p,h,dh\n")
    for p, h, d in zip(xs, hs, hp):
        fh.write(f"{p:.17g},{h:.17g},{d:.17g}\n")


def stationarity_text(problem: Problem, pair: FundamentalPair) -> str:
    buf = io.StringIO()
    stationarity_csv(problem, pair, buf)
    return buf.getvalue()
