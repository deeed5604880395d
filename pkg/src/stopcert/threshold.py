"""Threshold-class solver: value representation, ratio maximization, certificates.

The value of stopping at the first crossing of a threshold p factors through
the ratio h(p) of payoff to the monotone fundamental solution matching the
threshold side.  The optimal threshold maximizes h; the certificate records
the two inequality conditions that make this maximization necessary and
sufficient within the threshold class, scanned over the working grid.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .diffusion import Direction, Problem
from .errors import DomainError, TrivialProblem
from .expressions import eval_array
from .fundsol import FundamentalPair

GOLDEN_REL_WIDTH = 1e-10
CERT_NOISE = 1e-9


# --------------------------------------------------------------------------- #
# Ratio and value
# --------------------------------------------------------------------------- #

def h_value(problem: Problem, pair: FundamentalPair, p) -> float:
    """Payoff-to-fundamental ratio at a candidate threshold."""
    g = problem.payoff.terminal
    if problem.direction == Direction.L:
        denom = pair.psi(p)
    else:
        denom = pair.phi(p)
    if np.isscalar(p) or np.asarray(p).ndim == 0:
        if not problem.interior_contains(float(p)):
            raise DomainError(f"threshold {p} outside the open state interval")
        return float(g(float(p))) / denom
    return eval_array(g, p) / denom


def value_at(problem: Problem, pair: FundamentalPair, p: float, x) -> float:
    """Expected discounted payoff of the threshold rule p, started from x."""
    g = problem.payoff.terminal
    scalar = np.isscalar(x) or np.asarray(x).ndim == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    gp = float(g(p))
    if problem.direction == Direction.L:
        cont = xs < p
        vals = np.where(cont, gp * pair.psi(xs) / pair.psi(p), eval_array(g, xs))
    else:
        cont = xs > p
        vals = np.where(cont, gp * pair.phi(xs) / pair.phi(p), eval_array(g, xs))
    return float(vals[0]) if scalar else vals


# --------------------------------------------------------------------------- #
# Certificates and solutions
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class ConditionCheck:
    passed: bool
    worst_point: Optional[float]
    worst_margin: float          # largest violation found; <= 0 when clean
    note: str = ""

    def as_dict(self):
        return {"passed": self.passed, "worst_point": self.worst_point,
                "worst_margin": self.worst_margin, "note": self.note}


@dataclass(frozen=True)
class ThresholdCertificate:
    """Grid-scan record of the two threshold-class optimality conditions."""
    left_condition: ConditionCheck
    right_condition: ConditionCheck
    tolerance: float

    def passed(self) -> bool:
        return self.left_condition.passed and self.right_condition.passed

    def as_dict(self):
        return {"left_condition": self.left_condition.as_dict(),
                "right_condition": self.right_condition.as_dict(),
                "tolerance": self.tolerance, "passed": self.passed()}


@dataclass(frozen=True)
class ThresholdSolution:
    p_star: Optional[float]
    direction: Direction
    h_star: Optional[float]
    value_fn: Optional[Callable]
    certificate: Optional[ThresholdCertificate]
    exists: bool
    diagnostic: str = ""
    problem: Optional[Problem] = field(default=None, repr=False)
    pair: Optional[FundamentalPair] = field(default=None, repr=False)

    def value_grid(self) -> np.ndarray:
        xs = self.problem.grid_points()
        return np.asarray(self.value_fn(xs))


def _golden_max(f: Callable[[float], float], a: float, b: float,
                rel_width: float = GOLDEN_REL_WIDTH) -> float:
    """Golden-section maximization; on ties drifts to the smaller abscissa."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    inv_phi2 = (3.0 - math.sqrt(5.0)) / 2.0
    h = b - a
    scale = max(abs(a), abs(b), 1e-12)
    if h <= rel_width * scale:
        return 0.5 * (a + b)
    n = int(math.ceil(math.log(rel_width * scale / h) / math.log(inv_phi)))
    c = a + inv_phi2 * h
    d = a + inv_phi * h
    yc, yd = f(c), f(d)
    for _ in range(max(n, 1)):
        if yc >= yd:                      # ties keep the left bracket
            b, d, yd = d, c, yc
            h *= inv_phi
            c = a + inv_phi2 * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h *= inv_phi
            d = a + inv_phi * h
            yd = f(d)
    return c if yc >= yd else d


def _polish_argmax(problem: Problem, pair: FundamentalPair,
                   lo: float, hi: float) -> Optional[float]:
    """Bisect the sign change of h'(p)'s numerator inside [lo, hi].

    Value comparisons alone locate an interior maximum only to the square
    root of float precision; the first-order condition recovers the rest.
    Returns None when no clean sign change is available (kinks, plateaus).
    """
    g = problem.payoff.as_differentiable()
    u, du, _ = pair.fundamental(increasing=problem.direction == Direction.L)

    def slope_num(p: float) -> float:
        return g.deriv(p, 1) * u(p) - g(p) * du(p)

    try:
        s_lo, s_hi = slope_num(lo), slope_num(hi)
    except Exception:
        return None
    if not (s_lo > 0.0 > s_hi or s_lo < 0.0 < s_hi):
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        try:
            s_mid = slope_num(mid)
        except Exception:
            return None
        if s_mid == 0.0:
            return mid
        if (s_mid > 0.0) == (s_lo > 0.0):
            lo, s_lo = mid, s_mid
        else:
            hi, s_hi = mid, s_mid
    return 0.5 * (lo + hi)


def _scan_certificate(problem: Problem, pair: FundamentalPair, p_star: float,
                      h_star: float, xs: np.ndarray, hs: np.ndarray) -> ThresholdCertificate:
    tol = CERT_NOISE * max(1.0, abs(h_star))
    if problem.direction == Direction.L:
        pre, post = xs < p_star, xs >= p_star
    else:
        pre, post = xs > p_star, xs <= p_star

    # dominance on the pre side: h(p) <= h(p*)
    if pre.any():
        excess = hs[pre] - h_star
        i = int(np.argmax(excess))
        left = ConditionCheck(passed=bool(excess[i] <= tol),
                              worst_point=float(xs[pre][i]),
                              worst_margin=float(excess[i]))
    else:
        left = ConditionCheck(True, None, 0.0, "empty pre-threshold side")

    # monotone decay away from the threshold on the post side
    xs_post, hs_post = xs[post], hs[post]
    if problem.direction == Direction.R:
        xs_post, hs_post = xs_post[::-1], hs_post[::-1]
    if len(hs_post) >= 2:
        rises = np.diff(hs_post)
        j = int(np.argmax(rises))
        right = ConditionCheck(passed=bool(rises[j] <= tol),
                               worst_point=float(xs_post[j + 1]),
                               worst_margin=float(rises[j]))
    else:
        right = ConditionCheck(True, None, 0.0, "empty post-threshold side")
    return ThresholdCertificate(left_condition=left, right_condition=right,
                                tolerance=tol)


def maximize_h(problem: Problem, pair: FundamentalPair) -> ThresholdSolution:
    """Grid scan plus golden-section refinement of the threshold ratio.

    A maximum pinned to the window edge is reported as non-existence with a
    SupAtBoundary diagnostic rather than clipped to the window.
    """
    xs = problem.grid_points()
    gs = eval_array(problem.payoff.terminal, xs)
    if not (gs > 0).any():
        raise TrivialProblem("payoff is non-positive on the whole working window")
    hs = h_value(problem, pair, xs)

    i = int(np.argmax(hs))             # first maximum: smallest tying p
    if i == 0 or i == len(xs) - 1:
        side = "lower" if i == 0 else "upper"
        still_rising = (hs[-1] > hs[-2]) if i == len(xs) - 1 else (hs[0] > hs[1])
        note = "ratio still increasing toward the window edge" if still_rising \
            else "maximum attained at the window edge (stop-immediately limit)"
        return ThresholdSolution(
            p_star=None, direction=problem.direction, h_star=None, value_fn=None,
            certificate=None, exists=False,
            diagnostic=f"SupAtBoundary[{side}]: {note}",
            problem=problem, pair=pair)

    f = lambda p: h_value(problem, pair, p)
    p_star = _golden_max(f, float(xs[i - 1]), float(xs[i + 1]))
    h_star = f(p_star)
    if h_star < hs[i]:                 # golden never worse than the best node
        p_star, h_star = float(xs[i]), float(hs[i])
    polished = _polish_argmax(problem, pair, float(xs[i - 1]), float(xs[i + 1]))
    if polished is not None and f(polished) >= h_star - CERT_NOISE * max(1.0, abs(h_star)):
        p_star = polished
        h_star = max(h_star, f(polished))

    certificate = _scan_certificate(problem, pair, p_star, h_star, xs, hs)
    value_fn = lambda x: value_at(problem, pair, p_star, x)
    return ThresholdSolution(
        p_star=p_star, direction=problem.direction, h_star=h_star,
        value_fn=value_fn, certificate=certificate, exists=True,
        problem=problem, pair=pair)


# --------------------------------------------------------------------------- #
# Smooth pasting
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class PastingReport:
    """One-sided derivative chain of value vs payoff at the threshold."""
    p_star: float
    value_slope_continuation: float     # h(p*) times the fundamental slope
    payoff_slope_pre: float             # payoff slope from the continuation side
    payoff_slope_stop: float            # payoff slope from the stopping side
    inequalities: tuple                 # (label, lhs, rhs, slack) rows, slack >= 0 expected
    differentiable: bool
    pasting_gap: Optional[float]        # |v' - g'| when g is differentiable at p*

    def holds(self, tol: float = 1e-9) -> bool:
        return all(s >= -tol * max(1.0, abs(l) + abs(r))
                   for (_, l, r, s) in self.inequalities)

    def as_dict(self):
        return {"p_star": self.p_star,
                "value_slope_continuation": self.value_slope_continuation,
                "payoff_slope_pre": self.payoff_slope_pre,
                "payoff_slope_stop": self.payoff_slope_stop,
                "inequalities": [list(row) for row in self.inequalities],
                "differentiable": self.differentiable,
                "pasting_gap": self.pasting_gap}


def smooth_pasting_report(problem: Problem, solution: ThresholdSolution) -> PastingReport:
    """Evaluate the generalized smooth-pasting inequality chain at p*."""
    if not solution.exists:
        raise ValueError("no threshold solution; nothing to paste")
    p = solution.p_star
    pair = solution.pair
    g = problem.payoff.as_differentiable()
    # a refined optimum sitting within root tolerance of a declared kink is
    # the kink; evaluate the one-sided chain exactly there
    for k in g.kinks:
        if abs(p - k) <= 1e-7 * max(1.0, abs(k)):
            p = k
            break
    g_left = g.deriv(p, 1, side=-1)
    g_right = g.deriv(p, 1, side=+1)

    if problem.direction == Direction.L:
        v_cont = solution.h_star * pair.dpsi(p)
        # g'(p*+0) = v'(p*+0) <= v'(p*-0) <= g'(p*-0)
        rows = (
            ("v'(p*-0) - v'(p*+0)", v_cont, g_right, v_cont - g_right),
            ("g'(p*-0) - v'(p*-0)", g_left, v_cont, g_left - v_cont),
        )
        pre_slope, stop_slope = g_left, g_right
    else:
        v_cont = solution.h_star * pair.dphi(p)
        # g'(p*+0) <= v'(p*+0) <= v'(p*-0) = g'(p*-0)
        rows = (
            ("v'(p*+0) - g'(p*+0)", v_cont, g_right, v_cont - g_right),
            ("v'(p*-0) - v'(p*+0)", g_left, v_cont, g_left - v_cont),
        )
        pre_slope, stop_slope = g_right, g_left

    differentiable = not g.is_kink(p)
    gap = abs(v_cont - g.deriv(p, 1)) if differentiable else None
    return PastingReport(
        p_star=p, value_slope_continuation=v_cont,
        payoff_slope_pre=pre_slope, payoff_slope_stop=stop_slope,
        inequalities=rows, differentiable=differentiable, pasting_gap=gap)


# --------------------------------------------------------------------------- #
# CSV emitters
# --------------------------------------------------------------------------- #

def h_sweep_csv(problem: Problem, pair: FundamentalPair, fh) -> None:
    xs = problem.grid_points()
    hs = h_value(problem, pair, xs)
    fh.write("p,h\n")
    for p, h in zip(xs, hs):
        fh.write(f"{p:.17g},{h:.17g}\n")


def value_table_csv(solution: ThresholdSolution, fh) -> None:
    problem = solution.problem
    xs = problem.grid_points()
    vs = solution.value_fn(xs)
    gs = eval_array(problem.payoff.terminal, xs)
    fh.write("x,value,payoff\n")
    for x, v, g in zip(xs, vs, gs):
        fh.write(f"{x:.17g},{v:.17g},{g:.17g}\n")


def h_sweep_text(problem: Problem, pair: FundamentalPair) -> str:
    buf = io.StringIO()
    h_sweep_csv(problem, pair, buf)
    return buf.getvalue()
