"""Packaged applications: investment timing and abandonment thresholds.

Investment stops on an upcrossing with payoff x - I and is verified against
its own three conditions (payoff comparison, pasting identity, drift bound)
rather than the generic excessivity route, because the linear payoff is
negative below the cost.  Abandonment folds the revenue flow into a terminal
problem through the Green representation and stops on a downcrossing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .diffusion import GBM, Direction, DiffusionSpec, GridSpec, PayoffSpec, Problem
from .errors import NumericalError, SchemaError, TrivialProblem
from .expressions import Expression, X, eval_array
from .fundsol import FundamentalPair, beta_roots, fundamental_pair
from .green import (GreenDecomposition, IntegralCertificate, IntegralReduction,
                    green_decompose, reduce_integral_problem, verify_integral_optimality)
from .threshold import ConditionCheck, ThresholdSolution, maximize_h

IDENTITY_TOL = 1e-8
SCAN_TOL = 1e-9


# --------------------------------------------------------------------------- #
# Investment timing
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class InvestmentProblem:
    cost_I: float
    process: DiffusionSpec
    discount: float
    grid: Optional[GridSpec] = None

    def __post_init__(self):
        if self.cost_I < 0:
            raise SchemaError("investment cost must be nonnegative")
        if not self.cost_I < self.process.domain.r:
            raise SchemaError("investment cost at or above the upper state bound: "
                              "waiting forever is optimal and no threshold exists")


@dataclass(frozen=True)
class InvestmentCertificate:
    """Direct checks of the three investment-threshold conditions."""
    p_star: float
    comparison_condition: ConditionCheck   # (p-I) psi(p*) <= (p*-I) psi(p) below p*
    pasting_identity: ConditionCheck       # psi(p*) = (p*-I) psi'(p*)
    drift_condition: ConditionCheck        # a(p) <= rho (p-I) above p*

    def passed(self) -> bool:
        return (self.comparison_condition.passed and self.pasting_identity.passed
                and self.drift_condition.passed)

    def as_dict(self):
        return {"p_star": self.p_star,
                "comparison_condition": self.comparison_condition.as_dict(),
                "pasting_identity": self.pasting_identity.as_dict(),
                "drift_condition": self.drift_condition.as_dict(),
                "passed": self.passed()}


@dataclass(frozen=True)
class InvestmentResult:
    problem: Problem
    solution: ThresholdSolution
    certificate: Optional[InvestmentCertificate]
    closed_form: Optional[float]
    pair: FundamentalPair = field(repr=False, default=None)


def gbm_investment_threshold(alpha: float, sigma: float, rho: float, cost: float) -> float:
    """beta/(beta-1) * I with beta the positive characteristic root."""
    if rho <= alpha:
        raise ValueError("needs rho > alpha for a finite threshold")
    beta, _ = beta_roots(alpha, sigma, rho)
    return beta / (beta - 1.0) * cost


def _investment_payoff(cost: float) -> PayoffSpec:
    return PayoffSpec(terminal=Expression(X - cost))


def investment_problem(ip: InvestmentProblem) -> Problem:
    grid = ip.grid if ip.grid is not None else GridSpec(reference=max(ip.cost_I, 1.0))
    return Problem(process=ip.process, payoff=_investment_payoff(ip.cost_I),
                   discount=ip.discount, direction=Direction.L, grid=grid)


def solve_investment(ip: InvestmentProblem,
                     pair: Optional[FundamentalPair] = None) -> InvestmentResult:
    """Maximize the investment ratio and verify the threshold conditions."""
    problem = investment_problem(ip)
    if pair is None:
        pair = fundamental_pair(problem)
    solution = maximize_h(problem, pair)

    closed = None
    tag = ip.process.catalog_tag
    if isinstance(tag, GBM) and ip.discount > tag.alpha:
        closed = gbm_investment_threshold(tag.alpha, tag.sigma, ip.discount, ip.cost_I)

    if not solution.exists:
        return InvestmentResult(problem=problem, solution=solution,
                                certificate=None, closed_form=closed, pair=pair)

    p_star = solution.p_star
    if not p_star > ip.cost_I:
        raise NumericalError(f"threshold {p_star} does not exceed the cost {ip.cost_I}")
    xs = problem.grid_points()
    psi = pair.psi_values
    I = ip.cost_I

    below = xs < p_star
    lhs = (xs[below] - I) * pair.psi(p_star)
    rhs = (p_star - I) * psi[below]
    margin = lhs - rhs
    if len(margin):
        i = int(np.argmax(margin))
        comparison = ConditionCheck(
            passed=bool(margin[i] <= SCAN_TOL * max(1.0, abs(rhs[i]))),
            worst_point=float(xs[below][i]), worst_margin=float(margin[i]))
    else:
        comparison = ConditionCheck(True, None, 0.0, "empty lower side")

    lhs_p = pair.psi(p_star)
    rhs_p = (p_star - I) * pair.dpsi(p_star)
    scale_p = max(1.0, abs(lhs_p), abs(rhs_p))
    pasting = ConditionCheck(passed=bool(abs(lhs_p - rhs_p) <= IDENTITY_TOL * scale_p),
                             worst_point=p_star, worst_margin=float(abs(lhs_p - rhs_p)))

    above = xs > p_star
    a_vals = eval_array(problem.process.drift, xs[above])
    drift_margin = a_vals - ip.discount * (xs[above] - I)
    if len(drift_margin):
        j = int(np.argmax(drift_margin))
        drift = ConditionCheck(
            passed=bool(drift_margin[j] <= SCAN_TOL * max(1.0, abs(ip.discount * (xs[above][j] - I)))),
            worst_point=float(xs[above][j]), worst_margin=float(drift_margin[j]))
    else:
        drift = ConditionCheck(True, None, 0.0, "empty upper side")

    cert = InvestmentCertificate(p_star=p_star, comparison_condition=comparison,
                                 pasting_identity=pasting, drift_condition=drift)
    return InvestmentResult(problem=problem, solution=solution, certificate=cert,
                            closed_form=closed, pair=pair)


# --------------------------------------------------------------------------- #
# Abandonment
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class AbandonmentProblem:
    flow: Callable[[float], float]
    abandonment_cost_L: float
    process: DiffusionSpec
    discount: float
    grid: Optional[GridSpec] = None

    def __post_init__(self):
        if self.abandonment_cost_L < 0:
            raise SchemaError("abandonment cost must be nonnegative")


@dataclass(frozen=True)
class BreakevenDiagnostic:
    flow_at_pstar: float
    revenue_negative: bool                  # g1(p*) < 0
    unit_cost: Optional[float]              # c when the flow is exactly x - c
    below_unit_cost: Optional[bool]         # p* < c
    below_gbm_bound: Optional[bool]         # p* < c - rho L (GBM closed-form bound)

    def as_dict(self):
        return {"flow_at_pstar": self.flow_at_pstar,
                "revenue_negative": self.revenue_negative,
                "unit_cost": self.unit_cost,
                "below_unit_cost": self.below_unit_cost,
                "below_gbm_bound": self.below_gbm_bound}


@dataclass(frozen=True)
class AbandonmentResult:
    problem: Problem
    reduction: IntegralReduction
    solution: ThresholdSolution
    certificate: Optional[IntegralCertificate]
    breakeven: Optional[BreakevenDiagnostic]
    closed_form: Optional[float]
    decomposition: GreenDecomposition = field(repr=False, default=None)
    pair: FundamentalPair = field(repr=False, default=None)


def gbm_abandonment_threshold(alpha: float, sigma: float, rho: float,
                              c: float, L: float) -> float:
    """beta1/(beta1-1) * (rho-alpha)/rho * (c - rho L), beta1 the negative root."""
    if not c > rho * L:
        raise ValueError("needs c > rho L for an interior abandonment threshold")
    _, beta1 = beta_roots(alpha, sigma, rho)
    return beta1 / (beta1 - 1.0) * (rho - alpha) / rho * (c - rho * L)


def _linear_unit_cost(flow) -> Optional[float]:
    """c when the flow is x - c (slope one), detected by evaluation."""
    try:
        c1 = 1.0 - float(flow(1.0))
        c2 = 2.0 - float(flow(2.0))
        c3 = 3.5 - float(flow(3.5))
    except Exception:
        return None
    if abs(c1 - c2) <= 1e-10 * max(1.0, abs(c1)) and \
       abs(c1 - c3) <= 1e-10 * max(1.0, abs(c1)):
        return c1
    return None


def abandonment_problem(ap: AbandonmentProblem) -> Problem:
    c = _linear_unit_cost(ap.flow)
    ref = c if (c is not None and c > 0) else 1.0
    grid = ap.grid if ap.grid is not None else GridSpec(reference=ref)
    payoff = PayoffSpec(terminal=Expression(-float(ap.abandonment_cost_L) + 0 * X),
                        flow=ap.flow)
    return Problem(process=ap.process, payoff=payoff, discount=ap.discount,
                   direction=Direction.R, grid=grid)


def solve_abandonment(ap: AbandonmentProblem,
                      pair: Optional[FundamentalPair] = None) -> AbandonmentResult:
    """Reduce the flow problem, maximize the downcrossing ratio, verify, diagnose."""
    problem = abandonment_problem(ap)
    if pair is None:
        pair = fundamental_pair(problem)
    decomposition = green_decompose(problem, pair)
    reduction = reduce_integral_problem(problem, pair, decomposition)
    solution = maximize_h(reduction.problem, pair)

    tag = ap.process.catalog_tag
    c = _linear_unit_cost(ap.flow)
    closed = None
    if isinstance(tag, GBM) and tag.alpha < 0 and c is not None \
            and c > ap.discount * ap.abandonment_cost_L:
        closed = gbm_abandonment_threshold(tag.alpha, tag.sigma, ap.discount,
                                           c, ap.abandonment_cost_L)

    if not solution.exists:
        return AbandonmentResult(problem=problem, reduction=reduction,
                                 solution=solution, certificate=None,
                                 breakeven=None, closed_form=closed,
                                 decomposition=decomposition, pair=pair)

    p_star = solution.p_star
    certificate = verify_integral_optimality(problem, decomposition, p_star)

    g1_at = float(ap.flow(p_star))
    below_gbm = None
    if isinstance(tag, GBM) and c is not None:
        below_gbm = bool(p_star < c - ap.discount * ap.abandonment_cost_L)
    breakeven = BreakevenDiagnostic(
        flow_at_pstar=g1_at, revenue_negative=bool(g1_at < 0), unit_cost=c,
        below_unit_cost=None if c is None else bool(p_star < c),
        below_gbm_bound=below_gbm)
    return AbandonmentResult(problem=problem, reduction=reduction, solution=solution,
                             certificate=certificate, breakeven=breakeven,
                             closed_form=closed, decomposition=decomposition,
                             pair=pair)


# --------------------------------------------------------------------------- #
# Comparative statics
# --------------------------------------------------------------------------- #

def default_sigma_grid(n: int = 21, lo: float = 0.1, hi: float = 0.8) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def volatility_sweep(base, sigmas: Optional[Sequence[float]] = None
                     ) -> Tuple[Tuple[float, Optional[float]], ...]:
    """Threshold as a function of volatility, one row per sigma.

    Works on catalog GBM problems; each cell is an independent solve and a
    missing threshold is recorded as None rather than an error.
    """
    tag = base.process.catalog_tag
    if not isinstance(tag, GBM):
        raise SchemaError("volatility sweeps require a GBM-tagged process")
    if sigmas is None:
        sigmas = default_sigma_grid()
    rows = []
    for s in sigmas:
        proc = DiffusionSpec.gbm(tag.alpha, float(s))
        try:
            if isinstance(base, InvestmentProblem):
                res = solve_investment(InvestmentProblem(
                    cost_I=base.cost_I, process=proc, discount=base.discount,
                    grid=base.grid))
            elif isinstance(base, AbandonmentProblem):
                res = solve_abandonment(AbandonmentProblem(
                    flow=base.flow, abandonment_cost_L=base.abandonment_cost_L,
                    process=proc, discount=base.discount, grid=base.grid))
            else:
                raise SchemaError(f"cannot sweep {type(base).__name__}")
            rows.append((float(s), res.solution.p_star if res.solution.exists else None))
        except TrivialProblem:
            rows.append((float(s), None))
    return tuple(rows)


def sweep_csv(rows, fh) -> None:
    fh.write("sigma,p_star\n")
    for s, p in rows:
        p_txt = format(p, ".17g") if p is not None else "nan"
        fh.write(f"{s:.17g},{p_txt}\n")
