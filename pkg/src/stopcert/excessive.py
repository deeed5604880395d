"""Excessivity certificates: from threshold-class optimality to all stopping times.

The payoff restricted to the stopped side must be discount-excessive for the
absorbed process.  Operationally that is three checks: the generator
inequality L g <= rho g almost everywhere on the stopped side, non-positive
derivative jumps at kinks there, and a non-positive pasting atom at the
threshold itself.  A measure scan of the same structure is exposed for
arbitrary difference-of-convex candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .diffusion import Direction, Problem
from .errors import NotDCRepresentable
from .expressions import Differentiable, as_differentiable, eval_array, fd_one_sided
from .fundsol import FundamentalPair
from .threshold import ConditionCheck, ThresholdSolution

GEN_TOL = 1e-9
JUMP_HEURISTIC = 1e-4


class Verdict(str, Enum):
    EXCESSIVE = "excessive"
    NOT_EXCESSIVE = "not-excessive"
    INCONCLUSIVE = "inconclusive"


class GlobalVerdict(str, Enum):
    GLOBALLY_OPTIMAL = "globally-optimal"
    NOT_GLOBALLY_OPTIMAL = "not-globally-optimal"
    INCONCLUSIVE = "inconclusive"
    NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class KinkCheck:
    location: float
    jump: float          # g'(a+0) - g'(a-0)
    ok: bool

    def as_dict(self):
        return {"location": self.location, "jump": self.jump, "ok": self.ok}


@dataclass(frozen=True)
class ExcessivityReport:
    direction: Direction
    p_star: float
    generator_condition: ConditionCheck
    kink_condition: Tuple[KinkCheck, ...]
    nonnegativity_condition: ConditionCheck
    pasting_measure_at_pstar: float
    pasting_measure_ok: bool
    verdict: Verdict
    notes: Tuple[str, ...] = ()

    def as_dict(self):
        return {
            "direction": self.direction.value,
            "p_star": self.p_star,
            "generator_condition": self.generator_condition.as_dict(),
            "kink_condition": [k.as_dict() for k in self.kink_condition],
            "nonnegativity_condition": self.nonnegativity_condition.as_dict(),
            "pasting_measure_at_pstar": self.pasting_measure_at_pstar,
            "pasting_measure_ok": self.pasting_measure_ok,
            "verdict": self.verdict.value,
            "notes": list(self.notes),
        }


def _post_side_points(problem: Problem, p_star: float) -> np.ndarray:
    xs = problem.grid_points()
    if problem.direction == Direction.L:
        return xs[xs > p_star]
    return xs[xs < p_star]


def _away_from_kinks(xs: np.ndarray, kinks: Sequence[float], margin: float) -> np.ndarray:
    keep = np.ones(len(xs), dtype=bool)
    for k in kinks:
        keep &= np.abs(xs - k) > margin
    return keep


def _slope_gap(g, m: float, s: float) -> float:
    """Difference of the secant slopes on (m-s, m) and (m, m+s)."""
    gl = float(g(m - s))
    gm = float(g(m))
    gr = float(g(m + s))
    return (gr - gm) / s - (gm - gl) / s


def _peak_gap(g, m: float, s: float, t: float) -> float:
    """Largest secant-slope gap at scale t over sliding centers covering (m-s, m+s)."""
    k_max = int(math.ceil(2.0 * s / t))
    return max(abs(_slope_gap(g, m + j * 0.5 * t, t))
               for j in range(-k_max, k_max + 1))


def _confirm_kink(g, a: float, b: float, thresh: float) -> bool:
    """Decide whether a slope-jump spike inside (a, b) is a genuine kink.

    A derivative jump keeps its peak secant-slope gap under scale reduction,
    while curvature (or a curvature break) shrinks it proportionally to the
    scale; a factor-four reduction separates the two cleanly.
    """
    m, s = 0.5 * (a + b), 0.5 * (b - a)
    full = _peak_gap(g, m, s, s)
    quarter = _peak_gap(g, m, s, 0.25 * s)
    return quarter > thresh and quarter > 0.5 * full


def _suspect_kinks(g, xs: np.ndarray, values: np.ndarray,
                   declared: Sequence[float], cap: int = 16) -> list:
    """Undeclared-kink heuristic: slope-jump spikes that survive scale halving."""
    if len(xs) < 7:
        return []
    dx = float(xs[1] - xs[0])
    slopes = np.diff(values) / dx
    dslopes = np.diff(slopes)
    spikes = np.abs(dslopes[1:-1] - 0.5 * (dslopes[:-2] + dslopes[2:]))
    centers = xs[2:-2]
    thresh = JUMP_HEURISTIC * (1.0 + np.abs(slopes[1:-2]))
    flagged = spikes > thresh
    for k in declared:
        flagged &= np.abs(centers - k) > 2.5 * dx
    found = []
    for i in np.flatnonzero(flagged)[: 4 * cap]:
        a, b = float(centers[i] - dx), float(centers[i] + dx)
        if found and a <= found[-1] + dx:
            continue
        if _confirm_kink(g, a, b, float(thresh[i])):
            found.append(float(centers[i]))
            if len(found) >= cap:
                break
    return found


def _generator_gap_values(problem: Problem, g: Differentiable, xs: np.ndarray) -> np.ndarray:
    """L g - rho g on an array of smooth points."""
    a = eval_array(problem.process.drift, xs)
    s2 = eval_array(problem.process.diffusion, xs) ** 2
    if g.expr is not None:
        g0 = eval_array(g.expr, xs)
        g1 = eval_array(g.expr.deriv(1), xs)
        g2 = eval_array(g.expr.deriv(2), xs)
    else:
        g0 = eval_array(g.fn, xs)
        g1 = np.array([g.deriv(float(x), 1) for x in xs])
        g2 = np.array([g.deriv(float(x), 2) for x in xs])
    return a * g1 + 0.5 * s2 * g2 - problem.discount * g0


def check_excessivity_conditions(problem: Problem, pair: FundamentalPair,
                                 p_star: float) -> ExcessivityReport:
    """Evaluate the excessivity conditions of the payoff on the stopped side."""
    g = problem.payoff.as_differentiable()
    xs_post = _post_side_points(problem, p_star)
    dx = float(problem.grid_points()[1] - problem.grid_points()[0])
    notes = []

    # kink-detection heuristic: undeclared derivative jumps force Inconclusive
    smooth_mask = _away_from_kinks(xs_post, g.kinks, 0.51 * dx)
    xs_smooth = xs_post[smooth_mask]
    inconclusive_points = []
    if len(xs_post) >= 7:
        g_post = eval_array(g.fn, xs_post)
        inconclusive_points = _suspect_kinks(g.fn, xs_post, g_post, g.kinks)
        if inconclusive_points:
            notes.append(f"possible undeclared kinks near {inconclusive_points}")

    # generator inequality, almost everywhere in the width-threshold sense
    gen_tol = GEN_TOL if g.max_analytic_order() >= 2 else 1e-6
    if len(xs_smooth):
        gaps = _generator_gap_values(problem, g, xs_smooth)
        scale = np.maximum(1.0, np.abs(eval_array(g.fn, xs_smooth)))
        viol = gaps > gen_tol * scale
        n_viol = int(viol.sum())
        if n_viol:
            i = int(np.argmax(gaps / scale))
            worst_pt, worst = float(xs_smooth[i]), float(gaps[i])
        else:
            i = int(np.argmax(gaps / scale))
            worst_pt, worst = float(xs_smooth[i]), float(gaps[i])
        gen_pass = n_viol * dx <= dx  # at most one grid point: Lebesgue-null width
        gen = ConditionCheck(passed=bool(gen_pass), worst_point=worst_pt,
                             worst_margin=worst,
                             note=f"{n_viol} violating grid points")
    else:
        gen = ConditionCheck(True, None, 0.0, "empty stopped side")

    # declared kink jumps on the stopped side; the pass tolerance scales with
    # the one-sided slopes because differenced jumps carry their noise
    kink_checks = []
    post_kinks = [k for k in g.kinks
                  if (k > p_star if problem.direction == Direction.L else k < p_star)]
    for k in post_kinks:
        d_right = g.deriv(k, 1, side=+1)
        d_left = g.deriv(k, 1, side=-1)
        jump = d_right - d_left
        tol_k = 1e-6 * (1.0 + abs(d_right) + abs(d_left))
        kink_checks.append(KinkCheck(location=k, jump=jump, ok=bool(jump <= tol_k)))

    # payoff nonnegativity on the stopped side
    if len(xs_post):
        gvals = eval_array(g.fn, xs_post)
        j = int(np.argmin(gvals))
        nonneg = ConditionCheck(passed=bool(gvals[j] >= -GEN_TOL * max(1.0, abs(gvals[j]))),
                                worst_point=float(xs_post[j]), worst_margin=float(-gvals[j]))
    else:
        nonneg = ConditionCheck(True, None, 0.0, "empty stopped side")

    # pasting atom at the threshold
    s2p = problem.sigma2(p_star)
    if problem.direction == Direction.L:
        h_star = float(g.fn(p_star)) / pair.psi(p_star)
        atom = 0.5 * s2p * (g.deriv(p_star, 1, side=+1) - h_star * pair.dpsi(p_star))
    else:
        h_star = float(g.fn(p_star)) / pair.phi(p_star)
        atom = 0.5 * s2p * (h_star * pair.dphi(p_star) - g.deriv(p_star, 1, side=-1))
    atom_scale = 0.5 * s2p * max(1.0, abs(h_star))
    atom_ok = atom <= GEN_TOL * max(1.0, atom_scale)

    if inconclusive_points:
        verdict = Verdict.INCONCLUSIVE
    elif gen.passed and all(k.ok for k in kink_checks) and nonneg.passed and atom_ok:
        verdict = Verdict.EXCESSIVE
    else:
        verdict = Verdict.NOT_EXCESSIVE
    return ExcessivityReport(
        direction=problem.direction, p_star=p_star, generator_condition=gen,
        kink_condition=tuple(kink_checks), nonnegativity_condition=nonneg,
        pasting_measure_at_pstar=float(atom), pasting_measure_ok=bool(atom_ok),
        verdict=verdict, notes=tuple(notes))


@dataclass(frozen=True)
class GlobalOptimalityResult:
    verdict: GlobalVerdict
    excessivity: Optional[ExcessivityReport]
    solution: Optional[ThresholdSolution]
    value_description: str = ""
    notes: Tuple[str, ...] = ()

    def as_dict(self):
        return {"verdict": self.verdict.value,
                "excessivity": self.excessivity.as_dict() if self.excessivity else None,
                "value_description": self.value_description,
                "notes": list(self.notes)}


def verify_global_optimality(problem: Problem,
                             solution: ThresholdSolution) -> GlobalOptimalityResult:
    """Combine the threshold-class certificate with the excessivity conditions."""
    if not solution.exists:
        return GlobalOptimalityResult(
            verdict=GlobalVerdict.NOT_APPLICABLE, excessivity=None, solution=solution,
            notes=(f"no threshold optimum: {solution.diagnostic}",))
    if solution.certificate is None or not solution.certificate.passed():
        return GlobalOptimalityResult(
            verdict=GlobalVerdict.NOT_APPLICABLE, excessivity=None, solution=solution,
            notes=("threshold-class certificate failed; nothing to upgrade",))

    report = check_excessivity_conditions(problem, solution.pair, solution.p_star)
    side = "below" if problem.direction == Direction.L else "above"
    fund = "increasing" if problem.direction == Direction.L else "decreasing"
    desc = (f"U(x) = h(p*) * {fund}-solution(x) {side} p* = {solution.p_star:.12g}, "
            f"payoff g(x) on the stopped side")

    if report.verdict == Verdict.INCONCLUSIVE:
        verdict = GlobalVerdict.INCONCLUSIVE
    elif not report.nonnegativity_condition.passed:
        # the stopped-side nonnegativity hypothesis fails; neither direction is decided
        verdict = GlobalVerdict.INCONCLUSIVE
    elif report.verdict == Verdict.EXCESSIVE:
        verdict = GlobalVerdict.GLOBALLY_OPTIMAL
    else:
        verdict = GlobalVerdict.NOT_GLOBALLY_OPTIMAL
    return GlobalOptimalityResult(verdict=verdict, excessivity=report,
                                  solution=solution, value_description=desc)


# --------------------------------------------------------------------------- #
# Measure scan for difference-of-convex candidates
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class MeasureScanReport:
    density_points: np.ndarray
    density_values: np.ndarray
    density_ok: bool
    atoms: Tuple[KinkCheck, ...]
    lsc_checks: Tuple[ConditionCheck, ...]
    nonpositive: bool
    notes: Tuple[str, ...] = ()


def excessivity_measure_scan(problem: Problem, F, kinks: Sequence[float] = (),
                             grid: Optional[np.ndarray] = None,
                             alternation_cap: int = 64) -> MeasureScanReport:
    """Sign scan of the measure (sigma^2/2) F''(dx) + a F'(x-0) dx - rho F dx.

    The absolutely continuous density is evaluated at smooth grid points with
    the left-limit first derivative; derivative jumps at declared kinks enter
    as atoms weighted by sigma^2/2.  Included finite endpoints are treated as
    absorbing and checked for lower semicontinuity.
    """
    Fd = as_differentiable(F, kinks=kinks)
    xs = problem.grid_points() if grid is None else np.asarray(grid, dtype=float)
    dx = float(xs[1] - xs[0]) if len(xs) > 1 else 1.0
    notes = []

    jumps = []
    jump_scales = []
    for k in Fd.kinks:
        d_right = Fd.deriv(k, 1, side=+1)
        d_left = Fd.deriv(k, 1, side=-1)
        jump = d_right - d_left
        if not math.isfinite(jump):
            raise NotDCRepresentable(f"derivative jump at {k} is not finite")
        jumps.append(jump)
        jump_scales.append(1.0 + abs(d_right) + abs(d_left))
    signif = [j for j in jumps if abs(j) > 1e-12]
    alternations = sum(1 for a, b in zip(signif, signif[1:]) if a * b < 0)
    if alternations > alternation_cap:
        raise NotDCRepresentable(
            f"{alternations} alternating derivative jumps exceed the cap")

    keep = _away_from_kinks(xs, Fd.kinks, 0.51 * dx)
    xs_smooth = xs[keep]
    a = eval_array(problem.process.drift, xs_smooth)
    s2 = eval_array(problem.process.diffusion, xs_smooth) ** 2
    F0 = eval_array(Fd.fn, xs_smooth)
    if Fd.expr is not None:
        F1 = eval_array(Fd.expr.deriv(1), xs_smooth)
        F2 = eval_array(Fd.expr.deriv(2), xs_smooth)
    else:
        F1 = np.array([fd_one_sided(Fd.fn, float(x), -1) for x in xs_smooth])
        F2 = np.array([Fd.deriv(float(x), 2) for x in xs_smooth])
    density = 0.5 * s2 * F2 + a * F1 - problem.discount * F0

    scale = np.maximum(1.0, np.abs(F0))
    density_tol = GEN_TOL if Fd.max_analytic_order() >= 2 else 1e-6
    viol = density > density_tol * scale
    density_ok = bool(viol.sum() * dx <= dx)

    atoms = []
    for k, j, jsc in zip(Fd.kinks, jumps, jump_scales):
        mass = 0.5 * problem.sigma2(k) * j
        tol_k = 1e-6 * 0.5 * problem.sigma2(k) * jsc
        atoms.append(KinkCheck(location=k, jump=mass, ok=bool(mass <= tol_k)))
    atoms = tuple(atoms)

    lsc_checks = []
    dom = problem.process.domain
    for endpoint, included in ((dom.l, dom.l_included), (dom.r, dom.r_included)):
        if included and math.isfinite(endpoint):
            try:
                f_end = float(Fd.fn(endpoint))
            except Exception:
                lsc_checks.append(ConditionCheck(False, endpoint, float("nan"),
                                                 "endpoint not evaluable"))
                continue
            near = xs[np.argsort(np.abs(xs - endpoint))[:5]]
            f_near = float(np.min(eval_array(Fd.fn, near)))
            ok = f_end <= f_near + GEN_TOL * max(1.0, abs(f_near))
            lsc_checks.append(ConditionCheck(bool(ok), endpoint, f_end - f_near,
                                             "lower semicontinuity at absorbing endpoint"))

    nonpositive = density_ok and all(at.ok for at in atoms) and \
        all(c.passed for c in lsc_checks)
    return MeasureScanReport(
        density_points=xs_smooth, density_values=density, density_ok=density_ok,
        atoms=atoms, lsc_checks=tuple(lsc_checks), nonpositive=bool(nonpositive),
        notes=tuple(notes))
