"""Command-line driver: solve, verify, fbp, green, invest, abandon, mc-check, sweep.

Exit codes: 0 success with passing certificates; 2 the mathematics says no
(no optimal threshold, failed or inconclusive certificate, divergent Green
integral); 1 crashes and schema violations.  Every run writes a manifest
listing its inputs' digest, resolved parameters and output files; reruns
with identical inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .diffusion import DiffusionSpec, Problem
from .errors import (ConfigError, GreenDivergence, HypothesisFailed, SchemaError,
                     StopcertError, TrivialProblem)
from .excessive import GlobalVerdict, verify_global_optimality
from .expressions import Expression
from .fbp import analyze as fbp_analyze
from .fbp import stationarity_csv
from .fundsol import fundamental_pair
from .green import green_decompose
from .mcsim import MCConfig, Scheme, estimate_integral_value, estimate_threshold_value
from .problemfile import load_problem
from .realopt import (AbandonmentProblem, InvestmentProblem, default_sigma_grid,
                      solve_abandonment, solve_investment, sweep_csv,
                      volatility_sweep)
from .reporting import fmt17, render_json, render_text
from .threshold import h_sweep_csv, maximize_h, smooth_pasting_report, value_table_csv


class _Run:
    """Collects outputs and writes the manifest for one CLI invocation."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.outdir = args.output_dir
        self.json_report = bool(getattr(args, "json_report", False))
        self.args = args
        self.outputs: list[str] = []
        os.makedirs(self.outdir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.outdir, name)

    def write_text(self, name: str, text: str) -> None:
        with open(self.path(name), "w") as fh:
            fh.write(text)
        self.outputs.append(name)

    def write_report(self, stem: str, doc: dict) -> None:
        if self.json_report:
            self.write_text(f"{stem}.json", render_json(doc))
        else:
            self.write_text(f"{stem}.txt", render_text(doc) + "\n")

    def write_csv(self, name: str, producer) -> None:
        buf = io.StringIO()
        producer(buf)
        self.write_text(name, buf.getvalue())

    def finish(self) -> None:
        params = {}
        for k, v in sorted(vars(self.args).items()):
            if k in ("func",):
                continue
            params[k] = v
        problem_path = getattr(self.args, "problem", None)
        if problem_path:
            digest = hashlib.sha256(open(problem_path, "rb").read()).hexdigest()
        else:
            digest = hashlib.sha256(
                json.dumps(params, sort_keys=True, default=str).encode()).hexdigest()
        manifest = {
            "command": self.command,
            "problem_digest": digest,
            "parameters": params,
            "tool_version": __version__,
            "outputs": sorted(self.outputs + [f"{self.command}_manifest.json"]),
        }
        with open(self.path(f"{self.command}_manifest.json"), "w") as fh:
            fh.write(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _solution_doc(problem: Problem, solution, pasting=None, global_result=None) -> dict:
    doc: dict = {"direction": problem.direction.value,
                 "discount": problem.discount,
                 "window": list(problem.window()),
                 "exists": solution.exists}
    if solution.exists:
        doc["p_star"] = solution.p_star
        doc["h_star"] = solution.h_star
        doc["certificate"] = solution.certificate.as_dict()
    else:
        doc["diagnostic"] = solution.diagnostic
    if pasting is not None:
        doc["smooth_pasting"] = pasting.as_dict()
    if global_result is not None:
        doc["global_optimality"] = global_result.as_dict()
    return doc


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #

def _cmd_solve(args) -> int:
    run = _Run("solve", args)
    problem = load_problem(args.problem)
    pair = fundamental_pair(problem)
    solution = maximize_h(problem, pair)
    if not solution.exists:
        run.write_report("solve_report", _solution_doc(problem, solution))
        run.finish()
        print(f"no optimal threshold: {solution.diagnostic}")
        return 2
    pasting = smooth_pasting_report(problem, solution)
    global_result = verify_global_optimality(problem, solution)
    run.write_report("solve_report",
                     _solution_doc(problem, solution, pasting, global_result))
    run.write_csv("h_sweep.csv", lambda fh: h_sweep_csv(problem, pair, fh))
    run.write_csv("value_table.csv", lambda fh: value_table_csv(solution, fh))
    run.write_csv("fundamental_pair.csv", lambda fh: pair.dump_csv(problem, fh))
    run.finish()
    ok = solution.certificate.passed()
    print(f"p* = {fmt17(solution.p_star)}  h* = {fmt17(solution.h_star)}  "
          f"certificate: {'pass' if ok else 'FAIL'}  "
          f"global: {global_result.verdict.value}")
    return 0 if ok else 2


def _cmd_verify(args) -> int:
    run = _Run("verify", args)
    problem = load_problem(args.problem)
    pair = fundamental_pair(problem)
    solution = maximize_h(problem, pair)
    global_result = verify_global_optimality(problem, solution)
    doc = _solution_doc(problem, solution, None, global_result)
    run.write_report("verify_report", doc)
    run.finish()
    print(f"global optimality: {global_result.verdict.value}")
    return 0 if global_result.verdict == GlobalVerdict.GLOBALLY_OPTIMAL else 2


def _cmd_fbp(args) -> int:
    run = _Run("fbp", args)
    problem = load_problem(args.problem)
    pair = fundamental_pair(problem)
    report = fbp_analyze(problem, pair)
    run.write_report("fbp_report", report.as_dict())
    run.write_csv("stationarity.csv", lambda fh: stationarity_csv(problem, pair, fh))
    run.finish()
    pts = ", ".join(fmt17(p.p_bar) for p in report.stationary_points) or "none"
    sel = (fmt17(report.stationary_points[report.selected].p_bar)
           if report.selected is not None else "none")
    print(f"stationary points: [{pts}]  selected: {sel}")
    return 0 if report.selected is not None else 2


def _cmd_green(args) -> int:
    run = _Run("green", args)
    problem = load_problem(args.problem)
    if problem.payoff.flow is None:
        raise SchemaError("green needs a problem with a flow payoff g1")
    pair = fundamental_pair(problem)
    dec = green_decompose(problem, pair)
    res = dec.resolvent_residual()
    doc = {"wronskian_B": dec.B,
           "tails": [t.as_dict() for t in dec.tails],
           "max_resolvent_residual": float(np.max(np.abs(res))),
           "grid_points": len(dec.x)}
    run.write_report("green_report", doc)
    run.write_csv("green_table.csv", dec.dump_csv)
    run.finish()
    print(f"R assembled; max residual {fmt17(float(np.max(np.abs(res))))}")
    return 0


def _process_from_args(args) -> tuple:
    if getattr(args, "problem", None):
        prob = load_problem(args.problem)
        return prob.process, prob.discount, prob.grid
    for name in ("alpha", "sigma", "rho"):
        if getattr(args, name, None) is None:
            raise SchemaError(f"--{name} is required without --problem")
    return DiffusionSpec.gbm(args.alpha, args.sigma), args.rho, None


def _cmd_invest(args) -> int:
    run = _Run("invest", args)
    process, rho, grid = _process_from_args(args)
    ip = InvestmentProblem(cost_I=args.cost, process=process, discount=rho, grid=grid)
    result = solve_investment(ip)
    doc = {"cost": args.cost, "discount": rho, "exists": result.solution.exists}
    if result.closed_form is not None:
        doc["closed_form_comparator"] = result.closed_form
    if result.solution.exists:
        doc["p_star"] = result.solution.p_star
        doc["h_star"] = result.solution.h_star
        doc["certificate"] = result.certificate.as_dict()
    else:
        doc["diagnostic"] = result.solution.diagnostic
    run.write_report("invest_report", doc)
    if result.solution.exists:
        run.write_csv("value_table.csv",
                      lambda fh: value_table_csv(result.solution, fh))
    run.finish()
    if not result.solution.exists:
        print(f"no investment threshold: {result.solution.diagnostic}")
        return 2
    cf = ("  closed-form " + fmt17(result.closed_form)
          if result.closed_form is not None else "")
    ok = result.certificate.passed()
    print(f"invest at p* = {fmt17(result.solution.p_star)}{cf}  "
          f"certificate: {'pass' if ok else 'FAIL'}")
    return 0 if ok else 2


def _cmd_abandon(args) -> int:
    run = _Run("abandon", args)
    process, rho, grid = _process_from_args(args)
    flow = Expression(f"x - ({args.revenue_cost})")
    ap = AbandonmentProblem(flow=flow, abandonment_cost_L=args.salvage,
                            process=process, discount=rho, grid=grid)
    result = solve_abandonment(ap)
    doc = {"salvage": args.salvage, "revenue_cost": args.revenue_cost,
           "discount": rho, "exists": result.solution.exists}
    if result.closed_form is not None:
        doc["closed_form_comparator"] = result.closed_form
    if result.solution.exists:
        doc["p_star"] = result.solution.p_star
        doc["certificate"] = result.certificate.as_dict()
        doc["breakeven"] = result.breakeven.as_dict()
    else:
        doc["diagnostic"] = result.solution.diagnostic
    run.write_report("abandon_report", doc)
    if result.solution.exists:
        run.write_csv("value_table.csv",
                      lambda fh: value_table_csv(result.solution, fh))
    run.finish()
    if not result.solution.exists:
        print(f"no abandonment threshold: {result.solution.diagnostic}")
        return 2
    cf = ("  closed-form " + fmt17(result.closed_form)
          if result.closed_form is not None else "")
    ok = result.certificate.passed()
    print(f"abandon at p* = {fmt17(result.solution.p_star)}{cf}  "
          f"certificate: {'pass' if ok else 'FAIL'}")
    return 0 if ok else 2


def _cmd_mc_check(args) -> int:
    run = _Run("mc-check", args)
    problem = load_problem(args.problem)
    cfg = MCConfig(n_paths=args.paths, dt=args.dt, seed=args.seed,
                   scheme=Scheme(args.scheme))
    if problem.payoff.flow is not None:
        est = estimate_integral_value(problem, args.threshold, args.start, cfg)
    else:
        est = estimate_threshold_value(problem, args.threshold, args.start, cfg)
    doc = {"threshold": args.threshold, "start": args.start,
           "estimate": est.mean, "stderr": est.stderr,
           "tail_bound": est.tail_bound, "n_paths": est.n_effective,
           "dt": cfg.dt, "seed": cfg.seed, "scheme": cfg.scheme.value}
    comparator = None
    try:
        pair = fundamental_pair(problem)
        from .threshold import value_at
        comparator = float(value_at(problem, pair, args.threshold, args.start))
        if problem.payoff.flow is not None:
            dec = green_decompose(problem, pair)
            red_terminal = float(problem.payoff.terminal(args.threshold)) \
                - float(dec.R(args.threshold))
            if problem.direction.value == "r" and args.start > args.threshold:
                cont = red_terminal * pair.phi(args.start) / pair.phi(args.threshold)
            elif problem.direction.value == "l" and args.start < args.threshold:
                cont = red_terminal * pair.psi(args.start) / pair.psi(args.threshold)
            else:
                cont = float(problem.payoff.terminal(args.start)) \
                    - float(dec.R(args.start))
            comparator = float(dec.R(args.start)) + cont
    except StopcertError:
        pass
    if comparator is not None:
        doc["analytic_comparator"] = comparator
        doc["within_3_stderr"] = bool(est.consistent_with(comparator))
    run.write_report("mc_report", doc)
    run.finish()
    comp_txt = f"  analytic {fmt17(comparator)}" if comparator is not None else ""
    print(f"estimate {fmt17(est.mean)} +- {fmt17(est.stderr)} "
          f"(tail {fmt17(est.tail_bound)}){comp_txt}")
    return 0


def _cmd_sweep(args) -> int:
    run = _Run("sweep", args)
    process, rho, grid = _process_from_args(args)
    sigmas = default_sigma_grid(args.count, args.sigma_min, args.sigma_max)
    if args.model == "invest":
        base = InvestmentProblem(cost_I=args.cost, process=process,
                                 discount=rho, grid=grid)
    else:
        flow = Expression(f"x - ({args.revenue_cost})")
        base = AbandonmentProblem(flow=flow, abandonment_cost_L=args.salvage,
                                  process=process, discount=rho, grid=grid)
    rows = volatility_sweep(base, sigmas)
    run.write_csv("sweep.csv", lambda fh: sweep_csv(rows, fh))
    run.finish()
    solved = sum(1 for _, p in rows if p is not None)
    print(f"swept {len(rows)} volatilities; {solved} thresholds found")
    return 0


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", default=".", help="directory for reports and CSVs")
    p.add_argument("--json-report", action="store_true",
                   help="write machine-readable reports instead of text")


def _add_process_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", help="problem file supplying process/discount/grid")
    p.add_argument("--alpha", type=float, help="GBM drift rate")
    p.add_argument("--sigma", type=float, help="GBM volatility")
    p.add_argument("--rho", type=float, help="discount rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stopcert",
        description="Certified threshold solutions of perpetual stopping problems")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="maximize the threshold ratio and certify")
    p.add_argument("--problem", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("verify", help="check optimality over all stopping times")
    p.add_argument("--problem", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("fbp", aliases=["fbp-analyze"],
                       help="enumerate and classify free-boundary candidates")
    p.add_argument("--problem", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_fbp)

    p = sub.add_parser("green", help="assemble the perpetual flow value R")
    p.add_argument("--problem", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_green)

    p = sub.add_parser("invest", help="investment timing threshold")
    p.add_argument("--cost", type=float, required=True, help="investment cost I")
    _add_process_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_invest)

    p = sub.add_parser("abandon", help="abandonment threshold")
    p.add_argument("--salvage", type=float, required=True, help="abandonment cost L")
    p.add_argument("--revenue-cost", type=float, required=True,
                   help="unit production cost c in the flow x - c")
    _add_process_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_abandon)

    p = sub.add_parser("mc-check", help="Monte Carlo cross-check of a threshold value")
    p.add_argument("--problem", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--paths", type=int, default=200_000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--scheme", default="euler-maruyama",
                   choices=[s.value for s in Scheme])
    _add_common(p)
    p.set_defaults(func=_cmd_mc_check)

    p = sub.add_parser("sweep", help="comparative statics over volatility")
    p.add_argument("--model", choices=["invest", "abandon"], required=True)
    p.add_argument("--cost", type=float, help="investment cost I")
    p.add_argument("--salvage", type=float, help="abandonment cost L")
    p.add_argument("--revenue-cost", type=float, help="unit cost c")
    p.add_argument("--sigma-min", type=float, default=0.1)
    p.add_argument("--sigma-max", type=float, default=0.8)
    p.add_argument("--count", type=int, default=21)
    _add_process_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ConfigError) as exc:
        field = getattr(exc, "field", None)
        loc = f" (field: {field})" if field else ""
        print(f"error: {exc}{loc}", file=sys.stderr)
        return 1
    except (TrivialProblem, GreenDivergence, HypothesisFailed) as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return 2
    except StopcertError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
