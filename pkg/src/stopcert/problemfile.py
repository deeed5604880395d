"""Problem-file loader.

Files are TOML documents with top-level ``discount`` and ``direction`` keys
and ``process`` / ``payoff`` / ``grid`` sections:

    discount = 0.08
    direction = "l"

    [process]
    tag = "gbm"          # "gbm" (alpha, sigma) or "bm" (a, sigma);
    alpha = 0.5          # omit the tag to give expressions instead:
    sigma = 1.0          #   a = "x/2", sigma = "x", l = 0.0, r = "inf"

    [payoff]
    g = "(x-1)**3 + x**4"     # terminal payoff, or g0 + g1 for flow problems
    kinks = []

    [grid]
    n_points = 2001
    lo = 0.02
    hi = 50.0
"""

from __future__ import annotations

import math

try:
    import tomllib as _toml
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as _toml

from .diffusion import DiffusionSpec, Direction, GridSpec, Interval, PayoffSpec, Problem
from .errors import SchemaError
from .expressions import Expression


def _endpoint(value, default: float, field: str) -> float:
    if value is None:
        return default
    if isinstance(value, str):
        t = value.strip().lower()
        if t in ("inf", "+inf", "infinity"):
            return math.inf
        if t in ("-inf", "-infinity"):
            return -math.inf
        raise SchemaError(f"{field}: cannot parse endpoint {value!r}", field=field)
    return float(value)


def _build_process(sec: dict) -> DiffusionSpec:
    tag = sec.get("tag")
    if tag is not None:
        tag = str(tag).lower()
        if tag == "gbm":
            for key in ("alpha", "sigma"):
                if key not in sec:
                    raise SchemaError(f"process.{key} required for tag 'gbm'",
                                      field=f"process.{key}")
            return DiffusionSpec.gbm(float(sec["alpha"]), float(sec["sigma"]))
        if tag == "bm":
            for key in ("a", "sigma"):
                if key not in sec:
                    raise SchemaError(f"process.{key} required for tag 'bm'",
                                      field=f"process.{key}")
            return DiffusionSpec.brownian(float(sec["a"]), float(sec["sigma"]))
        raise SchemaError(f"unknown process tag {tag!r}", field="process.tag")
    for key in ("a", "sigma"):
        if key not in sec:
            raise SchemaError(f"process.{key} expression required without a tag",
                              field=f"process.{key}")
    domain = Interval(
        l=_endpoint(sec.get("l"), -math.inf, "process.l"),
        r=_endpoint(sec.get("r"), math.inf, "process.r"),
        l_included=bool(sec.get("l_included", False)),
        r_included=bool(sec.get("r_included", False)))
    return DiffusionSpec.from_functions(
        drift=Expression(str(sec["a"])),
        diffusion=Expression(str(sec["sigma"])),
        domain=domain)


def _build_payoff(sec: dict) -> PayoffSpec:
    has_g = "g" in sec
    has_g0 = "g0" in sec
    has_g1 = "g1" in sec
    if has_g and (has_g0 or has_g1):
        raise SchemaError("payoff: give either g or the g0/g1 pair, not both",
                          field="payoff.g")
    if not has_g and not has_g0:
        raise SchemaError("payoff: g or g0 is required", field="payoff.g")
    kinks = tuple(float(k) for k in sec.get("kinks", []))
    terminal = Expression(str(sec["g"] if has_g else sec["g0"]))
    flow = Expression(str(sec["g1"])) if has_g1 else None
    return PayoffSpec(terminal=terminal, flow=flow, kinks=kinks)


def problem_from_dict(doc: dict) -> Problem:
    for key in ("discount", "direction"):
        if key not in doc:
            raise SchemaError(f"top-level {key!r} is required", field=key)
    if "process" not in doc:
        raise SchemaError("a [process] section is required", field="process")
    if "payoff" not in doc:
        raise SchemaError("a [payoff] section is required", field="payoff")

    direction = str(doc["direction"]).lower()
    if direction not in ("l", "r"):
        raise SchemaError("direction must be 'l' or 'r'", field="direction")

    grid_sec = doc.get("grid", {})
    grid = GridSpec(
        n_points=int(grid_sec.get("n_points", 2001)),
        lo=float(grid_sec["lo"]) if "lo" in grid_sec else None,
        hi=float(grid_sec["hi"]) if "hi" in grid_sec else None,
        reference=float(grid_sec["reference"]) if "reference" in grid_sec else None)

    try:
        return Problem(
            process=_build_process(doc["process"]),
            payoff=_build_payoff(doc["payoff"]),
            discount=float(doc["discount"]),
            direction=Direction(direction),
            grid=grid)
    except SchemaError:
        raise
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid problem document: {exc}") from exc


def load_problem(path: str) -> Problem:
    try:
        with open(path, "rb") as fh:
            doc = _toml.load(fh)
    except FileNotFoundError:
        raise SchemaError(f"problem file not found: {path}")
    except _toml.TOMLDecodeError as exc:
        raise SchemaError(f"{path}: TOML parse error: {exc}")
    return problem_from_dict(doc)
