"""stopcert: certified threshold solutions of perpetual optimal stopping problems.

Solves sup_tau E^x g(X_tau) e^{-rho tau} for one-dimensional regular
diffusions over one-sided threshold rules, certifies when the threshold
optimum is optimal over all stopping times, reduces flow-plus-terminal
payoffs through the Green representation, and diagnoses free-boundary
candidates that fail to solve the stopping problem.
"""

__version__ = "0.1.0"

from .diffusion import (ArithmeticBM, DiffusionSpec, Direction, GBM, GridSpec,
                        Interval, PayoffSpec, Problem, RegularityReport,
                        check_regularity, generator_apply, scale_density)
from .errors import (ConfigError, DomainError, FundamentalSolveError,
                     GreenDivergence, HypothesisFailed, KinkError,
                     MonotonicityError, NotDCRepresentable, NotInCatalog,
                     NumericalError, SchemaError, StopcertError, TrivialProblem)
from .excessive import (ExcessivityReport, GlobalOptimalityResult, GlobalVerdict,
                        Verdict, check_excessivity_conditions,
                        excessivity_measure_scan, verify_global_optimality)
from .expressions import Differentiable, Expression
from .fbp import (Classification, FBPVerdict, FreeBoundaryReport, StationaryPoint,
                  StationaryScan, classify_stationary_points, find_stationary_points)
from .fundsol import (FundamentalPair, Source, analytic_fundamental, beta_roots,
                      bm_exponents, fundamental_pair, numeric_fundamental)
from .green import (GreenDecomposition, IntegralCertificate, IntegralReduction,
                    green_decompose, reduce_integral_problem,
                    verify_integral_optimality)
from .mcsim import (DelayedThresholdRule, FixedTimeRule, MCConfig, MCEstimate,
                    RefinedEstimate, Scheme, ThresholdRule, TwoSidedRule,
                    estimate_alternative_rule, estimate_integral_value,
                    estimate_threshold_value, estimate_threshold_value_refined)
from .problemfile import load_problem, problem_from_dict
from .realopt import (AbandonmentProblem, BreakevenDiagnostic, InvestmentCertificate,
                      InvestmentProblem, gbm_abandonment_threshold,
                      gbm_investment_threshold, solve_abandonment, solve_investment,
                      volatility_sweep)
from .threshold import (PastingReport, ThresholdCertificate, ThresholdSolution,
                        h_value, maximize_h, smooth_pasting_report, value_at)
