"""Optimal execution in a multiplicative limit order book.

Transient impact acts multiplicatively on an unaffected geometric price, so
proceeds factor through the antiderivative of the book shape and the optimal
liquidation reduces to a free-boundary problem in (impact, position) space.
The package solves that boundary, evaluates the closed-form value function,
builds optimal schedules (monotone, round-trip, acquisition, finite-horizon
type A), and validates everything by simulation against the additive-impact
benchmark.
"""

__version__ = "0.1.0"

from .errors import (AdmissibilityError, BookExhaustedError,
                     BoundaryRangeError, BracketError, ConfigError,
                     DomainError, MlobError, SingularityError,
                     ValidationError)
from .market import (MARKET_KEYS, SIM_KEYS, AssumptionReport, MarketSpec,
                     PowerLawBook, block_trade_proceeds, check_assumptions,
                     load_config, power_law_spec, spec_from_config)
from .boundary import (AcquisitionBoundary, CriticalPoints, FreeBoundary,
                       acquisition_boundary, acquisition_critical_point,
                       acquisition_ode_rhs, boundary_of_ttl,
                       boundary_ode_rhs, boundary_rate, critical_points,
                       lambert_w, load_boundary_csv, solve_boundary, ttl,
                       ybar_prime)
from .value import (EvalPoint, RegionLabel, VIReport, ValueField,
                    check_appendix_identity, check_variational_inequalities,
                    dump_value_grid, pasting_m1, pasting_m2, v_bdry_integral)
from .schedule import (Block, BoundaryFollow, ConstantRate, Flow, Schedule,
                       Trajectory, Wait, acquisition_schedule, execute,
                       optimal_schedule, optimal_schedule_two_sided,
                       schedule_json, type_a_proceeds, type_a_schedule,
                       write_schedule_json)
from .simulate import (ComparisonBundle, DominanceReport, LSModelState,
                       LSRunSummary, MartingaleReport, PathBundle,
                       PerturbationResult, ProbabilityReport, ProceedsLedger,
                       SimConfig, analytic_J, deterministic_trajectory,
                       g_process_check, gbm_paths, ls_optimal_path,
                       mlob_vs_ls_compare, named_suboptimal_strategies,
                       negative_price_probability, pathwise_proceeds,
                       perturbation_dominance, standard_perturbations,
                       write_paths_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
