"""Heavy-traffic pricing and dispatch toolkit for closed ride-hailing networks."""

from .bellman import (BellmanError, IvpTrajectory, ValueFunction, beta_bracket,
                      integrate_ivp, solve_bellman, theta_star,
                      verify_via_linear_ode)
from .diffusion import EwfParams, brownian_params, derive_ewf, ewf_cost_function, ewf_costs
from .model import (ConfigError, DomainError, EconParams, IncidenceMatrices,
                    NetworkModel, SimSettings, demand, demand_inverse, incidence,
                    load_model, load_model_file, revenue_rate)
from .policies import DispatchPolicy, PricingPolicy, build_tables, current_prices
from .sim import (ExperimentSummary, SimReport, run_cell, run_experiment,
                  run_replication)
from .static_plan import (PlanError, StaticPlan, buffer_pools, check_crp,
                          nominal_plan, optimal_static_rates, workload_matrix)

__version__ = "0.1.0"
