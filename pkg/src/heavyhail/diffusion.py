"""Scalar parameters of the one-dimensional workload control problem.

Derives the Brownian drift/covariance of the buffer process and reduces
them, together with the cost structure, to the handful of scalars that the
workload Bellman equation needs: a, sigma^2, eta, h, r, alpha_i, alpha_hat,
and the indices of the cheapest buffer to hold in and server to idle.

Scaling convention: EconParams carries per-system (n-car) hourly costs.
This module applies the diffusion scaling internally: holding scale
h = sqrt(n) * (min_i h_i - h0), idling scale c_i / sqrt(n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EconParams, NetworkModel
from .static_plan import StaticPlan


class EwfError(ValueError):
    """Raised when the workload problem parameters are degenerate."""


@dataclass(frozen=True)
class EwfParams:
    gamma: np.ndarray     # buffer-level Brownian drift, eta_hat * q
    Sigma: np.ndarray     # buffer-level Brownian covariance, I x I
    a: float              # workload drift, e' gamma
    sigma2: float         # workload variance, e' Sigma e
    eta: float            # workload mean-reversion rate, e' lambda*
    h: float              # effective holding cost (diffusion scale)
    r: float              # effective idling cost c_{k*} / lambda*_{k*}
    alpha: np.ndarray     # demand-curvature costs, length I
    alpha_hat: float      # sum_i 1/alpha_i
    i_star: int           # buffer with the lowest holding cost
    k_star: int           # server cheapest to idle
    n: int                # fleet size the scaling was taken at

    def __post_init__(self):
        if self.h <= 0.0:
            raise EwfError(f"effective holding cost must be positive, got {self.h}")
        if self.r < 0.0:
            raise EwfError(f"effective idling cost must be nonnegative, got {self.r}")
        if np.any(self.alpha <= 0.0):
            raise EwfError("alpha_i must be positive")
        if self.alpha_hat <= 0.0:
            raise EwfError("alpha_hat must be positive")

    @property
    def v_limit(self) -> float:
        """Limit value h/eta of the Bellman solution's derivative."""
        return self.h / self.eta


def brownian_params(model: NetworkModel, plan: StaticPlan):
    """Drift vector gamma, covariance Sigma, and their workload aggregates.

    Sigma_ii = q_i eta + sum_{j serving i} mu_j* x_j*, off-diagonals q_i q_i' eta.
    """
    I = model.num_regions
    gamma = plan.eta_hat * model.q
    Sigma = np.outer(model.q, model.q) * plan.eta
    service = plan.R @ plan.x_star  # equals nu under the balanced plan
    for i in range(I):
        Sigma[i, i] = model.q[i] * plan.eta + service[i]
    a = float(gamma.sum())
    sigma2 = float(Sigma.sum())
    return gamma, Sigma, a, sigma2


def ewf_costs(model: NetworkModel, econ: EconParams, plan: StaticPlan):
    """Effective holding/idling costs and curvature terms, ties broken by lowest index.

    alpha_i = -(inv demand)'(lam*) - (lam*/2)(inv demand)''(lam*), which is
    1/b_i for linear demand.
    """
    if np.any(plan.lambda_star <= 0.0):
        raise EwfError("effective idling cost undefined: lambda*_i = 0 for some region")
    sqrt_n = float(np.sqrt(model.n))
    i_star = int(np.argmin(econ.h))
    k_star = int(np.argmin(econ.c / plan.lambda_star))
    h = sqrt_n * float(econ.h[i_star] - econ.h0)
    r = float((econ.c[k_star] / sqrt_n) / plan.lambda_star[k_star])
    alpha = 1.0 / econ.demand_b
    alpha_hat = float(np.sum(1.0 / alpha))
    return h, r, i_star, k_star, alpha, alpha_hat


def derive_ewf(model: NetworkModel, econ: EconParams, plan: StaticPlan) -> EwfParams:
    gamma, Sigma, a, sigma2 = brownian_params(model, plan)
    h, r, i_star, k_star, alpha, alpha_hat = ewf_costs(model, econ, plan)
    return EwfParams(
        gamma=gamma, Sigma=Sigma, a=a, sigma2=sigma2, eta=plan.eta,
        h=h, r=r, alpha=alpha, alpha_hat=alpha_hat,
        i_star=i_star, k_star=k_star, n=model.n,
    )


def ewf_cost_function(x: float, alpha: np.ndarray) -> tuple[float, np.ndarray]:
    """Cheapest split of total drift x across regions and its cost.

    Minimizing sum_i alpha_i zeta_i^2 subject to e' zeta = x gives
    zeta_i = x / (alpha_i alpha_hat) and cost x^2 / alpha_hat.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0.0):
        raise EwfError("alpha_i must be positive")
    alpha_hat = float(np.sum(1.0 / alpha))
    zeta = x / (alpha * alpha_hat)
    return x * x / alpha_hat, zeta
