"""Independent cross-check integrators for the Bellman shooting solve.

Kept deliberately separate from the package: same math, different code path
(the Riccati coefficient form v' = q2 v^2 + q1(y) v + q0(y)), ten times finer
step. Used to confirm the production solver's classification and beta*.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _classify_riccati(beta, alpha_hat, a, eta, h, r, sigma2, n_steps, dt, tol):
    q2 = alpha_hat / (2.0 * sigma2)
    hoe = h / eta
    v = -r
    lo = -r - tol
    hi = hoe + tol
    for k in range(n_steps):
        y0 = k * dt
        q1 = 2.0 / sigma2 * (eta * y0 - a)
        q0 = 2.0 / sigma2 * (beta - h * y0)
        k1 = q2 * v * v + q1 * v + q0
        ym = y0 + 0.5 * dt
        q1m = 2.0 / sigma2 * (eta * ym - a)
        q0m = 2.0 / sigma2 * (beta - h * ym)
        v2 = v + 0.5 * dt * k1
        k2 = q2 * v2 * v2 + q1m * v2 + q0m
        v3 = v + 0.5 * dt * k2
        k3 = q2 * v3 * v3 + q1m * v3 + q0m
        y1 = y0 + dt
        q11 = 2.0 / sigma2 * (eta * y1 - a)
        q01 = 2.0 / sigma2 * (beta - h * y1)
        v4 = v + dt * k3
        k4 = q2 * v4 * v4 + q11 * v4 + q01
        v = v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(v) or v > 1e12:
            return 2
        if v < -1e12 or v < lo:
            return 1
        if v > hi:
            return 2
    return 0


def oracle_beta_star(params, refine=10):
    """Bisection on the 10x-finer Riccati-form integrator."""
    hoe = params.h / params.eta
    y_max = 10.0 * max(1.0, params.sigma2 * (params.r + hoe) / params.h,
                       params.a / params.eta)
    dt = y_max / 200_000 / refine
    n_steps = int(np.ceil(y_max / dt))
    tol = 1e-9 * max(params.r, hoe)

    def classify(beta):
        return _classify_riccati(beta, params.alpha_hat, params.a, params.eta,
                                 params.h, params.r, params.sigma2, n_steps, dt, tol)

    if params.a > -params.alpha_hat * params.r / 4.0:
        lo = 0.0
    else:
        lo = -params.a * params.r - params.alpha_hat * params.r ** 2 / 4.0
    hi = params.sigma2 * params.h / (2.0 * params.eta) \
        + 2.0 * np.sqrt(params.sigma2) * (params.r + hoe) \
        * np.sqrt(params.eta / np.pi) * np.exp(-params.sigma2 * params.a ** 2 / (4.0 * params.eta))
    hi = max(hi, lo + 1.0)
    while classify(hi) != 2:
        hi *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if classify(mid) == 1:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * hi:
            break
    return 0.5 * (lo + hi)
