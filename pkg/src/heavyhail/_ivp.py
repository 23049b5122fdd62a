"""JIT-compiled fixed-step integrators for the workload Bellman IVP.

The IVP for a candidate cost rate beta is

    (sigma^2/2) v'(y) = beta + (alpha_hat/4) v(y)^2 + eta*y*(v(y) - h/eta) - a*v(y),
    v(0) = -r.

Trajectories are classified by escape: D when v dips below -r (the solution
eventually diverges to -infinity), I when v crosses above h/eta (divergence to
+infinity), and converged when v stays inside the band through y_max.
"""

from __future__ import annotations

import numpy as np
from numba import njit

CLASS_CONVERGED = 0
CLASS_D = 1
CLASS_I = 2

_OVERFLOW = 1e12


@njit(cache=True, nogil=True)
def rk4_classify(beta, qa, a, eta, hoe, r, inv_sig, n_steps, dt, tol_esc,
                 out_v, record):
    """RK4 integration with escape detection.

    qa = alpha_hat/4, inv_sig = 2/sigma^2, hoe = h/eta. Returns
    (classification, n_valid) where out_v[0:n_valid] holds v at y = i*dt
    (written only when record is True; out_v[0] is always set).
    """
    v = -r
    if record:
        out_v[0] = v
    lo = -r - tol_esc
    hi = hoe + tol_esc
    for k in range(n_steps):
        y = k * dt
        k1 = inv_sig * (beta + qa * v * v + eta * y * (v - hoe) - a * v)
        v2 = v + 0.5 * dt * k1
        y2 = y + 0.5 * dt
        k2 = inv_sig * (beta + qa * v2 * v2 + eta * y2 * (v2 - hoe) - a * v2)
        v3 = v + 0.5 * dt * k2
        k3 = inv_sig * (beta + qa * v3 * v3 + eta * y2 * (v3 - hoe) - a * v3)
        v4 = v + dt * k3
        y4 = y + dt
        k4 = inv_sig * (beta + qa * v4 * v4 + eta * y4 * (v4 - hoe) - a * v4)
        v = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if record:
            out_v[k + 1] = v
        if not np.isfinite(v) or v > _OVERFLOW:
            return CLASS_I, k + 2
        if v < -_OVERFLOW:
            return CLASS_D, k + 2
        if v < lo:
            return CLASS_D, k + 2
        if v > hi:
            return CLASS_I, k + 2
    return CLASS_CONVERGED, n_steps + 1


@njit(cache=True, nogil=True)
def euler_classify(beta, qa, a, eta, hoe, r, inv_sig, n_steps, dt, tol_esc):
    """Forward-Euler classifier, used as a cheap cross-check integrator."""
    v = -r
    lo = -r - tol_esc
    hi = hoe + tol_esc
    for k in range(n_steps):
        y = k * dt
        v = v + dt * inv_sig * (beta + qa * v * v + eta * y * (v - hoe) - a * v)
        if not np.isfinite(v) or v > _OVERFLOW:
            return CLASS_I
        if v < -_OVERFLOW:
            return CLASS_D
        if v < lo:
            return CLASS_D
        if v > hi:
            return CLASS_I
    return CLASS_CONVERGED
