"""Shooting solution of the workload Bellman equation.

Finds the unique cost rate beta* for which the IVP trajectory v_beta is
nondecreasing with limit h/eta, by bisecting on beta using the D/I escape
classification (trajectories below beta* dive under -r, those above cross
h/eta and diverge). The returned value function combines the final bisection
bracket on the shooting window with a stiff backward integration that tracks
the slow 1/y approach of v toward h/eta out to where the limit tolerance is
met; forward shooting alone cannot follow that branch because it is
exponentially unstable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp

from ._ivp import CLASS_CONVERGED, CLASS_D, CLASS_I, euler_classify, rk4_classify
from .diffusion import EwfParams

SHOOT_STEPS = 200_000          # fixed RK4 steps across the shooting window
TAIL_GROWTH = 1e-4             # relative grid spacing on the backward tail
TAIL_MAX_STEP = 50.0           # integrator step cap, in units of the block grid step
LIMIT_TOL = 5e-4               # target |v(y_max) - h/eta| / (h/eta)
BLEND_POINTS = 2000            # forward->backward crossfade width, in grid points
CORRECTION_LIMIT_REL = 1e-4    # max allowed clamp/monotonize correction
MAX_BISECT = 200

_CLASS_NAMES = {CLASS_CONVERGED: "converged", CLASS_D: "D", CLASS_I: "I"}


class BellmanError(RuntimeError):
    """Raised on bracket failure or non-convergence of the shooting solve."""


@dataclass(frozen=True)
class IvpTrajectory:
    beta: float
    grid: np.ndarray
    v: np.ndarray
    classification: str   # "D", "I", or "converged"


@dataclass(frozen=True)
class ValueFunction:
    beta_star: float
    grid: np.ndarray
    v: np.ndarray
    y_max: float
    limit: float                     # h/eta
    alpha_hat: float
    r: float
    segments: tuple[tuple[int, int, float], ...]  # (start, stop, step) uniform runs
    correction: float                # max post-processing adjustment applied
    iterations: int

    def __call__(self, w):
        """Interpolated v(w), held at the limit h/eta beyond y_max."""
        w = np.asarray(w, dtype=float)
        out = np.interp(w, self.grid, self.v)
        return np.where(w > self.y_max, self.limit, out)


def shooting_window(params: EwfParams) -> tuple[float, float]:
    """Default (y_max, step) for escape classification.

    Wide enough that the quadratic decay of sub-critical trajectories and the
    super-exponential growth of super-critical ones both trigger well inside
    the window.
    """
    hoe = params.v_limit
    y_max = 10.0 * max(1.0, params.sigma2 * (params.r + hoe) / params.h,
                       params.a / params.eta)
    return y_max, y_max / SHOOT_STEPS


def _escape_tol(params: EwfParams) -> float:
    return 1e-9 * max(params.r, params.v_limit)


def _classify(beta: float, params: EwfParams, y_max: float, step: float,
              record: bool = False):
    n_steps = int(np.ceil(y_max / step))
    out = np.empty(n_steps + 1 if record else 1)
    code, n_valid = rk4_classify(
        beta, params.alpha_hat / 4.0, params.a, params.eta, params.v_limit,
        params.r, 2.0 / params.sigma2, n_steps, step, _escape_tol(params),
        out, record,
    )
    return code, (out[:n_valid] if record else None)


def integrate_ivp(beta: float, params: EwfParams, y_max: float | None = None,
                  step: float | None = None) -> IvpTrajectory:
    """Integrate the IVP at a fixed beta and classify the trajectory."""
    default_y, default_step = shooting_window(params)
    y_max = default_y if y_max is None else float(y_max)
    step = default_step if step is None else float(step)
    if step <= 0 or y_max <= 0:
        raise ValueError("y_max and step must be positive")
    code, v = _classify(beta, params, y_max, step, record=True)
    grid = step * np.arange(v.size)
    return IvpTrajectory(beta=beta, grid=grid, v=v,
                         classification=_CLASS_NAMES[code])


def beta_lower(params: EwfParams) -> tuple[float, bool]:
    """Lower end of the beta bracket and whether it is the open Case-2 boundary."""
    case2_threshold = -params.alpha_hat * params.r / 4.0
    if params.a > case2_threshold:
        return 0.0, False
    return -params.a * params.r - params.alpha_hat * params.r ** 2 / 4.0, True


def beta_bracket(params: EwfParams, y_max: float | None = None,
                 step: float | None = None) -> tuple[float, float]:
    """Bracket [beta_lo, beta_hi] with beta_lo on the D side and beta_hi classified I."""
    default_y, default_step = shooting_window(params)
    y_max = default_y if y_max is None else y_max
    step = default_step if step is None else step
    lo, open_lo = beta_lower(params)
    hoe = params.v_limit
    hi = params.sigma2 * params.h / (2.0 * params.eta) \
        + 2.0 * np.sqrt(params.sigma2) * (params.r + hoe) \
        * np.sqrt(params.eta / np.pi) * np.exp(-params.sigma2 * params.a ** 2 / (4.0 * params.eta))
    hi = max(hi, lo + max(1.0, abs(lo)))
    for _ in range(60):
        code, _ = _classify(hi, params, y_max, step)
        if code == CLASS_I:
            return lo, float(hi)
        hi *= 2.0
    raise BellmanError("failed to find an I-classified upper bracket endpoint")


def solve_bellman(params: EwfParams, tol_beta: float | None = None,
                  y_max: float | None = None, step: float | None = None) -> ValueFunction:
    """Bisect on beta and assemble the value function derivative v.

    Classification is monotone in beta, so bisection converges; D (including
    the open Case-2 start point) moves the lower end up, I or converged moves
    the upper end down.
    """
    default_y, default_step = shooting_window(params)
    y_shoot = default_y if y_max is None else float(y_max)
    dt = default_step if step is None else float(step)
    lo, hi = beta_bracket(params, y_shoot, dt)
    if tol_beta is None:
        tol_beta = 1e-9 * hi

    lo_probe = lo * (1.0 + 1e-12) + (1e-300 if lo == 0.0 else 0.0)
    code, _ = _classify(lo_probe if lo > 0 else lo, params, y_shoot, dt)
    if code != CLASS_D:
        raise BellmanError(
            f"bracket failure: lower endpoint beta={lo} classified {_CLASS_NAMES[code]}")

    iterations = 0
    while hi - lo > tol_beta and iterations < MAX_BISECT:
        mid = 0.5 * (lo + hi)
        code, _ = _classify(mid, params, y_shoot, dt)
        if code == CLASS_D:
            lo = mid
        else:
            hi = mid
        iterations += 1
    if hi - lo > tol_beta:
        raise BellmanError(f"bisection did not converge within {MAX_BISECT} iterations")

    beta_star = 0.5 * (lo + hi)
    if beta_star <= 0.0:
        raise BellmanError(f"solver produced beta* = {beta_star} <= 0")

    _, v_lo = _classify(lo, params, y_shoot, dt, record=True)
    _, v_hi = _classify(hi, params, y_shoot, dt, record=True)
    grid, v, segments, correction = _assemble(params, beta_star, v_lo, v_hi, dt)
    return ValueFunction(
        beta_star=beta_star, grid=grid, v=v, y_max=float(grid[-1]),
        limit=params.v_limit, alpha_hat=params.alpha_hat, r=params.r,
        segments=segments, correction=correction, iterations=iterations,
    )


def _tail_terminal(params: EwfParams, beta_star: float, y: float) -> float:
    """Asymptotic v(y) = h/eta + u with u ~ -K/D(y); two refinement passes."""
    hoe = params.v_limit
    K = beta_star + params.alpha_hat / 4.0 * hoe ** 2 - params.a * hoe
    D = params.eta * y + params.alpha_hat / 2.0 * hoe - params.a
    u = -K / D
    for _ in range(2):
        du = -u * params.eta / D   # d/dy of u = -K/D
        u = -(K + params.alpha_hat / 4.0 * u * u - params.sigma2 / 2.0 * du) / D
    return hoe + min(u, 0.0)


def _tail_grid(y0: float, y_end: float, fine_step: float):
    """Piecewise-uniform doubling blocks from y0 to y_end."""
    blocks = []
    start = y0
    while start < y_end:
        end = min(2.0 * start if start > 0 else y_end, y_end)
        step = max(fine_step, TAIL_GROWTH * start)
        npts = max(2, int(np.ceil((end - start) / step)) + 1)
        blocks.append(np.linspace(start, end, npts))
        start = end
    return blocks


def _assemble(params: EwfParams, beta_star: float, v_lo, v_hi, dt: float):
    hoe = params.v_limit
    n = min(v_lo.size, v_hi.size)
    gap = np.abs(v_hi[:n] - v_lo[:n])
    # the bracket gap sits at a noise floor while the IVP is contracting and
    # blows up once it turns unstable; join just as the blow-up starts
    floor = float(np.median(gap[min(100, n // 10):min(5000, n)]))
    join_tol = max(30.0 * floor, 1e-13 * max(1.0, hoe))
    exceed = np.nonzero(gap > join_tol)[0]
    k_join = int(exceed[0]) - 1 if exceed.size else n - 1
    if k_join < 10:
        raise BellmanError("bisection bracket too wide: no agreed forward section")
    v_fwd = 0.5 * (v_lo[: k_join + 1] + v_hi[: k_join + 1])
    y_join = k_join * dt
    n_blend = min(BLEND_POINTS, k_join // 2)
    y_blend = (k_join - n_blend) * dt

    K = beta_star + params.alpha_hat / 4.0 * hoe ** 2 - params.a * hoe
    y_shoot = dt * SHOOT_STEPS
    y_end = max(2.0 * y_shoot, K / (params.eta * LIMIT_TOL * hoe) if K > 0 else 0.0)
    v_term = _tail_terminal(params, beta_star, y_end)

    blocks = _tail_grid(y_join, y_end, dt)
    qa = params.alpha_hat / 4.0
    inv_sig = 2.0 / params.sigma2

    def rhs(y, v):
        return inv_sig * (beta_star + qa * v * v + params.eta * y * (v - hoe)
                          - params.a * v)

    # integrate backward one block at a time; capping the step keeps the
    # dense-output error below the residual budget on the coarse far grid
    v_term_cur = v_term
    tail_vals = []
    for b in reversed(blocks):
        step_b = float(b[1] - b[0])
        sol = solve_ivp(rhs, (b[-1], b[0]), [v_term_cur], method="Radau",
                        t_eval=b[::-1], rtol=1e-12, atol=1e-12,
                        max_step=TAIL_MAX_STEP * step_b)
        if not sol.success:
            raise BellmanError(f"backward tail integration failed: {sol.message}")
        tail_vals.append(sol.y[0][::-1].copy())
        v_term_cur = float(sol.y[0][-1])
    tail_vals.reverse()
    tail_y = np.concatenate([blocks[0]] + [b[1:] for b in blocks[1:]])
    v_tail = np.concatenate([tail_vals[0]] + [tv[1:] for tv in tail_vals[1:]])

    # continue backward across the blend window on the fine grid
    blend_y = dt * np.arange(k_join - n_blend, k_join + 1)
    sol = solve_ivp(rhs, (y_join, y_blend), [v_tail[0]], method="Radau",
                    t_eval=blend_y[::-1], rtol=1e-12, atol=1e-12,
                    max_step=TAIL_MAX_STEP * dt)
    if not sol.success:
        raise BellmanError(f"backward blend integration failed: {sol.message}")
    v_bwd_blend = sol.y[0][::-1]

    mismatch = float(np.abs(v_bwd_blend - v_fwd[k_join - n_blend:]).max())
    if mismatch > max(20.0 * join_tol, 1e-9 * max(1.0, hoe)):
        raise BellmanError(
            f"forward/backward solutions disagree near the junction by {mismatch:.3e}")

    # quintic crossfade: C2, so the stencil checks see a smooth curve
    s = np.linspace(0.0, 1.0, n_blend + 1)
    w = s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)
    v_fwd[k_join - n_blend:] = (1.0 - w) * v_fwd[k_join - n_blend:] + w * v_bwd_blend

    grid = np.concatenate([dt * np.arange(k_join + 1), tail_y[1:]])
    v = np.concatenate([v_fwd, v_tail[1:]])

    raw = v.copy()
    np.clip(v, -params.r, hoe, out=v)
    np.maximum.accumulate(v, out=v)
    correction = float(np.abs(v - raw).max())
    if correction >= CORRECTION_LIMIT_REL * max(1.0, hoe):
        raise BellmanError(
            f"post-processing correction {correction:.3e} exceeds the allowed budget")
    v[0] = -params.r

    segments = [(0, k_join + 1, dt)]
    offset = k_join + 1
    for b in blocks:
        m = b.size - 1  # first point of each block coincides with previous end
        if m > 1:
            segments.append((offset - 1, offset - 1 + m + 1, float(b[1] - b[0])))
        offset += m
    return grid, v, tuple(segments), correction


def theta_star(vf: ValueFunction, w: float) -> float:
    """Optimal workload drift (alpha_hat/2) * v(w); the limit value beyond y_max."""
    if w < 0:
        raise ValueError(f"workload must be nonnegative, got {w}")
    if w > vf.y_max:
        return 0.5 * vf.alpha_hat * vf.limit
    return 0.5 * vf.alpha_hat * float(np.interp(w, vf.grid, vf.v))


def ode_residual(vf: ValueFunction, params: EwfParams) -> float:
    """Max |(sigma^2/2) v' - RHS(beta*, v)| over interior grid points.

    v' is taken by fourth-order central differences within each uniform grid
    segment; two points on each segment edge are excluded.
    """
    qa = params.alpha_hat / 4.0
    worst = 0.0
    for start, stop, step in vf.segments:
        y = vf.grid[start:stop]
        v = vf.v[start:stop]
        if v.size < 5:
            continue
        d = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * step)
        rhs = vf.beta_star + qa * v[2:-2] ** 2 \
            + params.eta * y[2:-2] * (v[2:-2] - params.v_limit) \
            - params.a * v[2:-2]
        res = np.abs(params.sigma2 / 2.0 * d - rhs)
        worst = max(worst, float(res.max()))
    return worst


def verify_via_linear_ode(vf: ValueFunction, params: EwfParams,
                          window: float = 0.5, target_step: float = 1e-3) -> float:
    """Cross-check v through the substitution y(x) = exp(-q2 int_0^x v).

    A Riccati solution v makes y satisfy the linear equation
    y'' - q1(x) y' + q2 q0(x) y = 0 with y(0) = 1, y'(0) = r q2. The check
    rebuilds y by trapezoid quadrature of the tabulated v, renormalizes it per
    window (the equation is homogeneous, and the raw exponential underflows),
    and returns the maximum |y'' - q1 y' + q2 q0 y| / |y| over checked points
    using fourth-order stencils. Segments whose spacing is too coarse for the
    exponential to be resolved are skipped.
    """
    q2 = params.alpha_hat / (2.0 * params.sigma2)
    worst = 0.0
    first = True
    for start, stop, step in vf.segments:
        if step > 2.5e-3:
            continue
        y_seg = vf.grid[start:stop]
        v_seg = vf.v[start:stop]
        F = cumulative_trapezoid(v_seg, y_seg, initial=0.0)
        stride = max(1, int(round(target_step / step)))
        h = step * stride
        idx = np.arange(0, y_seg.size, stride)
        per_win = max(5, int(round(window / h)))
        for w0 in range(0, idx.size - 4, per_win):
            sel = idx[w0:w0 + per_win + 4]
            if sel.size < 5:
                break
            x = y_seg[sel]
            yv = np.exp(-q2 * (F[sel] - F[sel[0]]))
            d1 = (yv[:-4] - 8.0 * yv[1:-3] + 8.0 * yv[3:-1] - yv[4:]) / (12.0 * h)
            d2 = (-yv[:-4] + 16.0 * yv[1:-3] - 30.0 * yv[2:-2]
                  + 16.0 * yv[3:-1] - yv[4:]) / (12.0 * h * h)
            xc = x[2:-2]
            q1 = 2.0 / params.sigma2 * (params.eta * xc - params.a)
            q0 = 2.0 / params.sigma2 * (vf.beta_star - params.h * xc)
            res = np.abs(d2 - q1 * d1 + q2 * q0 * yv[2:-2]) / np.abs(yv[2:-2])
            worst = max(worst, float(res.max()))
            if first and w0 == 0:
                # initial conditions: y(0) = 1 by construction, y'(0) = r q2
                # with r = -v(0)
                d1_0 = (-25.0 * yv[0] + 48.0 * yv[1] - 36.0 * yv[2]
                        + 16.0 * yv[3] - 3.0 * yv[4]) / (12.0 * h)
                ic_err = max(abs(yv[0] - 1.0), abs(d1_0 - vf.r * q2)
                             / max(1.0, abs(vf.r * q2)))
                worst = max(worst, float(ic_err))
                first = False
    return worst


def euler_classification(beta: float, params: EwfParams, y_max: float,
                         step: float) -> str:
    """Classification by the independent forward-Euler integrator."""
    n_steps = int(np.ceil(y_max / step))
    code = euler_classify(beta, params.alpha_hat / 4.0, params.a, params.eta,
                          params.v_limit, params.r, 2.0 / params.sigma2,
                          n_steps, step, _escape_tol(params))
    return _CLASS_NAMES[code]
