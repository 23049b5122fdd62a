"""Pricing rules and dispatch selectors.

Pricing is either static (optimal static prices p*) or dynamic: demand rates
deviate from n*lambda* proportionally to v(W/sqrt(n)) and prices follow from
the exact linear-demand inverse. Four dispatch rules decide which buffer an
idle server draws from, and which idle server takes a newly arrived car.

All selectors operate on raw simulator arrays so the same compiled code
drives both the event loop and the unit tests. A buffer is *available* to a
server when it holds at least one car not already committed to another
server; queue-length thresholds compare against the raw buffer count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import rng_next
from .bellman import ValueFunction
from .model import EconParams, NetworkModel
from .static_plan import StaticPlan

POLICY_CODES = {"dp1": 0, "dp2": 1, "static": 2, "closest": 3}

LAMBDA_FLOOR = 0.01   # dynamic demand clamp: lam_i >= floor * n * lambda_i*


@dataclass(frozen=True)
class PricingPolicy:
    kind: str                      # "static" | "dynamic"
    plan: StaticPlan
    econ: EconParams
    n: int
    vf: ValueFunction | None = None

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise ValueError(f"unknown pricing kind {self.kind!r}")
        if self.kind == "dynamic" and self.vf is None:
            raise ValueError("dynamic pricing requires a solved value function")

    def value_table(self) -> np.ndarray:
        """v evaluated at the reachable workloads W = 0..n (y = W/sqrt(n)).

        Static pricing is the zero table, so both kinds share one code path
        and static trajectories coincide with dynamic ones under v == 0.
        """
        if self.kind == "static":
            return np.zeros(self.n + 1)
        y = np.arange(self.n + 1) / np.sqrt(self.n)
        return np.asarray(self.vf(y), dtype=float)


def current_prices(pp: PricingPolicy, W: int) -> tuple[np.ndarray, np.ndarray]:
    """Prices and n-system demand rates at total buffer headcount W.

    Dynamic rates are n*lambda_i* + sqrt(n)/(2 alpha_i) * v(W/sqrt(n)),
    clamped; the charged price is the exact inverse of the clamped rate. The
    first-order price expansion p* + (inv)'(lambda*) v /(2 alpha_i sqrt(n))
    coincides with the exact inverse for linear demand.
    """
    if W < 0:
        raise ValueError("workload must be a nonnegative count")
    n = pp.n
    lam_base = n * pp.plan.lambda_star
    if pp.kind == "static":
        lam = lam_base.copy()
    else:
        v = float(pp.vf(W / np.sqrt(n))) if W / np.sqrt(n) <= pp.vf.y_max else pp.vf.limit
        coef = np.sqrt(n) * pp.econ.demand_b / 2.0   # sqrt(n)/(2 alpha_i), alpha_i = 1/b_i
        lam = lam_base + coef * v
        lam = np.clip(lam, LAMBDA_FLOOR * lam_base, n * pp.econ.demand_a)
    prices = (n * pp.econ.demand_a - lam) / (n * pp.econ.demand_b)
    return prices, lam


@dataclass(frozen=True)
class DispatchPolicy:
    kind: str
    safety_stock: int = 1

    def __post_init__(self):
        if self.kind not in POLICY_CODES:
            raise ValueError(f"unknown dispatch kind {self.kind!r}")
        if self.safety_stock < 0:
            raise ValueError("safety stock must be nonnegative")


@dataclass(frozen=True)
class DispatchTables:
    """Flattened candidate lists consumed by the selectors.

    cand: per-server primary candidates (policy-specific order);
    cand2: per-server secondary candidates (DP2's nonbasic tier);
    bufcand: per-buffer arrival-side candidates (activities, priority order).
    """

    code: int
    safety: np.ndarray         # int64[I]
    local_act: np.ndarray      # int64[I]
    act_server: np.ndarray     # int64[J]
    act_buffer: np.ndarray     # int64[J]
    h_buf: np.ndarray          # float64[I]
    split_w: np.ndarray        # float64[J]
    cand_start: np.ndarray
    cand_list: np.ndarray
    cand2_start: np.ndarray
    cand2_list: np.ndarray
    bufcand_start: np.ndarray
    bufcand_list: np.ndarray


def _flatten(lists):
    start = np.zeros(len(lists) + 1, dtype=np.int64)
    for i, lst in enumerate(lists):
        start[i + 1] = start[i] + len(lst)
    flat = np.array([j for lst in lists for j in lst] or [0], dtype=np.int64)
    if start[-1] == 0:
        flat = np.zeros(0, dtype=np.int64)
    return start, flat


def build_tables(model: NetworkModel, econ: EconParams, plan: StaticPlan,
                 policy: DispatchPolicy) -> DispatchTables:
    I, J = model.num_regions, model.num_activities
    code = POLICY_CODES[policy.kind]
    act_server = np.array([s for s, _ in model.activities], dtype=np.int64)
    act_buffer = np.array([b for _, b in model.activities], dtype=np.int64)
    basic = set(plan.basic)
    idle_cost = econ.c / plan.lambda_star   # effective idling cost per server

    cand, cand2 = [], []
    for s in range(I):
        acts = [j for j in range(J) if act_server[j] == s and j != s]
        if policy.kind == "dp1":
            sel = sorted((j for j in acts if j in basic), key=lambda j: act_buffer[j])
            cand.append(sel)
            cand2.append([])
        elif policy.kind == "dp2":
            cand.append(sorted((j for j in acts if j in basic), key=lambda j: act_buffer[j]))
            cand2.append(sorted((j for j in acts if j not in basic), key=lambda j: act_buffer[j]))
        elif policy.kind == "static":
            sel = [j for j in [s] + acts if plan.x_star[j] > 0.0]
            cand.append(sorted(sel, key=lambda j: (act_buffer[j] != s, act_buffer[j])))
            cand2.append([])
        else:  # closest
            sel = sorted([s] + acts,
                         key=lambda j: (model.distances[s, act_buffer[j]], act_buffer[j]))
            cand.append(sel)
            cand2.append([])

    bufcand = []
    for d in range(I):
        if policy.kind in ("static", "closest"):
            # benchmark policies engage nonlocal buffers only at completion
            # epochs; an arrival wakes just the buffer's own server
            bufcand.append([d])
            continue
        serving = [j for j in range(J) if act_buffer[j] == d]
        if policy.kind == "dp1":
            serving = [j for j in serving if j in basic]
        serving.sort(key=lambda j: (-idle_cost[act_server[j]], act_server[j]))
        bufcand.append(serving)

    cand_start, cand_list = _flatten(cand)
    cand2_start, cand2_list = _flatten(cand2)
    bufcand_start, bufcand_list = _flatten(bufcand)
    return DispatchTables(
        code=code,
        safety=np.full(I, policy.safety_stock, dtype=np.int64),
        local_act=np.arange(I, dtype=np.int64),
        act_server=act_server,
        act_buffer=act_buffer,
        h_buf=np.asarray(econ.h, dtype=float),
        split_w=np.asarray(plan.x_star, dtype=float),
        cand_start=cand_start, cand_list=cand_list,
        cand2_start=cand2_start, cand2_list=cand2_list,
        bufcand_start=bufcand_start, bufcand_list=bufcand_list,
    )


@njit(cache=True, nogil=True)
def select_dp1(s, Q, committed, act_buffer, local_act, cand_start, cand_list,
               safety, h_buf):
    """Local buffer first; else the basic buffer strictly above its safety
    stock with the largest holding cost, then longest queue, then lowest
    buffer index. The threshold reserves the last s cars of a buffer for its
    own server."""
    jloc = local_act[s]
    bloc = act_buffer[jloc]
    if Q[bloc] - committed[bloc] >= 1:
        return jloc
    best = -1
    best_h = -1.0
    best_q = np.int64(-1)
    for k in range(cand_start[s], cand_start[s + 1]):
        j = cand_list[k]
        b = act_buffer[j]
        if Q[b] > safety[b] and Q[b] - committed[b] >= 1:
            if h_buf[b] > best_h or (h_buf[b] == best_h and Q[b] > best_q):
                best, best_h, best_q = j, h_buf[b], Q[b]
    return best


@njit(cache=True, nogil=True)
def select_dp2(s, Q, committed, act_buffer, local_act, cand_start, cand_list,
               cand2_start, cand2_list):
    """Local first, then longest queue over basic, then over nonbasic."""
    jloc = local_act[s]
    bloc = act_buffer[jloc]
    if Q[bloc] - committed[bloc] >= 1:
        return jloc
    for tier in range(2):
        start = cand_start[s] if tier == 0 else cand2_start[s]
        stop = cand_start[s + 1] if tier == 0 else cand2_start[s + 1]
        lst = cand_list if tier == 0 else cand2_list
        best = -1
        best_q = np.int64(0)
        for k in range(start, stop):
            j = lst[k]
            b = act_buffer[j]
            if Q[b] - committed[b] >= 1 and Q[b] > best_q:
                best, best_q = j, Q[b]
        if best >= 0:
            return best
    return -1


@njit(cache=True, nogil=True)
def select_static_split(s, Q, committed, act_buffer, cand_start, cand_list,
                        split_w, rng_state):
    """Sample among available positive-weight activities proportionally to x*."""
    total = 0.0
    count = 0
    last = -1
    for k in range(cand_start[s], cand_start[s + 1]):
        j = cand_list[k]
        b = act_buffer[j]
        if Q[b] - committed[b] >= 1:
            total += split_w[j]
            count += 1
            last = j
    if count == 0:
        return -1
    if count == 1:
        return last
    u = rng_next(rng_state) * total
    cum = 0.0
    for k in range(cand_start[s], cand_start[s + 1]):
        j = cand_list[k]
        b = act_buffer[j]
        if Q[b] - committed[b] >= 1:
            cum += split_w[j]
            if u <= cum:
                return j
    return last


@njit(cache=True, nogil=True)
def select_closest(s, Q, committed, act_buffer, cand_start, cand_list):
    """First available buffer in precomputed (distance, buffer) order."""
    for k in range(cand_start[s], cand_start[s + 1]):
        j = cand_list[k]
        b = act_buffer[j]
        if Q[b] - committed[b] >= 1:
            return j
    return -1


@njit(cache=True, nogil=True)
def select_activity(code, s, Q, committed, act_buffer, local_act,
                    cand_start, cand_list, cand2_start, cand2_list,
                    safety, h_buf, split_w, rng_state):
    if code == 0:
        return select_dp1(s, Q, committed, act_buffer, local_act,
                          cand_start, cand_list, safety, h_buf)
    if code == 1:
        return select_dp2(s, Q, committed, act_buffer, local_act,
                          cand_start, cand_list, cand2_start, cand2_list)
    if code == 2:
        return select_static_split(s, Q, committed, act_buffer,
                                   cand_start, cand_list, split_w, rng_state)
    return select_closest(s, Q, committed, act_buffer, cand_start, cand_list)


@njit(cache=True, nogil=True)
def assign_on_arrival(code, d, Q, committed, server_act, act_server, act_buffer,
                      safety, local_act, bufcand_start, bufcand_list):
    """Pick the idle server that should take a car just routed to buffer d.

    Candidates are scanned in priority order (largest effective idling cost;
    the benchmark policies list only the local server). Under DP1 a nonlocal
    server engages only when the buffer is strictly above its safety stock.
    """
    if Q[d] - committed[d] < 1:
        return -1
    for k in range(bufcand_start[d], bufcand_start[d + 1]):
        j = bufcand_list[k]
        s = act_server[j]
        if server_act[s] >= 0:
            continue
        if code == 0 and s != d and Q[d] <= safety[d]:
            continue
        return j
    return -1


# Thin wrappers matching the policy-rule contracts; `state` is any object
# exposing Q, committed, and server_act arrays (see sim.SimState).

def dp1_on_server_idle(state, server: int, tables: DispatchTables) -> int:
    return int(select_dp1(server, state.Q, state.committed, tables.act_buffer,
                          tables.local_act, tables.cand_start, tables.cand_list,
                          tables.safety, tables.h_buf))


def dp1_on_buffer_reaches_stock(state, buffer: int, tables: DispatchTables) -> int:
    """Server index chosen when a buffer crosses its safety stock, or -1."""
    j = assign_on_arrival(0, buffer, state.Q, state.committed, state.server_act,
                          tables.act_server, tables.act_buffer, tables.safety,
                          tables.local_act, tables.bufcand_start, tables.bufcand_list)
    return int(tables.act_server[j]) if j >= 0 else -1


def dp2_select(state, server: int, tables: DispatchTables) -> int:
    return int(select_dp2(server, state.Q, state.committed, tables.act_buffer,
                          tables.local_act, tables.cand_start, tables.cand_list,
                          tables.cand2_start, tables.cand2_list))


def static_split_select(state, server: int, tables: DispatchTables, rng_state) -> int:
    return int(select_static_split(server, state.Q, state.committed,
                                   tables.act_buffer, tables.cand_start,
                                   tables.cand_list, tables.split_w, rng_state))


def closest_driver_select(state, server: int, tables: DispatchTables) -> int:
    return int(select_closest(server, state.Q, state.committed, tables.act_buffer,
                              tables.cand_start, tables.cand_list))
