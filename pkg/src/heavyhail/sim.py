"""Seeded CTMC simulation of the closed network under a policy pair.

The reported objective follows the benchmark-study accounting: realized
profit is revenue minus holding costs (idleness enters through lost
revenue), and the normalized average cost subtracts the profit rate from
the control-independent centering rate n*pi(lambda*) - n*h0. A diagnostic
variant that also charges explicit idleness costs is reported alongside.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernel
from ._rng import stream_state
from .model import EconParams, NetworkModel, revenue_rate
from .policies import DispatchPolicy, DispatchTables, PricingPolicy, build_tables
from .static_plan import StaticPlan

_KERNEL_ERRORS = {
    1: "event space empty (no busy server and no traveling car)",
    2: "negative count encountered",
    3: "job conservation violated",
}


@dataclass
class SimState:
    """Mutable simulator state; counts include cars in service position."""

    t: float
    Q: np.ndarray              # waiting cars per buffer
    Q0: int                    # traveling cars
    committed: np.ndarray      # cars in service position per buffer
    server_act: np.ndarray     # current activity per server, -1 when idle
    rng_state: np.ndarray
    acc: np.ndarray
    served: np.ndarray
    event_count: int = 0

    @property
    def cum_revenue(self) -> float:
        return float(self.acc[_kernel.ACC_REVENUE])

    @property
    def cum_holding(self) -> float:
        return float(self.acc[_kernel.ACC_HOLDING])

    @property
    def cum_idle_time(self) -> np.ndarray:
        I = self.Q.size
        return self.acc[_kernel.ACC_FIXED:_kernel.ACC_FIXED + I].copy()

    def busy_time(self, num_activities: int) -> np.ndarray:
        I = self.Q.size
        lo = _kernel.ACC_FIXED + I
        return self.acc[lo:lo + num_activities].copy()


@dataclass(frozen=True)
class SimReport:
    horizon: float
    warmup: float
    seed: int
    avg_cost: float                 # normalized cost rate, $/h
    avg_cost_with_idleness: float   # diagnostic: explicit idle penalty added
    avg_profit_rate: float
    revenue: float
    holding: float
    served: np.ndarray              # matches per region (post-warmup)
    travel_completions: int
    idle_fraction: np.ndarray
    traveling_fraction: float
    mean_workload: float
    event_count: int


@dataclass(frozen=True)
class ExperimentCell:
    pricing: str
    dispatch: str
    mean_cost: float
    ci_half_width: float
    rep_costs: np.ndarray
    reports: tuple[SimReport, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class ExperimentSummary:
    cells: tuple[ExperimentCell, ...]
    reps: int
    base_seed: int

    def cell(self, pricing: str, dispatch: str) -> ExperimentCell:
        for c in self.cells:
            if c.pricing == pricing and c.dispatch == dispatch:
                return c
        raise KeyError(f"no cell ({pricing}, {dispatch})")


class SimFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class _Packed:
    """Kernel-ready arrays for one (model, econ, plan, policies) combination."""

    model: NetworkModel
    econ: EconParams
    plan: StaticPlan
    tables: DispatchTables
    v_table: np.ndarray
    lam_base: np.ndarray
    dem_a_n: np.ndarray
    dem_b_n: np.ndarray
    price_coef: np.ndarray
    lam_lo: np.ndarray
    lam_hi: np.ndarray
    q_cum: np.ndarray
    vtilde_rate: float


def pack(model: NetworkModel, econ: EconParams, plan: StaticPlan,
         pricing: PricingPolicy, dispatch: DispatchPolicy) -> _Packed:
    n = model.n
    lam_base = n * plan.lambda_star
    vtilde = n * revenue_rate(econ, plan.lambda_star) - n * econ.h0
    return _Packed(
        model=model, econ=econ, plan=plan,
        tables=build_tables(model, econ, plan, dispatch),
        v_table=pricing.value_table(),
        lam_base=lam_base,
        dem_a_n=n * econ.demand_a,
        dem_b_n=n * econ.demand_b,
        price_coef=np.sqrt(n) * econ.demand_b / 2.0,
        lam_lo=0.01 * lam_base,
        lam_hi=n * econ.demand_a,
        q_cum=np.cumsum(model.q),
        vtilde_rate=vtilde,
    )


def initial_state(packed: _Packed, seed: int) -> SimState:
    """All cars start at the travel node; the warm-up absorbs the transient."""
    model = packed.model
    I, J = model.num_regions, model.num_activities
    return SimState(
        t=0.0,
        Q=np.zeros(I, dtype=np.int64),
        Q0=model.n,
        committed=np.zeros(I, dtype=np.int64),
        server_act=np.full(I, -1, dtype=np.int64),
        rng_state=stream_state(seed),
        acc=np.zeros(_kernel.ACC_FIXED + I + J),
        served=np.zeros(I + 1, dtype=np.int64),
        event_count=0,
    )


def _advance(packed: _Packed, state: SimState, t_end: float, warmup: float,
             max_events: int = -1) -> None:
    state_i = np.array([state.Q0, state.event_count, 0], dtype=np.int64)
    state_f = np.array([state.t], dtype=float)
    t = packed.tables
    rc = _kernel.run_events(
        t.act_server, t.act_buffer, packed.q_cum, packed.model.eta_n,
        np.int64(packed.model.n),
        packed.lam_base, packed.dem_a_n, packed.dem_b_n, packed.price_coef,
        packed.lam_lo, packed.lam_hi, packed.v_table,
        float(packed.econ.h0), np.asarray(packed.econ.h, dtype=float),
        np.int64(t.code), t.safety, t.local_act, t.cand_start, t.cand_list,
        t.cand2_start, t.cand2_list, t.split_w, t.bufcand_start, t.bufcand_list,
        t.h_buf,
        float(t_end), float(warmup), np.int64(max_events),
        state.Q, state.committed, state.server_act, state_i, state_f,
        state.rng_state, state.acc, state.served,
    )
    if rc != 0:
        raise SimFailure(f"simulation kernel failed: {_KERNEL_ERRORS.get(rc, rc)}")
    state.Q0 = int(state_i[0])
    state.event_count = int(state_i[1])
    state.t = float(state_f[0])


def step(packed: _Packed, state: SimState, warmup: float = 0.0,
         t_end: float = np.inf) -> None:
    """Apply a single event (used by the invariant tests)."""
    _advance(packed, state, min(t_end, np.finfo(float).max), warmup, max_events=1)


def run_replication(model: NetworkModel, econ: EconParams, plan: StaticPlan,
                    pricing: PricingPolicy, dispatch: DispatchPolicy,
                    horizon: float, warmup: float, seed: int) -> SimReport:
    if not horizon > warmup >= 0:
        raise ValueError(f"need horizon > warmup >= 0, got {horizon}, {warmup}")
    packed = pack(model, econ, plan, pricing, dispatch)
    state = initial_state(packed, seed)
    _advance(packed, state, horizon, warmup)
    return summarize(packed, state, horizon, warmup, seed)


def summarize(packed: _Packed, state: SimState, horizon: float, warmup: float,
              seed: int) -> SimReport:
    model = packed.model
    I, J = model.num_regions, model.num_activities
    T = horizon - warmup
    revenue = state.cum_revenue
    holding = state.cum_holding
    profit_rate = (revenue - holding) / T
    avg_cost = packed.vtilde_rate - profit_rate
    idle_hours = state.cum_idle_time
    idle_cost_rate = float(np.dot(packed.econ.c, idle_hours)) / T
    return SimReport(
        horizon=horizon, warmup=warmup, seed=seed,
        avg_cost=avg_cost,
        avg_cost_with_idleness=avg_cost + idle_cost_rate,
        avg_profit_rate=profit_rate,
        revenue=revenue, holding=holding,
        served=state.served[:I].copy(),
        travel_completions=int(state.served[I]),
        idle_fraction=idle_hours / T,
        traveling_fraction=float(state.acc[_kernel.ACC_Q0_TIME]) / (T * model.n),
        mean_workload=float(state.acc[_kernel.ACC_W_TIME]) / T,
        event_count=state.event_count,
    )


def confidence_interval(values: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Mean and Student-t half width with df = len - 1."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("confidence interval needs at least two replications")
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    tcrit = float(stats.t.ppf(0.5 + level / 2.0, values.size - 1))
    return mean, tcrit * sd / np.sqrt(values.size)


def run_cell(model, econ, plan, pricing: PricingPolicy, dispatch: DispatchPolicy,
             horizon: float, warmup: float, reps: int, base_seed: int,
             threads: int = 1) -> ExperimentCell:
    """Replications of one (pricing, dispatch) cell with seeds base_seed + k."""
    if reps < 2:
        raise ValueError("need at least 2 replications for a confidence interval")
    seeds = [base_seed + k for k in range(reps)]

    def one(seed):
        return run_replication(model, econ, plan, pricing, dispatch,
                               horizon, warmup, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, seeds))
    else:
        reports = [one(s) for s in seeds]
    costs = np.array([r.avg_cost for r in reports])
    mean, half = confidence_interval(costs)
    return ExperimentCell(pricing=pricing.kind, dispatch=dispatch.kind,
                          mean_cost=mean, ci_half_width=half, rep_costs=costs,
                          reports=tuple(reports))


def run_experiment(model, econ, plan, pricing_policies, dispatch_policies,
                   horizon: float, warmup: float, reps: int, base_seed: int,
                   threads: int = 1) -> ExperimentSummary:
    """Full policy grid; deterministic for a given base seed."""
    cells = []
    for pricing in pricing_policies:
        for dispatch in dispatch_policies:
            cells.append(run_cell(model, econ, plan, pricing, dispatch,
                                  horizon, warmup, reps, base_seed, threads))
    return ExperimentSummary(cells=tuple(cells), reps=reps, base_seed=base_seed)
