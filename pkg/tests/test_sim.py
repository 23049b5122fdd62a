import json

import numpy as np
import pytest

from heavyhail import DispatchPolicy, PricingPolicy, load_model, revenue_rate
from heavyhail.sim import (SimFailure, confidence_interval, initial_state,
                           pack, run_cell, run_replication, step, summarize,
                           _advance)


def policies_for(model, econ, plan, pricing="static", dispatch="dp1", vf=None, s=1):
    pp = PricingPolicy(kind=pricing, plan=plan, econ=econ, n=model.n, vf=vf)
    dp = DispatchPolicy(kind=dispatch, safety_stock=s)
    return pp, dp


def test_initial_state_all_traveling(smoke, smoke_plan):
    model, econ, _ = smoke
    packed = pack(model, econ, smoke_plan, *policies_for(model, econ, smoke_plan))
    st = initial_state(packed, 1)
    assert st.Q0 == model.n and st.Q.sum() == 0
    assert np.all(st.server_act == -1)


def test_first_events_are_travel_completions(smoke, smoke_plan):
    model, econ, _ = smoke
    packed = pack(model, econ, smoke_plan, *policies_for(model, econ, smoke_plan))
    st = initial_state(packed, 1)
    # with every car traveling the total event rate is n * eta_n
    step(packed, st)
    assert st.event_count == 1
    assert st.Q0 == model.n - 1
    assert st.Q.sum() == 1


def test_job_conservation_over_1e6_events(smoke, smoke_plan):
    model, econ, _ = smoke
    packed = pack(model, econ, smoke_plan, *policies_for(model, econ, smoke_plan,
                                                         dispatch="dp2"))
    st = initial_state(packed, 3)
    # the kernel checks Q0 + sum(Q) == n after every event and fails loudly
    _advance(packed, st, 1e9, 0.0, max_events=1_000_000)
    assert st.event_count == 1_000_000
    assert st.Q0 + int(st.Q.sum()) == model.n
    assert np.all(st.Q >= 0) and np.all(st.committed >= 0)
    assert np.all(st.committed <= st.Q)


def test_two_state_chain_traveling_fraction():
    # one region, one car: alternates buffer <-> travel; the long-run
    # traveling fraction is lambda / (lambda + eta_n)
    cfg = {
        "regions": 1,
        "activities": [{"server": 1, "buffer": 1}],
        "q": [1.0],
        "eta_n": 3.0,
        "n": 1,
        "demand": {"mode": "pstar", "p_star": 1.0, "lambda_star": [2.0]},
        "costs": {"h0": 0.1, "h": [1.0], "c": [0.0]},
        "distances": [[0.0]],
        "sim": {"horizon_hours": 3000.0, "warmup_hours": 100.0, "replications": 2, "seed": 0},
        "dispatch": {"policy": "dp1", "safety_stock": 1},
        "pricing": "static",
    }
    model, econ, _ = load_model(json.dumps(cfg))
    from heavyhail import nominal_plan, optimal_static_rates
    lam, p = optimal_static_rates(econ)
    plan = nominal_plan(model, lam, p)
    rep = run_replication(model, econ, plan, *policies_for(model, econ, plan),
                          horizon=3000.0, warmup=100.0, seed=11)
    expected = 2.0 / (2.0 + 3.0)
    assert rep.traveling_fraction == pytest.approx(expected, rel=0.02)


def test_same_seed_bitwise_identical(smoke, smoke_plan):
    model, econ, _ = smoke
    args = (model, econ, smoke_plan, *policies_for(model, econ, smoke_plan,
                                                   dispatch="dp2"))
    r1 = run_replication(*args, horizon=50.0, warmup=10.0, seed=99)
    r2 = run_replication(*args, horizon=50.0, warmup=10.0, seed=99)
    assert r1.avg_cost == r2.avg_cost
    assert r1.revenue == r2.revenue and r1.holding == r2.holding
    np.testing.assert_array_equal(r1.served, r2.served)
    np.testing.assert_array_equal(r1.idle_fraction, r2.idle_fraction)


def test_dynamic_with_zero_table_equals_static(smoke, smoke_plan, smoke_vf):
    from dataclasses import replace
    model, econ, _ = smoke
    vf0 = replace(smoke_vf, v=np.zeros_like(smoke_vf.v), limit=0.0, r=0.0)
    pp0 = PricingPolicy(kind="dynamic", plan=smoke_plan, econ=econ, n=model.n, vf=vf0)
    pps = PricingPolicy(kind="static", plan=smoke_plan, econ=econ, n=model.n)
    dp = DispatchPolicy(kind="dp1", safety_stock=1)
    r0 = run_replication(model, econ, smoke_plan, pp0, dp, 50.0, 10.0, seed=4)
    rs = run_replication(model, econ, smoke_plan, pps, dp, 50.0, 10.0, seed=4)
    assert r0.avg_cost == rs.avg_cost
    assert r0.event_count == rs.event_count
    np.testing.assert_array_equal(r0.served, rs.served)


def test_time_accounting_identity(smoke, smoke_plan):
    model, econ, _ = smoke
    packed = pack(model, econ, smoke_plan, *policies_for(model, econ, smoke_plan,
                                                         dispatch="dp2"))
    st = initial_state(packed, 8)
    horizon, warmup = 60.0, 10.0
    _advance(packed, st, horizon, warmup)
    inc_busy = st.busy_time(model.num_activities)
    idle = st.cum_idle_time
    T = horizon - warmup
    for i in range(model.num_regions):
        acts = [j for j, (s, _) in enumerate(model.activities) if s == i]
        total = idle[i] + sum(inc_busy[j] for j in acts)
        assert total == pytest.approx(T, rel=1e-9, abs=1e-7)


def test_flow_balance_under_static_pricing(smoke, smoke_plan):
    model, econ, _ = smoke
    rep = run_replication(model, econ, smoke_plan,
                          *policies_for(model, econ, smoke_plan, dispatch="dp2"),
                          horizon=1000.0, warmup=100.0, seed=13)
    completions = int(rep.served.sum())
    assert completions == pytest.approx(rep.travel_completions, rel=0.02)


def test_normalized_cost_definition(smoke, smoke_plan):
    # avg_cost must equal the centering rate minus realized profit rate
    model, econ, _ = smoke
    rep = run_replication(model, econ, smoke_plan,
                          *policies_for(model, econ, smoke_plan),
                          horizon=50.0, warmup=10.0, seed=21)
    vtilde = model.n * revenue_rate(econ, smoke_plan.lambda_star) - model.n * econ.h0
    T = 40.0
    assert rep.avg_cost == pytest.approx(vtilde - (rep.revenue - rep.holding) / T)
    assert rep.avg_cost_with_idleness >= rep.avg_cost


def test_manhattan_centering_rate(manhattan, manhattan_plan):
    model, econ, _ = manhattan
    # n pi(lambda*) - n h0^n = 10000 * 21.538 - 10000 * 1
    vtilde = model.n * revenue_rate(econ, manhattan_plan.lambda_star) - model.n * econ.h0
    assert vtilde == pytest.approx(205380.0)


def test_zero_length_window_rejected(smoke, smoke_plan):
    model, econ, _ = smoke
    with pytest.raises(ValueError, match="horizon"):
        run_replication(model, econ, smoke_plan,
                        *policies_for(model, econ, smoke_plan),
                        horizon=10.0, warmup=10.0, seed=0)


def test_confidence_interval():
    vals = np.array([1.0, 1.0, 1.0, 1.0])
    mean, half = confidence_interval(vals)
    assert mean == 1.0 and half == 0.0
    with pytest.raises(ValueError):
        confidence_interval(np.array([1.0]))
    # against the textbook t multiplier for df=9
    rng = np.random.default_rng(0)
    vals = rng.normal(size=10)
    mean, half = confidence_interval(vals)
    assert half == pytest.approx(2.2621571628 * vals.std(ddof=1) / np.sqrt(10))


def test_run_cell_deterministic_and_threaded(smoke, smoke_plan):
    model, econ, _ = smoke
    pp, dp = policies_for(model, econ, smoke_plan, dispatch="dp2")
    c1 = run_cell(model, econ, smoke_plan, pp, dp, 40.0, 10.0, 3, 500, threads=1)
    c2 = run_cell(model, econ, smoke_plan, pp, dp, 40.0, 10.0, 3, 500, threads=3)
    np.testing.assert_array_equal(c1.rep_costs, c2.rep_costs)
    assert c1.mean_cost == c2.mean_cost and c1.ci_half_width == c2.ci_half_width


def test_run_cell_requires_two_reps(smoke, smoke_plan):
    model, econ, _ = smoke
    pp, dp = policies_for(model, econ, smoke_plan)
    with pytest.raises(ValueError, match="replications"):
        run_cell(model, econ, smoke_plan, pp, dp, 40.0, 10.0, 1, 0)


def test_traveling_fraction_high_at_full_scale(manhattan, manhattan_plan, manhattan_vf):
    model, econ, _ = manhattan
    pp = PricingPolicy(kind="dynamic", plan=manhattan_plan, econ=econ,
                       n=model.n, vf=manhattan_vf)
    dp = DispatchPolicy(kind="dp2", safety_stock=1)
    rep = run_replication(model, econ, manhattan_plan, pp, dp, 120.0, 40.0, seed=6)
    assert rep.traveling_fraction > 0.95
