import json

import numpy as np
import pytest

from heavyhail import (ConfigError, DomainError, demand, demand_inverse,
                       incidence, load_model, revenue_rate)
from tests.conftest import load_config_dict, two_region_config


def test_manhattan_config_loads(manhattan):
    model, econ, settings = manhattan
    assert model.num_regions == 4
    assert model.num_activities == 10
    assert model.n == 10000
    assert abs(model.q.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(econ.demand_a, 2 * np.array([0.3678, 1.0723, 0.6792, 0.0345]))
    assert settings.horizon_hours == 1000.0 and settings.warmup_hours == 200.0


def test_bad_q_sum_reports_value():
    doc = load_config_dict("manhattan.json")
    doc["q"] = [0.5, 0.6, 0.2, 0.1]
    with pytest.raises(ConfigError, match="q sums to 1.4"):
        load_model(json.dumps(doc))


def test_holding_cost_at_boundary_rejected():
    doc = load_config_dict("manhattan.json")
    doc["costs"]["h"][0] = doc["costs"]["h0"]
    with pytest.raises(ConfigError, match="h_i > h0 violated"):
        load_model(json.dumps(doc))


def test_first_activities_must_be_local():
    doc = load_config_dict("manhattan.json")
    doc["activities"][0] = {"server": 1, "buffer": 2}
    with pytest.raises(ConfigError, match="local"):
        load_model(json.dumps(doc))


def test_duplicate_activity_rejected():
    doc = load_config_dict("manhattan.json")
    doc["activities"].append({"server": 1, "buffer": 2})
    with pytest.raises(ConfigError, match="duplicate"):
        load_model(json.dumps(doc))


def test_asymmetric_distances_rejected():
    doc = load_config_dict("manhattan.json")
    doc["distances"][0][1] = 99.0
    with pytest.raises(ConfigError, match="symmetric"):
        load_model(json.dumps(doc))


def test_parse_error():
    with pytest.raises(ConfigError, match="JSON"):
        load_model("{not json")


def test_ab_demand_mode():
    model, econ, _ = load_model(two_region_config())
    assert econ.demand_a[0] == 2.0 and econ.demand_b[0] == 1.0


def test_demand_examples(manhattan):
    _, econ, _ = manhattan
    # linear demand through the rounded study values
    assert abs((2.1446 - 0.1072 * 10.0) - 1.0726) < 1e-12
    assert demand(econ, 1, 10.0) == pytest.approx(1.0723, abs=1e-12)  # = lambda_2*
    assert demand(econ, 0, 0.0) == pytest.approx(econ.demand_a[0])
    assert demand(econ, 0, econ.choke_price(0)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        demand(econ, 0, econ.choke_price(0) + 1e-6)
    with pytest.raises(DomainError):
        demand(econ, 0, -0.01)


def test_demand_inverse_examples(manhattan):
    _, econ, _ = manhattan
    assert demand_inverse(econ, 0, econ.demand_a[0] / 2.0) == pytest.approx(10.0)
    assert demand_inverse(econ, 2, 0.0) == pytest.approx(econ.choke_price(2))
    assert demand_inverse(econ, 2, econ.demand_a[2]) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        demand_inverse(econ, 0, econ.demand_a[0] + 1e-9)


def test_demand_round_trip(manhattan):
    _, econ, _ = manhattan
    rng = np.random.default_rng(7)
    for _ in range(1000):
        i = int(rng.integers(0, 4))
        lam = float(rng.uniform(0.0, econ.demand_a[i]))
        assert abs(demand(econ, i, demand_inverse(econ, i, lam)) - lam) < 1e-10


def test_revenue_rate_examples(manhattan):
    _, econ, _ = manhattan
    lam_star = econ.demand_a / 2.0
    # direct evaluation cross-checked as p* times total demand
    expected = float(np.sum(lam_star * 10.0))
    assert expected == pytest.approx(21.538)
    assert revenue_rate(econ, lam_star) == pytest.approx(expected, rel=1e-12)
    assert revenue_rate(econ, np.zeros(4)) == 0.0
    assert revenue_rate(econ, econ.demand_a) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        revenue_rate(econ, econ.demand_a + 1e-9)


def test_revenue_rate_strictly_concave_on_segments(manhattan):
    _, econ, _ = manhattan
    rng = np.random.default_rng(11)
    for _ in range(200):
        x = rng.uniform(0.05, 0.95, 4) * econ.demand_a
        y = rng.uniform(0.05, 0.95, 4) * econ.demand_a
        if np.allclose(x, y):
            continue
        mid = revenue_rate(econ, (x + y) / 2.0)
        avg = 0.5 * (revenue_rate(econ, x) + revenue_rate(econ, y))
        assert mid > avg


def test_incidence_structure(manhattan):
    model, _, _ = manhattan
    inc = incidence(model)
    assert inc.A.shape == (4, 10) and inc.C.shape == (4, 10)
    np.testing.assert_array_equal(inc.A.sum(axis=0), np.ones(10))
    np.testing.assert_array_equal(inc.C.sum(axis=0), np.ones(10))
    for j, (s, b) in enumerate(model.activities):
        assert inc.A[s, j] == 1.0 and inc.C[b, j] == 1.0
    # study instance: columns of A match the printed capacity-consumption matrix
    A_expected = np.array([
        [1, 0, 0, 0, 1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 1, 1, 0, 0, 0],
        [0, 0, 1, 0, 0, 0, 0, 1, 1, 0],
        [0, 0, 0, 1, 0, 0, 0, 0, 0, 1],
    ], dtype=float)
    np.testing.assert_array_equal(inc.A, A_expected)
