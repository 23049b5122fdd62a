"""Network topology, economic primitives, and config loading.

All rates are per hour. Regions, servers, and buffers are indexed 0..I-1
internally; config files use 1-based activity definitions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Raised when a config document fails to parse or violates an invariant."""


class DomainError(ValueError):
    """Raised when a price or demand rate is outside its admissible range."""


@dataclass(frozen=True)
class NetworkModel:
    """Closed network: I regions, J dispatch activities, one travel node."""

    num_regions: int
    activities: tuple[tuple[int, int], ...]  # (server, buffer), 0-based
    q: np.ndarray                            # routing probabilities, length I
    eta_n: float                             # travel completion rate per traveling car
    n: int                                   # fleet size
    distances: np.ndarray                    # I x I miles, symmetric, zero diagonal

    @property
    def num_activities(self) -> int:
        return len(self.activities)

    def server_of(self, j: int) -> int:
        return self.activities[j][0]

    def buffer_of(self, j: int) -> int:
        return self.activities[j][1]


@dataclass(frozen=True)
class EconParams:
    """Linear demand curves and cost rates for the n-car system."""

    demand_a: np.ndarray   # rides/hour intercepts a_i
    demand_b: np.ndarray   # rides/hour per dollar slopes b_i
    h0: float              # cost per traveling car-hour
    h: np.ndarray          # cost per waiting car-hour, per region
    c: np.ndarray          # cost per idle server-hour, per region

    def choke_price(self, i: int) -> float:
        return self.demand_a[i] / self.demand_b[i]


@dataclass(frozen=True)
class IncidenceMatrices:
    """Capacity-consumption matrix A and constituency matrix C (I x J, 0/1)."""

    A: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class SimSettings:
    horizon_hours: float = 1000.0
    warmup_hours: float = 200.0
    replications: int = 10
    seed: int = 0
    dispatch: str = "dp1"
    safety_stock: int = 1
    pricing: str = "dynamic"
    extra: dict = field(default_factory=dict)


_DISPATCH_POLICIES = ("dp1", "dp2", "static", "closest")
_PRICING_POLICIES = ("static", "dynamic")


def incidence(model: NetworkModel) -> IncidenceMatrices:
    """Build A and C from the activity list: A[i][j]=1 iff s(j)=i, C[i][j]=1 iff b(j)=i."""
    I, J = model.num_regions, model.num_activities
    A = np.zeros((I, J))
    C = np.zeros((I, J))
    for j, (s, b) in enumerate(model.activities):
        A[s, j] = 1.0
        C[b, j] = 1.0
    return IncidenceMatrices(A=A, C=C)


def demand(econ: EconParams, i: int, p: float) -> float:
    """Demand rate a_i - b_i * p for region i at price p."""
    hi = econ.choke_price(i)
    if not 0.0 <= p <= hi:
        raise DomainError(f"price {p} outside [0, {hi}] for region {i + 1}")
    return float(econ.demand_a[i] - econ.demand_b[i] * p)


def demand_inverse(econ: EconParams, i: int, lam: float) -> float:
    """Price that induces demand rate lam in region i."""
    if not 0.0 <= lam <= econ.demand_a[i]:
        raise DomainError(f"demand rate {lam} outside [0, {econ.demand_a[i]}] for region {i + 1}")
    return float((econ.demand_a[i] - lam) / econ.demand_b[i])


def revenue_rate(econ: EconParams, lam: np.ndarray) -> float:
    """Revenue rate sum_i lam_i * price_i(lam_i) for a demand rate vector."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != econ.demand_a.shape:
        raise DomainError(f"demand vector has length {lam.size}, expected {econ.demand_a.size}")
    if np.any(lam < 0.0) or np.any(lam > econ.demand_a):
        raise DomainError("demand rate vector outside [0, a] componentwise")
    return float(np.sum(lam * (econ.demand_a - lam) / econ.demand_b))


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _as_vector(raw, path: str, length: int) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    _require(arr.ndim == 1, path, f"expected a flat array, got shape {arr.shape}")
    _require(arr.size == length, path, f"expected length {length}, got {arr.size}")
    return arr


def _validate_network(model: NetworkModel) -> None:
    I = model.num_regions
    _require(I >= 1, "regions", "need at least one region")
    _require(model.n >= 1, "n", "fleet size must be >= 1")
    _require(model.eta_n > 0.0, "eta_n", "travel rate must be positive")
    qsum = float(model.q.sum())
    _require(abs(qsum - 1.0) <= 1e-12, "q", f"q sums to {qsum}")
    _require(bool(np.all(model.q > 0.0)), "q", "every q_i must be positive")
    _require(len(model.activities) >= I, "activities", "need at least the I local activities")
    for j in range(I):
        s, b = model.activities[j]
        _require(s == j and b == j, "activities",
                 f"activity {j + 1} must be the local activity for region {j + 1}")
    seen = set()
    for j, (s, b) in enumerate(model.activities):
        _require(0 <= s < I and 0 <= b < I, "activities",
                 f"activity {j + 1} references server {s + 1} / buffer {b + 1} out of range")
        _require((s, b) not in seen, "activities",
                 f"duplicate (server, buffer) pair ({s + 1}, {b + 1})")
        seen.add((s, b))
    D = model.distances
    _require(D.shape == (I, I), "distances", f"expected {I}x{I} matrix, got {D.shape}")
    _require(bool(np.all(D >= 0.0)), "distances", "distances must be nonnegative")
    _require(bool(np.allclose(D, D.T, atol=0.0)), "distances", "distance matrix must be symmetric")
    _require(bool(np.all(np.diag(D) == 0.0)), "distances", "distance matrix diagonal must be zero")


def _validate_econ(econ: EconParams, I: int) -> None:
    _require(econ.demand_a.size == I, "demand", f"demand vectors must have length {I}")
    _require(bool(np.all(econ.demand_a > 0.0)), "demand", "a_i must be positive")
    _require(bool(np.all(econ.demand_b > 0.0)), "demand", "b_i must be positive")
    _require(econ.h.size == I, "costs.h", f"expected length {I}")
    _require(econ.c.size == I, "costs.c", f"expected length {I}")
    _require(econ.h0 >= 0.0, "costs.h0", "h0 must be nonnegative")
    if not np.all(econ.h > econ.h0):
        bad = int(np.argmin(econ.h - econ.h0)) + 1
        raise ConfigError(f"costs.h: h_i > h0 violated for region {bad}")
    _require(bool(np.all(econ.c >= 0.0)), "costs.c", "c_i must be nonnegative")


def _parse_demand(raw: dict, I: int) -> tuple[np.ndarray, np.ndarray]:
    mode = raw.get("mode")
    if mode == "ab":
        a = _as_vector(raw.get("a"), "demand.a", I)
        b = _as_vector(raw.get("b"), "demand.b", I)
    elif mode == "pstar":
        lam = _as_vector(raw.get("lambda_star"), "demand.lambda_star", I)
        p_star = raw.get("p_star")
        _require(p_star is not None, "demand.p_star", "missing")
        p = np.full(I, float(p_star)) if np.isscalar(p_star) else _as_vector(p_star, "demand.p_star", I)
        _require(bool(np.all(p > 0.0)), "demand.p_star", "p* must be positive")
        _require(bool(np.all(lam > 0.0)), "demand.lambda_star", "lambda* must be positive")
        a = 2.0 * lam
        b = lam / p
    else:
        raise ConfigError(f"demand.mode: expected 'ab' or 'pstar', got {mode!r}")
    return a, b


def load_model(config_text: str) -> tuple[NetworkModel, EconParams, SimSettings]:
    """Parse a JSON config document and validate every type invariant."""
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "<root>", "config must be a JSON object")

    I = doc.get("regions")
    _require(isinstance(I, int) and I >= 1, "regions", "must be a positive integer")

    raw_acts = doc.get("activities")
    _require(isinstance(raw_acts, list) and raw_acts, "activities", "must be a nonempty array")
    acts = []
    for k, entry in enumerate(raw_acts):
        _require(isinstance(entry, dict) and "server" in entry and "buffer" in entry,
                 f"activities[{k}]", "expected an object with 'server' and 'buffer'")
        acts.append((int(entry["server"]) - 1, int(entry["buffer"]) - 1))

    model = NetworkModel(
        num_regions=I,
        activities=tuple(acts),
        q=_as_vector(doc.get("q"), "q", I),
        eta_n=float(doc.get("eta_n", 0.0)),
        n=int(doc.get("n", 0)),
        distances=np.asarray(doc.get("distances", np.zeros((I, I))), dtype=float),
    )
    model.q.setflags(write=False)
    model.distances.setflags(write=False)
    _validate_network(model)

    _require(isinstance(doc.get("demand"), dict), "demand", "missing demand section")
    a, b = _parse_demand(doc["demand"], I)
    costs = doc.get("costs")
    _require(isinstance(costs, dict), "costs", "missing costs section")
    econ = EconParams(
        demand_a=a,
        demand_b=b,
        h0=float(costs.get("h0", 0.0)),
        h=_as_vector(costs.get("h"), "costs.h", I),
        c=_as_vector(costs.get("c"), "costs.c", I),
    )
    for arr in (econ.demand_a, econ.demand_b, econ.h, econ.c):
        arr.setflags(write=False)
    _validate_econ(econ, I)

    sim_raw = doc.get("sim", {})
    disp_raw = doc.get("dispatch", {})
    pricing = doc.get("pricing", "static")
    _require(pricing in _PRICING_POLICIES, "pricing", f"expected one of {_PRICING_POLICIES}")
    policy = disp_raw.get("policy", "dp1")
    _require(policy in _DISPATCH_POLICIES, "dispatch.policy", f"expected one of {_DISPATCH_POLICIES}")
    settings = SimSettings(
        horizon_hours=float(sim_raw.get("horizon_hours", 1000.0)),
        warmup_hours=float(sim_raw.get("warmup_hours", 200.0)),
        replications=int(sim_raw.get("replications", 10)),
        seed=int(sim_raw.get("seed", 0)),
        dispatch=policy,
        safety_stock=int(disp_raw.get("safety_stock", 1)),
        pricing=pricing,
    )
    _require(settings.horizon_hours > 0, "sim.horizon_hours", "must be positive")
    _require(settings.warmup_hours >= 0, "sim.warmup_hours", "must be nonnegative")
    _require(settings.horizon_hours > settings.warmup_hours, "sim",
             "horizon must exceed warmup")
    _require(settings.safety_stock >= 0, "dispatch.safety_stock", "must be nonnegative")
    return model, econ, settings


def load_model_file(path: str) -> tuple[NetworkModel, EconParams, SimSettings]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_model(fh.read())
