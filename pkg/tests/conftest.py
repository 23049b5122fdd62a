import json
import pathlib

import numpy as np
import pytest

from heavyhail import (derive_ewf, load_model, nominal_plan,
                       optimal_static_rates, solve_bellman)

ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


def load_config_dict(name):
    with open(CONFIGS / name, "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def manhattan_config_path():
    return str(CONFIGS / "manhattan.json")


@pytest.fixture(scope="session")
def smoke_config_path():
    return str(CONFIGS / "manhattan_smoke.json")


@pytest.fixture(scope="session")
def manhattan():
    with open(CONFIGS / "manhattan.json", "r", encoding="utf-8") as fh:
        return load_model(fh.read())


@pytest.fixture(scope="session")
def manhattan_plan(manhattan):
    model, econ, _ = manhattan
    lam, p = optimal_static_rates(econ)
    return nominal_plan(model, lam, p)


@pytest.fixture(scope="session")
def manhattan_ewf(manhattan, manhattan_plan):
    model, econ, _ = manhattan
    return derive_ewf(model, econ, manhattan_plan)


@pytest.fixture(scope="session")
def manhattan_vf(manhattan_ewf):
    return solve_bellman(manhattan_ewf)


@pytest.fixture(scope="session")
def smoke():
    with open(CONFIGS / "manhattan_smoke.json", "r", encoding="utf-8") as fh:
        return load_model(fh.read())


@pytest.fixture(scope="session")
def smoke_plan(smoke):
    model, econ, _ = smoke
    lam, p = optimal_static_rates(econ)
    return nominal_plan(model, lam, p)


@pytest.fixture(scope="session")
def smoke_vf(smoke, smoke_plan):
    model, econ, _ = smoke
    return solve_bellman(derive_ewf(model, econ, smoke_plan))


def two_region_config(**overrides):
    """Minimal balanced two-region network: locals only, lambda* = nu."""
    doc = {
        "regions": 2,
        "activities": [{"server": 1, "buffer": 1}, {"server": 2, "buffer": 2}],
        "q": [0.5, 0.5],
        "eta_n": 2.0,
        "n": 100,
        "demand": {"mode": "ab", "a": [2.0, 2.0], "b": [1.0, 1.0]},
        "costs": {"h0": 0.5, "h": [2.0, 2.0], "c": [1.0, 1.0]},
        "distances": [[0.0, 1.0], [1.0, 0.0]],
        "sim": {"horizon_hours": 10.0, "warmup_hours": 1.0, "replications": 2, "seed": 1},
        "dispatch": {"policy": "dp1", "safety_stock": 1},
        "pricing": "static",
    }
    doc.update(overrides)
    return json.dumps(doc)
