import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from gridlqr.dispatch import alqr_opf, baseline_opf
from gridlqr.linearizer import linearize
from gridlqr.netcase import build_ybus, load_network, parse_case
from gridlqr.simulate import (ScenarioConfig, _auto_machines, apply_step_load,
                              make_controller, simulate)
from gridlqr.steady_state import base_operating_point

CASE_NAMES = ["case9", "case14", "case39", "case57"]


@dataclass
class Pipeline:
    """Everything the heavier tests need for one network, computed once."""

    name: str
    case: object
    Y: object
    z0: object
    lin: object
    d0: np.ndarray
    d_s: np.ndarray
    delta_d: np.ndarray
    cfg: ScenarioConfig
    solutions: dict = field(default_factory=dict)
    sims: dict = field(default_factory=dict)       # (method, controller) -> (traj, metrics)
    table1_seconds: float = 0.0                    # dispatches + the two LQR sims


def _build_pipeline(name: str) -> Pipeline:
    cfg = ScenarioConfig(t_f=60.0, dt=0.005)
    case = load_network(name, _auto_machines(name))
    Y = build_ybus(case)
    z0 = base_operating_point(case, Y)
    lin = linearize(case, Y, z0)
    d0, d_s, delta_d = apply_step_load(case, cfg.step_fraction, cfg.power_factor)
    pipe = Pipeline(name, case, Y, z0, lin, d0, d_s, delta_d, cfg)

    t0 = time.perf_counter()
    pipe.solutions["alqr"] = alqr_opf(case, Y, lin, delta_d, cfg.dispatch)
    pipe.solutions["baseline"] = baseline_opf(case, Y, lin, delta_d, cfg.dispatch)
    for method in ("alqr", "baseline"):
        sol = pipe.solutions[method]
        controller = make_controller("lqr", case, sol, cfg)
        pipe.sims[(method, "lqr")] = simulate(case, Y, z0, sol.z_eq, controller,
                                              d_s, cfg)
    pipe.table1_seconds = time.perf_counter() - t0
    for method in ("alqr", "baseline"):
        sol = pipe.solutions[method]
        controller = make_controller("agc", case, sol, cfg)
        pipe.sims[(method, "agc")] = simulate(case, Y, z0, sol.z_eq, controller,
                                              d_s, cfg)
    return pipe


@pytest.fixture(scope="session")
def pipeline():
    """pipeline(name) -> Pipeline with dispatches and 60 s simulations."""
    cache = {}

    def get(name: str) -> Pipeline:
        if name not in cache:
            cache[name] = _build_pipeline(name)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def case9():
    return load_network("case9")


@pytest.fixture(scope="session")
def y9(case9):
    return build_ybus(case9)


@pytest.fixture(scope="session")
def z9(case9, y9):
    return base_operating_point(case9, y9)


@pytest.fixture(scope="session")
def lin9(case9, y9, z9):
    return linearize(case9, y9, z9)


TWO_BUS_LOSSLESS = """
function mpc = twobus
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;
    2 1 {pd} {qd} 0 0 1 1 0 345 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 300 -300 1.0 100 1 250 0;
];
mpc.branch = [
    1 2 0 0.1 0 250 250 250 0 0 1;
];
mpc.gencost = [
    2 0 0 3 0.1 5 150;
];
"""


@pytest.fixture()
def two_bus():
    def make(pd=0.0, qd=0.0):
        return parse_case(TWO_BUS_LOSSLESS.format(pd=pd, qd=qd))

    return make
