"""Stability-aware optimal power flow with load-following LQR costs.

The package couples a linearized OPF with Riccati-based control-cost
surrogates (the CARE alternation) and validates dispatches by simulating
the closed-loop nonlinear power-system DAEs under LQR or AGC control.
"""

from .dae_model import (SystemPoint, build_load_vector, eval_g, eval_h,
                        solve_algebraic)
from .dispatch import (DispatchConfig, DispatchSolution, alqr_opf,
                       baseline_opf, solve_linopf)
from .errors import GridLqrError
from .linearizer import LinearizedSystem, jacobians, linearize, reduce
from .lqr import (CostWeightConfig, RiccatiSolution, WeightMatrices, build_qr,
                  estimate_control_cost, feedback, solve_care)
from .netcase import (AdmittanceMatrix, Branch, Bus, GenCost, MachineParams,
                      NetworkCase, build_ybus, load_network, parse_case,
                      serialize_case)
from .qp import solve_qp
from .simulate import (ScenarioConfig, ScenarioReport, Trajectory,
                       apply_step_load, run_scenario, simulate)
from .steady_state import (Setpoints, base_operating_point,
                           extract_equilibrium, init_generators, load_flow)

__version__ = "0.1.0"

__all__ = [
    "AdmittanceMatrix", "Branch", "Bus", "CostWeightConfig", "DispatchConfig",
    "DispatchSolution", "GenCost", "GridLqrError", "LinearizedSystem",
    "MachineParams", "NetworkCase", "RiccatiSolution", "ScenarioConfig",
    "ScenarioReport", "Setpoints", "SystemPoint", "Trajectory",
    "WeightMatrices", "alqr_opf", "apply_step_load", "base_operating_point",
    "baseline_opf", "build_load_vector", "build_qr", "build_ybus",
    "estimate_control_cost", "eval_g", "eval_h", "extract_equilibrium",
    "feedback", "init_generators", "jacobians", "linearize", "load_flow",
    "load_network", "parse_case", "reduce", "run_scenario", "serialize_case",
    "simulate", "solve_algebraic", "solve_care", "solve_linopf", "solve_qp",
    "__version__",
]
