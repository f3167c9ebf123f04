"""Dispatch optimization: linearized OPF, ALQR alternation, and baseline.

The per-iteration subproblem is a QP over z = [x, a, u]:

    minimize  c(p_g) [+ (T/2) (x - x0)' P (x - x0)]
    s.t.      [g_x g_a g_u] (z - z0) = 0
              [h_x h_a] ((x,a) - (x0,a0)) = dd
              theta_slack pinned, a inside its box

The decision z^s is represented as a :class:`SystemPoint` carrying the
stepped load d^s it balances in the linearized sense.  After the
alternation, setpoints are extracted from the best iterate and refined
through the nonlinear load-flow to produce z^eq and the simulation-time
controller (P, K).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dae_model import SystemPoint
from .errors import GridLqrError
from .linearizer import LinearizedSystem
from .lqr import (CostWeightConfig, RiccatiSolution, WeightMatrices, build_qr,
                  estimate_control_cost, solve_care)
from .netcase import AdmittanceMatrix, NetworkCase
from .qp import QpInfo, solve_qp
from .steady_state import Setpoints, extract_equilibrium


@dataclass(frozen=True)
class BoxSetA:
    """Operating box on the algebraic variables; slack angle is pinned."""

    p_min: np.ndarray
    p_max: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    v_min: np.ndarray
    v_max: np.ndarray
    slack: int

    @classmethod
    def from_case(cls, case: NetworkCase):
        return cls(case.p_min, case.p_max, case.q_min, case.q_max,
                   case.v_min, case.v_max, case.slack)


@dataclass(frozen=True)
class DispatchConfig:
    """Coupling alpha, LQR time-scale factor and alternation depth."""

    alpha: float = 0.6
    t_lqr: float = 1000.0
    k_max: int = 2

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")

    @property
    def weights(self) -> CostWeightConfig:
        return CostWeightConfig(alpha=self.alpha, t_lqr=self.t_lqr)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    objective: float
    care_residual: float
    qp_iterations: int


@dataclass
class DispatchSolution:
    """Optimized steady state plus the refined equilibrium and controller."""

    method: str
    z_s: SystemPoint
    z_eq: SystemPoint
    riccati: RiccatiSolution          # CARE at z_eq: simulation-time (P, K)
    weights_eq: WeightMatrices
    objective: float
    p_best: np.ndarray | None         # Riccati matrix paired with z_s
    steady_cost_s: float
    steady_cost_eq: float
    est_control_cost: float
    iterations: list[IterationRecord] = field(default_factory=list)
    wall_time: float = 0.0

    def iteration_log(self) -> str:
        lines = [
            f"k={r.k} objective={r.objective:.10g} "
            f"care_residual={r.care_residual:.3e} qp_iterations={r.qp_iterations}"
            for r in self.iterations
        ]
        return "\n".join(lines)


def _zparts(case: NetworkCase):
    g, n = case.n_gen, case.n_bus
    nx, na, nu = 4 * g, 2 * g + 2 * n, 2 * g
    return g, n, nx, na, nu


def assemble_constraints(case: NetworkCase, lin: LinearizedSystem, delta_d):
    """Equality system and box bounds of the linearized OPF over z."""
    g, n, nx, na, nu = _zparts(case)
    nz = nx + na + nu
    z0 = lin.z0

    a_rows = np.zeros((nx + na + 1, nz))
    a_rows[:nx, :nx] = lin.g_x
    a_rows[:nx, nx: nx + na] = lin.g_a
    a_rows[:nx, nx + na:] = lin.g_u
    a_rows[nx: nx + na, :nx] = lin.h_x
    a_rows[nx: nx + na, nx: nx + na] = lin.h_a
    theta_slack_col = nx + 2 * g + n + case.slack
    a_rows[nx + na, theta_slack_col] = 1.0

    b = np.zeros(nx + na + 1)
    b[:nx] = a_rows[:nx, :nx] @ z0.x + a_rows[:nx, nx: nx + na] @ z0.a \
        + a_rows[:nx, nx + na:] @ z0.u
    b[nx: nx + na] = np.asarray(delta_d, float) + lin.h_x @ z0.x + lin.h_a @ z0.a
    b[nx + na] = z0.theta[case.slack]

    box = BoxSetA.from_case(case)
    lb = np.full(nz, -np.inf)
    ub = np.full(nz, np.inf)
    lb[nx: nx + g], ub[nx: nx + g] = box.p_min, box.p_max
    lb[nx + g: nx + 2 * g], ub[nx + g: nx + 2 * g] = box.q_min, box.q_max
    lb[nx + 2 * g: nx + 2 * g + n] = box.v_min
    ub[nx + 2 * g: nx + 2 * g + n] = box.v_max
    return a_rows, b, lb, ub


def _objective_terms(case: NetworkCase, lin: LinearizedSystem, p_mat, t_lqr):
    g, n, nx, na, nu = _zparts(case)
    nz = nx + na + nu
    h = np.zeros((nz, nz))
    f = np.zeros(nz)
    ip = nx  # p_g block offset
    h[ip + np.arange(g), ip + np.arange(g)] += 2.0 * case.c2
    f[ip: ip + g] += case.c1
    if p_mat is not None:
        p_sym = 0.5 * (p_mat + p_mat.T)
        h[:nx, :nx] += t_lqr * p_sym
        f[:nx] += -t_lqr * (p_sym @ lin.z0.x)
    return h, f


def solve_linopf(case: NetworkCase, lin: LinearizedSystem, delta_d,
                 p_mat=None, config: DispatchConfig = DispatchConfig()
                 ) -> tuple[SystemPoint, QpInfo]:
    """One linearized OPF solve; with P supplied the LQR term joins the cost."""
    g, n, nx, na, nu = _zparts(case)
    a_rows, b, lb, ub = assemble_constraints(case, lin, delta_d)
    h, f = _objective_terms(case, lin, p_mat, config.t_lqr)
    z, info = solve_qp(h, f, a_rows, b, lb, ub)
    z = np.clip(z, lb, ub)  # box membership exactly (interior gap <= 1e-10)
    decision = SystemPoint.from_parts(
        case, z[:nx], z[nx: nx + na], z[nx + na:],
        lin.z0.d + np.asarray(delta_d, float),
    )
    return decision, info


def dispatch_objective(case: NetworkCase, z_s: SystemPoint, x0, p_mat, t_lqr):
    """Full surrogate objective c(a^s) + (T/2)(x^s - x0)' P (x^s - x0)."""
    value = case.cost_of(z_s.p_g)
    if p_mat is not None:
        value += estimate_control_cost(p_mat, z_s.x, x0, t_lqr)
    return value


def _finish(case, Y, lin, method, z_s, p_best, objective, records, config,
            t_start) -> DispatchSolution:
    """Setpoint extraction, load-flow refinement and final controller."""
    d_s = z_s.d
    setpoints = Setpoints(
        v_gen=z_s.v[: case.n_gen].copy(),
        p_gen=z_s.p_g.copy(),
        theta_slack=float(z_s.theta[case.slack]),
    )
    z_eq = extract_equilibrium(
        case, Y, d_s, setpoints, seed=(z_s.v.copy(), z_s.theta.copy())
    )
    weights_eq = build_qr(case, z_eq, config.weights)
    riccati = solve_care(lin.a_mat, lin.b_mat, weights_eq.q, weights_eq.r)
    return DispatchSolution(
        method=method,
        z_s=z_s,
        z_eq=z_eq,
        riccati=riccati,
        weights_eq=weights_eq,
        objective=objective,
        p_best=p_best,
        steady_cost_s=case.cost_of(z_s.p_g),
        steady_cost_eq=case.cost_of(z_eq.p_g),
        est_control_cost=estimate_control_cost(
            riccati.p, z_eq.x, lin.z0.x, config.t_lqr
        ),
        iterations=records,
        wall_time=time.perf_counter() - t_start,
    )


def alqr_opf(case: NetworkCase, Y: AdmittanceMatrix, lin: LinearizedSystem,
             delta_d, config: DispatchConfig = DispatchConfig()
             ) -> DispatchSolution:
    """Alternate between the QP and the CARE, keeping the best objective."""
    t_start = time.perf_counter()
    weights0 = build_qr(case, lin.z0, config.weights)
    p_prev = solve_care(lin.a_mat, lin.b_mat, weights0.q, weights0.r).p

    o_best = np.inf
    best_z, best_p = None, None
    records: list[IterationRecord] = []
    for k in range(1, config.k_max + 1):
        z_k, qp_info = solve_linopf(case, lin, delta_d, p_prev, config)
        weights_k = build_qr(case, z_k, config.weights)
        care_k = solve_care(lin.a_mat, lin.b_mat, weights_k.q, weights_k.r)
        o_k = dispatch_objective(case, z_k, lin.z0.x, care_k.p, config.t_lqr)
        records.append(IterationRecord(k, o_k, care_k.residual, qp_info.iterations))
        if o_k < o_best:
            o_best, best_z, best_p = o_k, z_k, care_k.p
        p_prev = care_k.p
    if best_z is None:
        raise GridLqrError("alternation produced no accepted iterate")
    return _finish(case, Y, lin, "alqr", best_z, best_p, o_best, records,
                   config, t_start)


def baseline_opf(case: NetworkCase, Y: AdmittanceMatrix, lin: LinearizedSystem,
                 delta_d, config: DispatchConfig = DispatchConfig()
                 ) -> DispatchSolution:
    """Decoupled baseline: cost-only linearized OPF, then the same extraction."""
    t_start = time.perf_counter()
    z_s, qp_info = solve_linopf(case, lin, delta_d, None, config)
    objective = case.cost_of(z_s.p_g)
    records = [IterationRecord(1, objective, 0.0, qp_info.iterations)]
    return _finish(case, Y, lin, "baseline", z_s, None, objective, records,
                   config, t_start)
