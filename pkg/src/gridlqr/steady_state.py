"""Nonlinear load-flow and generator equilibrium extraction.

Setpoint convention: voltage magnitude is fixed at every generator bus,
real power at every nonslack generator, and the angle at the slack bus.
The slack generator absorbs network losses.  PV-PQ switching on reactive
limits is intentionally absent; limits live in the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import dgecon

from .dae_model import (SystemPoint, _injections, build_load_vector,
                        loads_from_vector, split_a)
from .errors import NonConvergence, SingularJacobian
from .netcase import AdmittanceMatrix, NetworkCase

_RCOND_FLOOR = 1e-12


@dataclass(frozen=True)
class Setpoints:
    """Load-flow inputs: v at gens, p at nonslack gens, theta at the slack."""

    v_gen: np.ndarray
    p_gen: np.ndarray        # slack entry is ignored (loss absorption)
    theta_slack: float

    @classmethod
    def from_case(cls, case: NetworkCase):
        return cls(case.vg0.copy(), case.pg0.copy(), float(case.va0[case.slack]))


def load_flow(case: NetworkCase, Y: AdmittanceMatrix, d, setpoints: Setpoints,
              seed=None, tol: float = 1e-8, max_iter: int = 30):
    """Newton-Raphson on the nodal balance equations.

    Returns the complete algebraic vector a = [p_g, q_g, v, theta].  Retries
    once from a flat start before raising NonConvergence.
    """
    try:
        return _newton_flow(case, Y, d, setpoints, seed, tol, max_iter)
    except NonConvergence:
        if seed is None:
            raise
        return _newton_flow(case, Y, d, setpoints, None, tol, max_iter)


def _newton_flow(case, Y, d, setpoints, seed, tol, max_iter):
    g, n = case.n_gen, case.n_bus
    p_l, q_l = loads_from_vector(case, d)
    nonslack = np.array([i for i in range(n) if i != case.slack], dtype=int)
    loads = np.arange(g, n)

    # scheduled injections: p_g - p_l at nonslack, -q_l at load buses
    p_sched = -p_l.copy()
    p_sched[:g] += setpoints.p_gen
    q_sched = -q_l[g:]

    if seed is None:
        v = np.ones(n)
        theta = np.full(n, setpoints.theta_slack)
    else:
        v, theta = np.array(seed[0], float), np.array(seed[1], float)
    v[:g] = setpoints.v_gen
    theta[case.slack] = setpoints.theta_slack

    for _ in range(max_iter):
        p_inj, q_inj, a1, a2 = _injections(Y, v, theta)
        mis = np.concatenate(
            [p_inj[nonslack] - p_sched[nonslack], q_inj[loads] - q_sched]
        )
        if np.max(np.abs(mis)) <= tol:
            break
        gdiag, bdiag = np.diag(Y.g), np.diag(Y.b)
        dp_dth = a1.copy()
        np.fill_diagonal(dp_dth, -q_inj - bdiag * v**2)
        dp_dv = a2 / v[None, :]
        np.fill_diagonal(dp_dv, p_inj / v + gdiag * v)
        dq_dth = -a2
        np.fill_diagonal(dq_dth, p_inj - gdiag * v**2)
        dq_dv = a1 / v[None, :]
        np.fill_diagonal(dq_dv, q_inj / v - bdiag * v)

        jac = np.block(
            [
                [dp_dth[np.ix_(nonslack, nonslack)], dp_dv[np.ix_(nonslack, loads)]],
                [dq_dth[np.ix_(loads, nonslack)], dq_dv[np.ix_(loads, loads)]],
            ]
        )
        anorm = np.linalg.norm(jac, 1)
        lu = lu_factor(jac)
        rcond, info = dgecon(lu[0], anorm, norm="1")
        if info != 0 or rcond < _RCOND_FLOOR:
            raise SingularJacobian("load-flow Jacobian is numerically singular")
        step = lu_solve(lu, mis)
        theta[nonslack] -= step[: len(nonslack)]
        v[loads] -= step[len(nonslack):]
        if np.any(v[loads] <= 0):
            raise NonConvergence("load-flow voltage collapsed below zero")
    else:
        raise NonConvergence(
            f"load-flow mismatch {np.max(np.abs(mis)):.3e} after {max_iter} iterations"
        )

    p_inj, q_inj, _, _ = _injections(Y, v, theta)
    p_g = setpoints.p_gen.copy()
    p_g[case.slack] = p_inj[case.slack] + p_l[case.slack]
    q_g = q_inj[:g] + q_l[:g]
    return np.concatenate([p_g, q_g, v, theta])


def init_generators(case: NetworkCase, a_eq):
    """Back out machine equilibrium states and controls from a power flow.

    Per generator the two stator equations are solved for (delta, e) by a
    2x2 Newton seeded with the salient-pole closed form
    delta - theta = atan2(p x_q, v^2 + q x_q); then m = p_g, r = m and the
    field voltage follows from the EMF equation at de/dt = 0.
    """
    g = case.n_gen
    p_g, q_g, v, theta = split_a(case, a_eq)
    vg, thg = v[:g], theta[:g]

    phi = np.arctan2(p_g * case.x_q, vg**2 + q_g * case.x_q)
    sal = (case.x_dp - case.x_q) / (2.0 * case.x_q * case.x_dp)
    k3 = ((case.x_dp + case.x_q) / (2.0 * case.x_q * case.x_dp)) * vg**2
    with np.errstate(divide="ignore", invalid="ignore"):
        e = (q_g + k3 - sal * vg**2 * np.cos(2 * phi)) * case.x_dp / (vg * np.cos(phi))
    if not np.all(np.isfinite(e)):
        raise NonConvergence("stator initialization hit v*cos(delta-theta) = 0")

    for _ in range(50):
        rp = -p_g + (e * vg / case.x_dp) * np.sin(phi) + sal * vg**2 * np.sin(2 * phi)
        rq = (
            -q_g + (e * vg / case.x_dp) * np.cos(phi) - k3
            + sal * vg**2 * np.cos(2 * phi)
        )
        if max(np.max(np.abs(rp)), np.max(np.abs(rq))) <= 1e-12:
            break
        # 2x2 Newton blocks, vectorized over machines
        j11 = (e * vg / case.x_dp) * np.cos(phi) + 2 * sal * vg**2 * np.cos(2 * phi)
        j12 = (vg / case.x_dp) * np.sin(phi)
        j21 = -(e * vg / case.x_dp) * np.sin(phi) - 2 * sal * vg**2 * np.sin(2 * phi)
        j22 = (vg / case.x_dp) * np.cos(phi)
        det = j11 * j22 - j12 * j21
        if np.any(np.abs(det) < 1e-14):
            raise NonConvergence("singular stator Jacobian (infeasible machine load)")
        dphi = (j22 * rp - j12 * rq) / det
        de = (-j21 * rp + j11 * rq) / det
        phi -= dphi
        e -= de
    else:
        raise NonConvergence("stator equations did not converge in 50 iterations")

    delta = phi + thg
    omega = np.full(g, case.omega_s)
    m = p_g.copy()
    r = m.copy()
    f = (case.x_d / case.x_dp) * e - ((case.x_d - case.x_dp) / case.x_dp) * vg * np.cos(phi)
    x_eq = np.concatenate([delta, omega, e, m])
    u_eq = np.concatenate([r, f])
    return x_eq, u_eq


def extract_equilibrium(case: NetworkCase, Y: AdmittanceMatrix, d, setpoints,
                        seed=None) -> SystemPoint:
    """Load-flow plus generator initialization: the full z^eq for load d."""
    a_eq = load_flow(case, Y, d, setpoints, seed=seed)
    x_eq, u_eq = init_generators(case, a_eq)
    return SystemPoint.from_parts(case, x_eq, a_eq, u_eq, d)


def base_operating_point(case: NetworkCase, Y: AdmittanceMatrix) -> SystemPoint:
    """Equilibrium z^0 at the case-file loads and generator setpoints."""
    d0 = build_load_vector(case, case.p_load0, case.q_load0)
    seed = (case.vm0.copy(), case.va0.copy())
    return extract_equilibrium(case, Y, d0, Setpoints.from_case(case), seed=seed)
