"""Load-following LQR machinery: weights, Riccati solve, gain, cost estimate.

The state/control weights are diagonal and affine in the dispatch point:
entries tied to real power (delta, omega, m, r) use 1/(1 - alpha p/pmax),
entries tied to reactive power (e, f) use 1/(1 - alpha q/qmax).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IllConditionedU11, UnstabilizablePair
from .netcase import NetworkCase

_U11_COND_LIMIT = 1e13
_RESIDUAL_TARGET = 1e-9


@dataclass(frozen=True)
class CostWeightConfig:
    """Coupling coefficient alpha in [0, 1) and the LQR time-scale factor."""

    alpha: float = 0.6
    t_lqr: float = 1000.0

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError("alpha must lie in [0, 1)")
        if self.t_lqr <= 0:
            raise ValueError("t_lqr must be positive")


@dataclass(frozen=True)
class WeightMatrices:
    """Diagonal positive definite Q (4G x 4G) and R (2G x 2G)."""

    q: np.ndarray
    r: np.ndarray


def build_qr(case: NetworkCase, z_s, config: CostWeightConfig) -> WeightMatrices:
    """Evaluate the affine diagonal weights at the dispatch point z_s.

    Ratios p/pmax and q/qmax are clipped into [0, 1]: the slack machine can
    exceed pmax after loss absorption and machines absorbing reactive power
    have q < 0; both would otherwise break positive definiteness.
    """
    g = case.n_gen
    p_g = np.asarray(z_s.p_g if hasattr(z_s, "p_g") else z_s[0], float)
    q_g = np.asarray(z_s.q_g if hasattr(z_s, "q_g") else z_s[1], float)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_ratio = np.where(case.p_max > 0, p_g / case.p_max, 0.0)
        q_ratio = np.where(case.q_max > 0, q_g / case.q_max, 0.0)
    wp = 1.0 / (1.0 - config.alpha * np.clip(p_ratio, 0.0, 1.0))
    wq = 1.0 / (1.0 - config.alpha * np.clip(q_ratio, 0.0, 1.0))
    q_diag = np.concatenate([wp, wp, wq, wp])   # delta, omega, e, m blocks
    r_diag = np.concatenate([wp, wq])           # r, f blocks
    return WeightMatrices(q=np.diag(q_diag), r=np.diag(r_diag))


@dataclass(frozen=True)
class RiccatiSolution:
    """Stabilizing CARE solution P, gain K = -R^{-1} B^T P and diagnostics."""

    p: np.ndarray
    k: np.ndarray
    residual: float
    closed_loop_abscissa: float


def _care_residual(a, m_bbt, q, p):
    res = a.T @ p + p @ a - p @ m_bbt @ p + q
    return float(np.linalg.norm(res, "fro") / np.linalg.norm(q, "fro"))


def solve_care(a, b, q, r) -> RiccatiSolution:
    """Stabilizing solution of A'P + PA - P B R^{-1} B' P + Q = 0.

    Ordered real Schur decomposition of the Hamiltonian: the n stable
    eigenvalues lead, P = U21 U11^{-1}, symmetrized.  One Newton defect
    correction is applied if the Frobenius residual exceeds 1e-9.
    """
    a = np.atleast_2d(np.asarray(a, float))
    b = np.asarray(b, float).reshape(a.shape[0], -1)
    q = np.atleast_2d(np.asarray(q, float))
    r = np.atleast_2d(np.asarray(r, float))
    n = a.shape[0]

    m_bbt = b @ np.linalg.solve(r, b.T)
    ham = np.block([[a, -m_bbt], [-q, -a.T]])
    _, u, sdim = scipy.linalg.schur(ham, sort="lhp")
    if sdim != n:
        raise UnstabilizablePair(
            f"Hamiltonian has {sdim} stable eigenvalues, expected {n}"
        )
    u11, u21 = u[:n, :n], u[n:, :n]
    cond_u11 = np.linalg.cond(u11)
    if cond_u11 > _U11_COND_LIMIT:
        p = np.linalg.lstsq(u11.T, u21.T, rcond=None)[0].T
    else:
        p = np.linalg.solve(u11.T, u21.T).T
    p = 0.5 * (p + p.T)

    residual = _care_residual(a, m_bbt, q, p)
    for _ in range(3):
        if residual <= _RESIDUAL_TARGET or not np.isfinite(residual):
            break
        # Newton step: solve the Lyapunov equation of the defect
        a_cl = a - m_bbt @ p
        defect = a.T @ p + p @ a - p @ m_bbt @ p + q
        try:
            dp = scipy.linalg.solve_continuous_lyapunov(a_cl.T, -defect)
        except (np.linalg.LinAlgError, ValueError):
            break
        p_new = 0.5 * ((p + dp) + (p + dp).T)
        res_new = _care_residual(a, m_bbt, q, p_new)
        if not np.isfinite(res_new) or res_new >= residual:
            break
        p, residual = p_new, res_new
    if not np.isfinite(residual) or residual > 1e-8:
        raise IllConditionedU11(
            f"CARE residual {residual:.2e} (cond U11 = {cond_u11:.2e})"
        )

    k = -np.linalg.solve(r, b.T @ p)
    eigs = np.linalg.eigvals(a + b @ k)
    abscissa = float(np.max(eigs.real))
    if abscissa >= 0.0:
        # an exact but non-stabilizing CARE solution (e.g. an unstable
        # uncontrollable mode) must not be accepted
        raise UnstabilizablePair(
            f"closed-loop spectral abscissa {abscissa:.3e} is not negative"
        )
    return RiccatiSolution(p=p, k=k, residual=residual,
                           closed_loop_abscissa=abscissa)


def estimate_control_cost(p, x_eq, x0, t_lqr) -> float:
    """Predicted load-following cost (T/2) (x_eq - x0)' P (x_eq - x0)."""
    dx = np.asarray(x_eq, float) - np.asarray(x0, float)
    return float(0.5 * t_lqr * dx @ np.atleast_2d(p) @ dx)


def feedback(u_eq, x_eq, k, x):
    """State-feedback control u = u_eq + K (x - x_eq)."""
    return np.asarray(u_eq, float) + np.atleast_2d(k) @ (
        np.asarray(x, float) - np.asarray(x_eq, float)
    )
