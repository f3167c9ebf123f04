"""Nonlinear differential and algebraic maps of the power-system DAEs.

State, control and algebraic vectors are block-stacked:

    x = [delta (G), omega (G), e (G), m (G)]          in R^{4G}
    u = [r (G), f (G)]                                 in R^{2G}
    a = [p_g (G), q_g (G), v (N), theta (N)]           in R^{2G+2N}
    d = [0 (2G), -p_l over gens, -q_l over gens, -p_l over loads, -q_l over loads]

``eval_h(x, a) = d`` holds exactly at an algebraic balance; rows of h are the
two stator equations per generator followed by the real/reactive nodal
balances, generator buses first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NonConvergence, SingularJacobian
from .netcase import AdmittanceMatrix, NetworkCase

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SystemPoint:
    """A full operating point z = (x, a, u) plus the load vector d it balances."""

    x: np.ndarray
    a: np.ndarray
    u: np.ndarray
    d: np.ndarray
    n_gen: int
    n_bus: int

    @classmethod
    def from_parts(cls, case: NetworkCase, x, a, u, d):
        return cls(np.asarray(x, float), np.asarray(a, float),
                   np.asarray(u, float), np.asarray(d, float),
                   case.n_gen, case.n_bus)

    # Named block views ----------------------------------------------------
    @property
    def delta(self):
        return self.x[: self.n_gen]

    @property
    def omega(self):
        return self.x[self.n_gen: 2 * self.n_gen]

    @property
    def e_emf(self):
        return self.x[2 * self.n_gen: 3 * self.n_gen]

    @property
    def m_mech(self):
        return self.x[3 * self.n_gen:]

    @property
    def p_g(self):
        return self.a[: self.n_gen]

    @property
    def q_g(self):
        return self.a[self.n_gen: 2 * self.n_gen]

    @property
    def v(self):
        return self.a[2 * self.n_gen: 2 * self.n_gen + self.n_bus]

    @property
    def theta(self):
        return self.a[2 * self.n_gen + self.n_bus:]

    @property
    def r_ref(self):
        return self.u[: self.n_gen]

    @property
    def f_field(self):
        return self.u[self.n_gen:]

    @property
    def z(self):
        return np.concatenate([self.x, self.a, self.u])


def split_a(case: NetworkCase, a: np.ndarray):
    g, n = case.n_gen, case.n_bus
    return a[:g], a[g: 2 * g], a[2 * g: 2 * g + n], a[2 * g + n:]


def split_x(case: NetworkCase, x: np.ndarray):
    g = case.n_gen
    return x[:g], x[g: 2 * g], x[2 * g: 3 * g], x[3 * g:]


def build_load_vector(case: NetworkCase, p_l: np.ndarray, q_l: np.ndarray):
    """Stack per-bus loads (internal order) into the algebraic RHS d."""
    g = case.n_gen
    return np.concatenate(
        [np.zeros(2 * g), -p_l[:g], -q_l[:g], -p_l[g:], -q_l[g:]]
    )


def loads_from_vector(case: NetworkCase, d: np.ndarray):
    """Invert :func:`build_load_vector`; returns (p_l, q_l) per bus."""
    g, n = case.n_gen, case.n_bus
    l = n - g
    p_l = np.concatenate([-d[2 * g: 3 * g], -d[4 * g: 4 * g + l]])
    q_l = np.concatenate([-d[3 * g: 4 * g], -d[4 * g + l:]])
    return p_l, q_l


# ---------------------------------------------------------------------------
# Differential map
# ---------------------------------------------------------------------------

def eval_g(case: NetworkCase, x, a, u):
    """Time derivatives of the fourth-order machine states.

    The governor droop is evaluated as ((omega - omega_s)/2pi)/R so that R
    carries Hz/pu units.
    """
    g = case.n_gen
    if x.shape != (4 * g,) or u.shape != (2 * g,) or a.shape != (2 * g + 2 * case.n_bus,):
        raise ValueError("dimension mismatch in eval_g")
    delta, omega, e, m = split_x(case, x)
    p_g, _, v, theta = split_a(case, a)
    r, f = u[:g], u[g:]
    vg, thg = v[:g], theta[:g]
    dw = omega - case.omega_s
    phi = delta - thg

    ddelta = dw
    domega = (m - case.d_damp * dw - p_g) / case.m_inertia
    de = (
        -(case.x_d / case.x_dp) * e
        + ((case.x_d - case.x_dp) / case.x_dp) * vg * np.cos(phi)
        + f
    ) / case.tau_d
    dm = (r - (dw / TWO_PI) / case.r_droop - m) / case.tau_c
    return np.concatenate([ddelta, domega, de, dm])


# ---------------------------------------------------------------------------
# Algebraic map
# ---------------------------------------------------------------------------

def _injections(Y: AdmittanceMatrix, v, theta):
    """Nodal real/reactive injections plus the shared trig work arrays."""
    dth = theta[:, None] - theta[None, :]
    ct, st = np.cos(dth), np.sin(dth)
    vv = v[:, None] * v[None, :]
    a2 = vv * (Y.g * ct + Y.b * st)  # v_i v_j (G cos + B sin)
    a1 = vv * (Y.g * st - Y.b * ct)  # v_i v_j (G sin - B cos)
    return a2.sum(axis=1), a1.sum(axis=1), a1, a2


def _stator_terms(case: NetworkCase, delta, e, vg, thg):
    phi = delta - thg
    k1 = e * vg / case.x_dp
    sal = (case.x_dp - case.x_q) / (2.0 * case.x_q * case.x_dp)
    k2 = sal * vg**2
    k3 = ((case.x_dp + case.x_q) / (2.0 * case.x_q * case.x_dp)) * vg**2
    return phi, k1, k2, k3, sal


def eval_h(case: NetworkCase, Y: AdmittanceMatrix, x, a):
    """Algebraic residual map; equals d at balance."""
    g = case.n_gen
    if x.shape != (4 * g,) or a.shape != (2 * g + 2 * case.n_bus,):
        raise ValueError("dimension mismatch in eval_h")
    delta, _, e, _ = split_x(case, x)
    p_g, q_g, v, theta = split_a(case, a)
    phi, k1, k2, k3, _ = _stator_terms(case, delta, e, v[:g], theta[:g])

    h_pst = -p_g + k1 * np.sin(phi) + k2 * np.sin(2 * phi)
    h_qst = -q_g + k1 * np.cos(phi) - k3 + k2 * np.cos(2 * phi)
    p_inj, q_inj, _, _ = _injections(Y, v, theta)
    return np.concatenate(
        [h_pst, h_qst, -p_g + p_inj[:g], -q_g + q_inj[:g], p_inj[g:], q_inj[g:]]
    )


def eval_h_jacobians(case: NetworkCase, Y: AdmittanceMatrix, x, a):
    """Analytic Jacobians (h_x, h_a) of the algebraic map at (x, a)."""
    g, n = case.n_gen, case.n_bus
    na = 2 * g + 2 * n
    delta, _, e, _ = split_x(case, x)
    p_g, q_g, v, theta = split_a(case, a)
    vg, thg = v[:g], theta[:g]
    phi, k1, k2, k3, sal = _stator_terms(case, delta, e, vg, thg)
    sp, cp = np.sin(phi), np.cos(phi)
    s2, c2 = np.sin(2 * phi), np.cos(2 * phi)

    p_inj, q_inj, a1, a2 = _injections(Y, v, theta)
    gdiag, bdiag = np.diag(Y.g), np.diag(Y.b)
    dp_dth = a1.copy()
    np.fill_diagonal(dp_dth, -q_inj - bdiag * v**2)
    dp_dv = a2 / v[None, :]
    np.fill_diagonal(dp_dv, p_inj / v + gdiag * v)
    dq_dth = -a2
    np.fill_diagonal(dq_dth, p_inj - gdiag * v**2)
    dq_dv = a1 / v[None, :]
    np.fill_diagonal(dq_dv, q_inj / v - bdiag * v)

    rows = np.arange(g)
    h_x = np.zeros((na, 4 * g))
    # stator P rows: d/ddelta, d/de
    h_x[rows, rows] = k1 * cp + 2 * k2 * c2
    h_x[rows, 2 * g + rows] = (vg / case.x_dp) * sp
    # stator Q rows
    h_x[g + rows, rows] = -k1 * sp - 2 * k2 * s2
    h_x[g + rows, 2 * g + rows] = (vg / case.x_dp) * cp

    h_a = np.zeros((na, na))
    iv = 2 * g  # start of the v block in a
    ith = 2 * g + n
    # stator P rows
    h_a[rows, rows] = -1.0
    h_a[rows, iv + rows] = (e / case.x_dp) * sp + 2 * sal * vg * s2
    h_a[rows, ith + rows] = -(k1 * cp + 2 * k2 * c2)
    # stator Q rows
    h_a[g + rows, g + rows] = -1.0
    h_a[g + rows, iv + rows] = (
        (e / case.x_dp) * cp
        - ((case.x_dp + case.x_q) / (case.x_q * case.x_dp)) * vg
        + 2 * sal * vg * c2
    )
    h_a[g + rows, ith + rows] = k1 * sp + 2 * k2 * s2
    # nodal balance rows: bus order is already generators-first, but the
    # P/Q rows interleave as [P gens, Q gens, P loads, Q loads]
    psel = np.concatenate([2 * g + np.arange(g), 4 * g + np.arange(n - g)])
    qsel = np.concatenate([3 * g + np.arange(g), 4 * g + (n - g) + np.arange(n - g)])
    h_a[np.ix_(psel, iv + np.arange(n))] = dp_dv
    h_a[np.ix_(psel, ith + np.arange(n))] = dp_dth
    h_a[np.ix_(qsel, iv + np.arange(n))] = dq_dv
    h_a[np.ix_(qsel, ith + np.arange(n))] = dq_dth
    h_a[psel[:g], np.arange(g)] = -1.0
    h_a[qsel[:g], g + np.arange(g)] = -1.0
    return h_x, h_a


def eval_g_jacobians(case: NetworkCase, x, a, u):
    """Analytic Jacobians (g_x, g_a, g_u) of the differential map."""
    g, n = case.n_gen, case.n_bus
    delta, _, e, _ = split_x(case, x)
    _, _, v, theta = split_a(case, a)
    vg, thg = v[:g], theta[:g]
    phi = delta - thg
    rows = np.arange(g)
    kx = (case.x_d - case.x_dp) / case.x_dp

    g_x = np.zeros((4 * g, 4 * g))
    g_x[rows, g + rows] = 1.0                                  # ddelta/domega
    g_x[g + rows, g + rows] = -case.d_damp / case.m_inertia
    g_x[g + rows, 3 * g + rows] = 1.0 / case.m_inertia
    g_x[2 * g + rows, rows] = -kx * vg * np.sin(phi) / case.tau_d
    g_x[2 * g + rows, 2 * g + rows] = -(case.x_d / case.x_dp) / case.tau_d
    g_x[3 * g + rows, g + rows] = -1.0 / (TWO_PI * case.r_droop * case.tau_c)
    g_x[3 * g + rows, 3 * g + rows] = -1.0 / case.tau_c

    g_a = np.zeros((4 * g, 2 * g + 2 * n))
    g_a[g + rows, rows] = -1.0 / case.m_inertia                # domega/dp_g
    g_a[2 * g + rows, 2 * g + rows] = kx * np.cos(phi) / case.tau_d
    g_a[2 * g + rows, 2 * g + n + rows] = kx * vg * np.sin(phi) / case.tau_d

    g_u = np.zeros((4 * g, 2 * g))
    g_u[3 * g + rows, rows] = 1.0 / case.tau_c                 # dm/dr
    g_u[2 * g + rows, g + rows] = 1.0 / case.tau_d             # de/df
    return g_x, g_a, g_u


# ---------------------------------------------------------------------------
# Algebraic layer solve
# ---------------------------------------------------------------------------

class AlgebraicSolver:
    """Damped Newton on the algebraic layer with Jacobian reuse.

    The cached inverse Jacobian is tried first (chord steps) and refreshed
    whenever a step fails to contract the residual; the whole iteration runs
    in a jitted kernel.  One instance serves one integration task; it must
    not be shared between tasks.
    """

    def __init__(self, case: NetworkCase, Y: AdmittanceMatrix,
                 tol: float = 1e-10, max_iter: int = 50):
        self.case = case
        self.Y = Y
        self.tol = tol
        self.max_iter = max_iter
        self._nz = _kernels.YbusNonzeros(Y)
        na = 2 * case.n_gen + 2 * case.n_bus
        self._inv = np.zeros((na, na))
        self._have_inv = 0

    def solve(self, x, d, a_guess):
        case, nz = self.case, self._nz
        a = np.array(a_guess, dtype=float)
        try:
            status, rnorm, self._have_inv = _kernels.newton_core(
                case.n_gen, case.n_bus, nz.rows, nz.cols, nz.gv, nz.bv,
                nz.gd, nz.bd, case.x_dp, case.x_q,
                np.asarray(x, float), np.asarray(d, float), a,
                self._inv, self._have_inv,
                # converge slightly below tol so the reference eval_h
                # residual meets the contract despite summation-order noise
                0.95 * self.tol, self.max_iter,
            )
        except np.linalg.LinAlgError as exc:
            self._have_inv = 0
            raise SingularJacobian(f"algebraic Jacobian not invertible: {exc}")
        if status == _kernels.SINGULAR:
            self._have_inv = 0
            raise SingularJacobian(
                "algebraic Jacobian condition estimate exceeds 1e12"
            )
        if status != _kernels.CONVERGED:
            raise NonConvergence(
                f"algebraic solve stalled at residual {rnorm:.3e} "
                f"(tol {self.tol:.1e})"
            )
        return a


def solve_algebraic(case: NetworkCase, Y: AdmittanceMatrix, x, d, a_guess):
    """Solve h(x, a) = d for a by damped Newton from a warm start."""
    return AlgebraicSolver(case, Y).solve(x, d, a_guess)
