"""Jitted inner kernels for the simulation hot path.

These implement exactly the same stator/balance formulas as
:mod:`gridlqr.dae_model` but iterate over the nonzero admittance entries,
so a full damped-Newton algebraic solve is one Python call.  The dense
reference implementations remain the contract; equivalence is asserted in
the test suite.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi

# newton_core status codes
CONVERGED = 0
STALLED = 1
SINGULAR = 2


class YbusNonzeros:
    """CSR-free nonzero list (i, j, G_ij, B_ij) of the admittance matrix."""

    def __init__(self, Y):
        mask = (Y.g != 0.0) | (Y.b != 0.0)
        np.fill_diagonal(mask, True)  # diagonal always carried
        self.rows, self.cols = np.nonzero(mask)
        self.rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        self.cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        self.gv = np.ascontiguousarray(Y.g[self.rows, self.cols])
        self.bv = np.ascontiguousarray(Y.b[self.rows, self.cols])
        self.gd = np.ascontiguousarray(np.diag(Y.g))
        self.bd = np.ascontiguousarray(np.diag(Y.b))


@njit(cache=True)
def residual(ng, nb, rows, cols, gv, bv, xdp, xq, x, a, d, out):
    """h(x, a) - d into ``out``; returns the infinity norm."""
    iv = 2 * ng
    ith = 2 * ng + nb
    nl = nb - ng
    na = 2 * ng + 2 * nb
    for i in range(na):
        out[i] = 0.0
    for k in range(rows.size):
        i, j = rows[k], cols[k]
        vij = a[iv + i] * a[iv + j]
        dth = a[ith + i] - a[ith + j]
        c, s = np.cos(dth), np.sin(dth)
        p = vij * (gv[k] * c + bv[k] * s)
        q = vij * (gv[k] * s - bv[k] * c)
        if i < ng:
            out[2 * ng + i] += p
            out[3 * ng + i] += q
        else:
            out[4 * ng + (i - ng)] += p
            out[4 * ng + nl + (i - ng)] += q
    for i in range(ng):
        out[2 * ng + i] -= a[i]
        out[3 * ng + i] -= a[ng + i]
        vg = a[iv + i]
        phi = x[i] - a[ith + i]
        e = x[2 * ng + i]
        k1 = e * vg / xdp[i]
        sal = (xdp[i] - xq[i]) / (2.0 * xq[i] * xdp[i])
        k3 = (xdp[i] + xq[i]) / (2.0 * xq[i] * xdp[i]) * vg * vg
        out[i] = -a[i] + k1 * np.sin(phi) + sal * vg * vg * np.sin(2.0 * phi)
        out[ng + i] = (
            -a[ng + i] + k1 * np.cos(phi) - k3 + sal * vg * vg * np.cos(2.0 * phi)
        )
    norm = 0.0
    for i in range(na):
        out[i] -= d[i]
        av = abs(out[i])
        if av > norm:
            norm = av
    return norm


@njit(cache=True)
def jacobian_a(ng, nb, rows, cols, gv, bv, gd, bd, xdp, xq, x, a, ha):
    """Dense Jacobian of h with respect to a, written into ``ha``."""
    iv = 2 * ng
    ith = 2 * ng + nb
    nl = nb - ng
    na = 2 * ng + 2 * nb
    for i in range(na):
        for j in range(na):
            ha[i, j] = 0.0
    pinj = np.zeros(nb)
    qinj = np.zeros(nb)
    for k in range(rows.size):
        i, j = rows[k], cols[k]
        vi, vj = a[iv + i], a[iv + j]
        dth = a[ith + i] - a[ith + j]
        c, s = np.cos(dth), np.sin(dth)
        p = vi * vj * (gv[k] * c + bv[k] * s)
        q = vi * vj * (gv[k] * s - bv[k] * c)
        pinj[i] += p
        qinj[i] += q
        if i != j:
            rp = 2 * ng + i if i < ng else 4 * ng + (i - ng)
            rq = 3 * ng + i if i < ng else 4 * ng + nl + (i - ng)
            ha[rp, ith + j] = q
            ha[rp, iv + j] = p / vj
            ha[rq, ith + j] = -p
            ha[rq, iv + j] = q / vj
    for i in range(nb):
        vi = a[iv + i]
        rp = 2 * ng + i if i < ng else 4 * ng + (i - ng)
        rq = 3 * ng + i if i < ng else 4 * ng + nl + (i - ng)
        ha[rp, ith + i] = -qinj[i] - bd[i] * vi * vi
        ha[rp, iv + i] = pinj[i] / vi + gd[i] * vi
        ha[rq, ith + i] = pinj[i] - gd[i] * vi * vi
        ha[rq, iv + i] = qinj[i] / vi - bd[i] * vi
    for i in range(ng):
        ha[2 * ng + i, i] = -1.0
        ha[3 * ng + i, ng + i] = -1.0
        vg = a[iv + i]
        phi = x[i] - a[ith + i]
        e = x[2 * ng + i]
        k1 = e * vg / xdp[i]
        sal = (xdp[i] - xq[i]) / (2.0 * xq[i] * xdp[i])
        sp, cp = np.sin(phi), np.cos(phi)
        s2, c2 = np.sin(2.0 * phi), np.cos(2.0 * phi)
        ha[i, i] = -1.0
        ha[i, iv + i] = (e / xdp[i]) * sp + 2.0 * sal * vg * s2
        ha[i, ith + i] = -(k1 * cp + 2.0 * sal * vg * vg * c2)
        ha[ng + i, ng + i] = -1.0
        ha[ng + i, iv + i] = (
            (e / xdp[i]) * cp
            - ((xdp[i] + xq[i]) / (xq[i] * xdp[i])) * vg
            + 2.0 * sal * vg * c2
        )
        ha[ng + i, ith + i] = k1 * sp + 2.0 * sal * vg * vg * s2


@njit(cache=True)
def newton_core(ng, nb, rows, cols, gv, bv, gd, bd, xdp, xq,
                x, d, a, inv_buf, have_inv, tol, max_iter):
    """Damped chord/Newton solve of h(x, a) = d in place.

    ``inv_buf`` caches the inverse Jacobian between calls; returns
    (status, residual_norm, have_inv).
    """
    na = 2 * ng + 2 * nb
    r = np.empty(na)
    trial = np.empty(na)
    a_try = np.empty(na)
    rnorm = residual(ng, nb, rows, cols, gv, bv, xdp, xq, x, a, d, r)
    fresh = False
    for _ in range(max_iter):
        if rnorm <= tol:
            return CONVERGED, rnorm, have_inv
        if have_inv == 0:
            ha = np.empty((na, na))
            jacobian_a(ng, nb, rows, cols, gv, bv, gd, bd, xdp, xq, x, a, ha)
            # 1-norm condition estimate from the explicit inverse
            anorm = 0.0
            for j in range(na):
                colsum = 0.0
                for i in range(na):
                    colsum += abs(ha[i, j])
                if colsum > anorm:
                    anorm = colsum
            inv_buf[:, :] = np.linalg.inv(ha)
            inorm = 0.0
            for j in range(na):
                colsum = 0.0
                for i in range(na):
                    colsum += abs(inv_buf[i, j])
                if colsum > inorm:
                    inorm = colsum
            if not np.isfinite(inorm) or anorm * inorm > 1e12:
                return SINGULAR, rnorm, 0
            have_inv = 1
            fresh = True
        step = inv_buf @ r
        alpha = 1.0
        tnorm = np.inf
        for _ in range(9):
            for i in range(na):
                a_try[i] = a[i] - alpha * step[i]
            tnorm = residual(ng, nb, rows, cols, gv, bv, xdp, xq, x, a_try, d, trial)
            if tnorm < rnorm or tnorm <= tol:
                break
            alpha *= 0.5
        if tnorm >= 0.5 * rnorm and not fresh:
            have_inv = 0  # stale inverse: rebuild at the current point
            continue
        if tnorm >= rnorm and fresh and alpha < 1.0 / 256.0:
            return STALLED, rnorm, have_inv
        a[:] = a_try
        r[:] = trial
        rnorm = tnorm
        fresh = False
    return STALLED, rnorm, have_inv


@njit(cache=True)
def machine_derivatives(ng, nb, omega_s, m_inertia, d_damp, tau_d, tau_c,
                        x_d, xdp, r_droop, x, a, u, out):
    """Fourth-order machine state derivatives (same map as eval_g)."""
    iv = 2 * ng
    ith = 2 * ng + nb
    for i in range(ng):
        dw = x[ng + i] - omega_s
        vg = a[iv + i]
        phi = x[i] - a[ith + i]
        out[i] = dw
        out[ng + i] = (x[3 * ng + i] - d_damp[i] * dw - a[i]) / m_inertia[i]
        out[2 * ng + i] = (
            -(x_d[i] / xdp[i]) * x[2 * ng + i]
            + ((x_d[i] - xdp[i]) / xdp[i]) * vg * np.cos(phi)
            + u[ng + i]
        ) / tau_d[i]
        out[3 * ng + i] = (
            u[i] - (dw / TWO_PI) / r_droop[i] - x[3 * ng + i]
        ) / tau_c[i]
    return out
