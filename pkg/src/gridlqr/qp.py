"""Dense primal-dual interior-point solver for box + equality QPs.

    minimize    0.5 x' H x + f' x
    subject to  A x = b,   lb <= x <= ub   (entries may be +-inf)

Mehrotra predictor-corrector with implicit slacks (iterates stay strictly
inside the box), static regularization and one step of iterative refinement
per KKT solve.  Rank-deficient equality rows are dropped with a warning
after a consistency check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import Infeasible, MaxIterations

_REG = 1e-11
_TAU = 0.9995


@dataclass
class QpInfo:
    """Convergence diagnostics of one interior-point solve."""

    status: str
    iterations: int
    r_dual: float
    r_primal: float
    mu: float
    dropped_rows: int = 0


def _drop_dependent_rows(a, b):
    """Keep a maximal well-conditioned row subset; verify consistency."""
    m = a.shape[0]
    if m == 0:
        return a, b, 0
    _, r, piv = scipy.linalg.qr(a.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(a.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank == m:
        return a, b, 0
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    # dropped rows are combinations of kept ones; b must satisfy the same
    coeff, *_ = np.linalg.lstsq(a[keep].T, a[drop].T, rcond=None)
    b_pred = coeff.T @ b[keep]
    if np.max(np.abs(b_pred - b[drop])) > 1e-8 * (1.0 + np.max(np.abs(b))):
        raise Infeasible("inconsistent equality constraints")
    warnings.warn(
        f"dropped {m - rank} dependent equality rows", stacklevel=3
    )
    return a[keep], b[keep], m - rank


def _interior_start(lb, ub):
    x = np.zeros(lb.shape)
    lo, hi = np.isfinite(lb), np.isfinite(ub)
    both = lo & hi
    x[both] = 0.5 * (lb[both] + ub[both])
    only_lo = lo & ~hi
    x[only_lo] = lb[only_lo] + np.maximum(1.0, 0.1 * np.abs(lb[only_lo]))
    only_hi = hi & ~lo
    x[only_hi] = ub[only_hi] - np.maximum(1.0, 0.1 * np.abs(ub[only_hi]))
    return x


def _max_step(v, dv):
    """Largest alpha with v + alpha dv >= 0 for positive v."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def solve_qp(h, f, a_eq=None, b_eq=None, lb=None, ub=None,
             max_iter: int = 100, tol: float = 1e-10):
    """Solve the box + equality QP; returns (x, QpInfo).

    Raises Infeasible when no feasible point exists and MaxIterations when
    the iteration cap is reached without meeting the KKT tolerances.
    """
    f = np.asarray(f, float).ravel()
    n = f.size
    h = 0.5 * (np.asarray(h, float) + np.asarray(h, float).T)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, float).copy()
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, float).copy()
    if a_eq is None or np.size(a_eq) == 0:
        a = np.zeros((0, n))
        b = np.zeros(0)
    else:
        a = np.atleast_2d(np.asarray(a_eq, float)).copy()
        b = np.asarray(b_eq, float).ravel().copy()

    if np.any(lb > ub):
        raise Infeasible("empty box: lb > ub")
    # pin degenerate boxes via equality rows so slacks stay positive
    fixed = np.isfinite(lb) & np.isfinite(ub) & (ub - lb < 1e-12)
    if np.any(fixed):
        rows = np.zeros((int(fixed.sum()), n))
        rows[np.arange(int(fixed.sum())), np.where(fixed)[0]] = 1.0
        a = np.vstack([a, rows])
        b = np.concatenate([b, 0.5 * (lb[fixed] + ub[fixed])])
        lb[fixed], ub[fixed] = -np.inf, np.inf

    a, b, dropped = _drop_dependent_rows(a, b)
    # normalize equality rows for conditioning
    if a.shape[0]:
        scale = np.maximum(np.max(np.abs(a), axis=1), 1e-12)
        a = a / scale[:, None]
        b = b / scale
    m = a.shape[0]

    lo_idx = np.where(np.isfinite(lb))[0]
    hi_idx = np.where(np.isfinite(ub))[0]
    n_bnd = lo_idx.size + hi_idx.size

    f_scale = 1.0 + np.max(np.abs(f)) if n else 1.0
    b_scale = 1.0 + (np.max(np.abs(b)) if m else 0.0)

    if n_bnd == 0:
        # pure equality QP: one KKT solve
        kkt = np.block([[h, a.T], [a, np.zeros((m, m))]]) if m else h
        rhs = np.concatenate([-f, b]) if m else -f
        try:
            sol = np.linalg.solve(kkt + _REG * np.eye(kkt.shape[0]), rhs)
        except np.linalg.LinAlgError as exc:
            raise Infeasible("singular equality-constrained KKT system") from exc
        x = sol[:n]
        rd = np.max(np.abs(h @ x + f + (a.T @ sol[n:] if m else 0.0)))
        rp = np.max(np.abs(a @ x - b)) if m else 0.0
        return x, QpInfo("optimal", 0, rd / f_scale, rp / b_scale, 0.0, dropped)

    x = _interior_start(lb, ub)
    y = np.zeros(m)
    zl = np.ones(lo_idx.size)
    zu = np.ones(hi_idx.size)

    info = QpInfo("running", 0, np.inf, np.inf, np.inf, dropped)
    for it in range(1, max_iter + 1):
        # floor guards against slacks rounding to exactly zero at the face
        sl = np.maximum(x[lo_idx] - lb[lo_idx], 1e-250)
        su = np.maximum(ub[hi_idx] - x[hi_idx], 1e-250)
        rd = h @ x + f + (a.T @ y if m else 0.0)
        np.subtract.at(rd, lo_idx, zl)
        np.add.at(rd, hi_idx, zu)
        rp = a @ x - b if m else np.zeros(0)
        mu = (sl @ zl + su @ zu) / n_bnd

        info.r_dual = float(np.max(np.abs(rd)) / f_scale)
        info.r_primal = float(np.max(np.abs(rp)) / b_scale) if m else 0.0
        info.mu = float(mu)
        info.iterations = it - 1
        # drive the gap two orders below tol: the duality gap bounds the
        # solution error only loosely along weakly curved directions
        if (info.r_dual <= tol and info.r_primal <= tol
                and mu <= 0.01 * tol * f_scale):
            info.status = "optimal"
            return x, info

        dvec = np.zeros(n)
        np.add.at(dvec, lo_idx, zl / sl)
        np.add.at(dvec, hi_idx, zu / su)
        hbar = h + np.diag(dvec + _REG)
        if m:
            kkt = np.block([[hbar, a.T], [a, -_REG * np.eye(m)]])
        else:
            kkt = hbar
        try:
            lu = scipy.linalg.lu_factor(kkt)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise Infeasible("singular interior-point KKT system") from exc

        def newton(sigma_mu, corr_l, corr_u):
            cl = (sigma_mu - sl * zl - corr_l) / sl
            cu = (sigma_mu - su * zu - corr_u) / su
            rhs_x = -rd.copy()
            np.add.at(rhs_x, lo_idx, cl)
            np.subtract.at(rhs_x, hi_idx, cu)
            rhs = np.concatenate([rhs_x, -rp]) if m else rhs_x
            sol = scipy.linalg.lu_solve(lu, rhs)
            # one refinement pass against the assembled system
            resid = rhs - kkt @ sol
            sol = sol + scipy.linalg.lu_solve(lu, resid)
            dx = sol[:n]
            dy = sol[n:] if m else np.zeros(0)
            dzl = cl - (zl / sl) * dx[lo_idx]
            dzu = cu + (zu / su) * dx[hi_idx]
            return dx, dy, dzl, dzu

        # predictor
        dx_a, dy_a, dzl_a, dzu_a = newton(0.0, 0.0, 0.0)
        ap = min(_max_step(sl, dx_a[lo_idx]), _max_step(su, -dx_a[hi_idx]))
        ad = min(_max_step(zl, dzl_a), _max_step(zu, dzu_a))
        mu_aff = (
            (sl + ap * dx_a[lo_idx]) @ (zl + ad * dzl_a)
            + (su - ap * dx_a[hi_idx]) @ (zu + ad * dzu_a)
        ) / n_bnd
        sigma = (max(mu_aff, 0.0) / mu) ** 3 if mu > 0 else 0.0

        # corrector
        dx, dy, dzl, dzu = newton(
            sigma * mu, dx_a[lo_idx] * dzl_a, -dx_a[hi_idx] * dzu_a
        )
        ap = _TAU * min(_max_step(sl, dx[lo_idx]), _max_step(su, -dx[hi_idx]))
        ad = _TAU * min(_max_step(zl, dzl), _max_step(zu, dzu))
        if ap < 1e-13 and ad < 1e-13:
            # jammed: accept if the looser KKT test already holds
            if (info.r_dual <= tol and info.r_primal <= tol
                    and mu <= tol * f_scale):
                info.status = "optimal"
                return x, info
            break

        x = x + ap * dx
        y = y + ad * dy
        zl = np.maximum(zl + ad * dzl, 1e-300)
        zu = np.maximum(zu + ad * dzu, 1e-300)

    dual_norm = max(
        np.max(np.abs(zl), initial=0.0),
        np.max(np.abs(zu), initial=0.0),
        np.max(np.abs(y), initial=0.0),
    )
    if info.r_primal > 1e3 * tol and dual_norm > 1e8:
        raise Infeasible(
            f"primal residual {info.r_primal:.2e} stalled with diverging duals"
        )
    raise MaxIterations(
        f"interior point stopped after {info.iterations} iterations "
        f"(rd={info.r_dual:.2e}, rp={info.r_primal:.2e}, mu={info.mu:.2e})"
    )
