"""Jacobians of the DAE maps at a base point and state-space reduction.

Eliminating the algebraic layer of the linearized DAEs around z0 gives

    dx'/dt = A dx + B du + E dd,   A = g_x - g_a h_a^{-1} h_x,
                                   B = g_u,  E = g_a h_a^{-1}.

h_a is factorized once (dense LU with partial pivoting) and the factor is
reused for both the h_x solve and the E solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .dae_model import SystemPoint, eval_g, eval_g_jacobians, eval_h_jacobians
from .errors import SingularAlgebraicJacobian
from .netcase import AdmittanceMatrix, NetworkCase

COND_LIMIT = 1e12


@dataclass(frozen=True)
class LinearizedSystem:
    """Five DAE Jacobians plus the reduced state-space triple (A, B, E)."""

    g_x: np.ndarray
    g_a: np.ndarray
    g_u: np.ndarray
    h_x: np.ndarray
    h_a: np.ndarray
    z0: SystemPoint
    cond_h_a: float
    a_mat: np.ndarray | None = None
    b_mat: np.ndarray | None = None
    e_mat: np.ndarray | None = None


def jacobians(case: NetworkCase, Y: AdmittanceMatrix, z0: SystemPoint) -> LinearizedSystem:
    """Analytic partial derivatives of the DAE maps at z0.

    z0 is expected to be an equilibrium; a non-equilibrium base point is
    reported as a warning and the Jacobians are computed anyway.
    """
    gres = np.max(np.abs(eval_g(case, z0.x, z0.a, z0.u)))
    if gres >= 1e-8:
        warnings.warn(
            f"base point is not an equilibrium (|g| = {gres:.2e})", stacklevel=2
        )
    g_x, g_a, g_u = eval_g_jacobians(case, z0.x, z0.a, z0.u)
    h_x, h_a = eval_h_jacobians(case, Y, z0.x, z0.a)
    return LinearizedSystem(
        g_x=g_x, g_a=g_a, g_u=g_u, h_x=h_x, h_a=h_a, z0=z0,
        cond_h_a=float(np.linalg.cond(h_a)),
    )


def reduce(lin: LinearizedSystem) -> LinearizedSystem:
    """Fill A, B, E by solving against h_a (no explicit inverse)."""
    if lin.cond_h_a >= COND_LIMIT:
        raise SingularAlgebraicJacobian(
            f"algebraic Jacobian condition {lin.cond_h_a:.2e} exceeds {COND_LIMIT:.0e}"
        )
    lu = lu_factor(lin.h_a)
    w = lu_solve(lu, lin.h_x)                 # h_a^{-1} h_x
    e_mat = lu_solve(lu, lin.g_a.T, trans=1).T  # g_a h_a^{-1}
    a_mat = lin.g_x - lin.g_a @ w
    return replace(lin, a_mat=a_mat, b_mat=lin.g_u.copy(), e_mat=e_mat)


def linearize(case: NetworkCase, Y: AdmittanceMatrix, z0: SystemPoint) -> LinearizedSystem:
    """Jacobians plus reduction in one call."""
    return reduce(jacobians(case, Y, z0))


def dump_matrices(lin: LinearizedSystem, out_dir) -> None:
    """Write each matrix as row-major space-separated text (debug aid)."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    named = {
        "g_x": lin.g_x, "g_a": lin.g_a, "g_u": lin.g_u,
        "h_x": lin.h_x, "h_a": lin.h_a,
        "A": lin.a_mat, "B": lin.b_mat, "E": lin.e_mat,
    }
    for name, mat in named.items():
        if mat is not None:
            np.savetxt(out / f"{name}.txt", mat, fmt="%.17g", delimiter=" ")
