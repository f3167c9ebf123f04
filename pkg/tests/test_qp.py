import itertools

import numpy as np
import pytest

from gridlqr.errors import Infeasible, MaxIterations
from gridlqr.qp import solve_qp


def enumerate_box_qp(h, f, a_eq, b_eq, lb, ub):
    """Exhaustive active-set enumeration for strictly convex box QPs.

    For every assignment of each bounded variable to {free, lower, upper}
    the equality-constrained subproblem is solved for the free variables;
    the best candidate that satisfies all bounds and equalities is the
    optimum.  KKT solves with a shared factorization per free set.
    """
    n = f.size
    m = a_eq.shape[0]
    states = [
        [None]
        + (["lo"] if np.isfinite(lb[i]) else [])
        + (["hi"] if np.isfinite(ub[i]) else [])
        for i in range(n)
    ]
    best_val, best_x = np.inf, None
    for pattern in itertools.product(*states):
        active = [i for i, s in enumerate(pattern) if s is not None]
        free = [i for i, s in enumerate(pattern) if s is None]
        x_act = np.array(
            [lb[i] if pattern[i] == "lo" else ub[i] for i in active]
        )
        nf = len(free)
        kkt = np.zeros((nf + m, nf + m))
        kkt[:nf, :nf] = h[np.ix_(free, free)]
        kkt[:nf, nf:] = a_eq[:, free].T
        kkt[nf:, :nf] = a_eq[:, free]
        rhs = np.zeros(nf + m)
        rhs[:nf] = -f[free] - (h[np.ix_(free, active)] @ x_act if active else 0.0)
        rhs[nf:] = b_eq - (a_eq[:, active] @ x_act if active else 0.0)
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        x = np.zeros(n)
        x[free] = sol[:nf]
        x[active] = x_act
        if np.any(x < lb - 1e-9) or np.any(x > ub + 1e-9):
            continue
        if m and np.max(np.abs(a_eq @ x - b_eq)) > 1e-8:
            continue
        val = 0.5 * x @ h @ x + f @ x
        if val < best_val - 1e-12:
            best_val, best_x = val, x
    return best_x


def random_box_qp(rng, n_max=12):
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(0, max(1, n // 3) + 1))
    mat = rng.normal(size=(n, n))
    h = mat @ mat.T + 0.3 * np.eye(n)
    f = 2.0 * rng.normal(size=n)
    lb = np.where(rng.random(n) < 0.8, rng.normal(size=n) - 1.0, -np.inf)
    ub = np.where(rng.random(n) < 0.8, rng.normal(size=n) + 1.0, np.inf)
    both = np.isfinite(lb) & np.isfinite(ub)
    ub[both] = np.maximum(ub[both], lb[both] + 0.4)
    x_feas = np.clip(rng.normal(size=n),
                     np.where(np.isfinite(lb), lb, -3.0),
                     np.where(np.isfinite(ub), ub, 3.0))
    a_eq = rng.normal(size=(m, n))
    b_eq = a_eq @ x_feas if m else np.zeros(0)
    return h, f, a_eq, b_eq, lb, ub


def test_active_bound():
    x, info = solve_qp([[2.0]], [0.0], lb=[1.0], ub=[np.inf])
    assert x[0] == pytest.approx(1.0, abs=1e-9)
    assert info.status == "optimal"


def test_symmetric_equality():
    x, _ = solve_qp(2 * np.eye(2), np.zeros(2), [[1.0, 1.0]], [2.0])
    assert np.allclose(x, [1.0, 1.0], atol=1e-9)


def test_ten_variable_qp_matches_enumeration():
    rng = np.random.default_rng(41)
    mat = rng.normal(size=(10, 10))
    h = mat @ mat.T + 0.5 * np.eye(10)
    f = rng.normal(size=10)
    a_eq = rng.normal(size=(3, 10))
    lb = rng.normal(size=10) - 1.0
    ub = lb + rng.uniform(0.5, 2.5, size=10)
    x_feas = lb + (ub - lb) * rng.random(10)
    b_eq = a_eq @ x_feas
    x, _ = solve_qp(h, f, a_eq, b_eq, lb, ub)
    oracle = enumerate_box_qp(h, f, a_eq, b_eq, lb, ub)
    assert np.max(np.abs(x - oracle)) < 1e-7


def test_kkt_residuals_at_tolerance():
    rng = np.random.default_rng(7)
    h, f, a_eq, b_eq, lb, ub = random_box_qp(rng)
    x, info = solve_qp(h, f, a_eq, b_eq, lb, ub)
    assert info.status == "optimal"
    assert info.r_dual <= 1e-8
    assert info.r_primal <= 1e-8
    assert info.mu <= 1e-8 * (1 + np.max(np.abs(f)))
    # box complementarity: either at a face or with vanishing multiplier gap
    assert np.all(x >= lb - 1e-10)
    assert np.all(x <= ub + 1e-10)


def test_infeasible_box_vs_equality():
    with pytest.raises(Infeasible):
        solve_qp(2 * np.eye(2), np.zeros(2), [[1.0, 1.0]], [10.0],
                 lb=[-1.0, -1.0], ub=[1.0, 1.0])


def test_empty_box_rejected():
    with pytest.raises(Infeasible):
        solve_qp(np.eye(1), [0.0], lb=[2.0], ub=[1.0])


def test_inconsistent_duplicate_rows_rejected():
    a_eq = [[1.0, 1.0], [1.0, 1.0]]
    with pytest.raises(Infeasible):
        solve_qp(np.eye(2), np.zeros(2), a_eq, [1.0, 2.0],
                 lb=[-5, -5], ub=[5, 5])


def test_dependent_rows_dropped_with_warning():
    a_eq = [[1.0, 1.0], [2.0, 2.0]]
    with pytest.warns(UserWarning, match="dependent"):
        x, info = solve_qp(np.eye(2), np.zeros(2), a_eq, [1.0, 2.0],
                           lb=[-5, -5], ub=[5, 5])
    assert info.dropped_rows == 1
    assert np.allclose(x, [0.5, 0.5], atol=1e-8)


def test_fixed_variables_become_equalities():
    x, _ = solve_qp(np.eye(2), np.array([1.0, 1.0]),
                    lb=[0.25, -5.0], ub=[0.25, 5.0])
    assert x[0] == pytest.approx(0.25, abs=1e-10)
    assert x[1] == pytest.approx(-1.0, abs=1e-8)


def test_iteration_cap_raises():
    rng = np.random.default_rng(3)
    h, f, a_eq, b_eq, lb, ub = random_box_qp(rng)
    with pytest.raises(MaxIterations):
        solve_qp(h, f, a_eq, b_eq, lb, ub, max_iter=2)


def test_random_battery_matches_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        h, f, a_eq, b_eq, lb, ub = random_box_qp(rng, n_max=8)
        x, info = solve_qp(h, f, a_eq if a_eq.size else None,
                           b_eq if a_eq.size else None, lb, ub)
        oracle = enumerate_box_qp(h, f, a_eq, b_eq, lb, ub)
        assert oracle is not None
        assert np.max(np.abs(x - oracle)) < 1e-7
