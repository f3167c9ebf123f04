import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlqr import _kernels
from gridlqr.dae_model import (build_load_vector, eval_g, eval_h,
                               eval_h_jacobians, loads_from_vector,
                               solve_algebraic, split_a)
from gridlqr.errors import NonConvergence
from gridlqr.netcase import build_ybus, load_network, parse_case


@pytest.fixture(scope="module")
def nine():
    case = load_network("case9")
    Y = build_ybus(case)
    from gridlqr.steady_state import base_operating_point

    return case, Y, base_operating_point(case, Y)


def test_equilibrium_derivatives_vanish(nine):
    case, Y, z0 = nine
    assert np.max(np.abs(eval_g(case, z0.x, z0.a, z0.u))) < 1e-10


def test_equilibrium_balances_load(nine):
    case, Y, z0 = nine
    assert np.max(np.abs(eval_h(case, Y, z0.x, z0.a) - z0.d)) < 1e-10


def test_swing_row_direct_substitution(nine):
    # M = 0.2, D = 0, m - p_g = 0.02 pu at synchronous speed -> domega = 0.1
    case, Y, z0 = nine
    g = case.n_gen
    x = z0.x.copy()
    a = z0.a.copy()
    x[3 * g] = a[0] + 0.02          # m_1 = p_g1 + 0.02
    x[g: 2 * g] = case.omega_s       # omega = omega_s
    xdot = eval_g(case, x, a, z0.u)
    assert xdot[g] == pytest.approx(0.02 / 0.2)


def test_governor_row_direct_substitution(nine):
    # tau_c = 0.2, r = 0.1, m = 0 at synchronous speed -> dm = 0.5
    case, Y, z0 = nine
    g = case.n_gen
    x = z0.x.copy()
    u = z0.u.copy()
    x[g: 2 * g] = case.omega_s
    x[3 * g:] = 0.0
    u[:g] = 0.1
    xdot = eval_g(case, x, a := z0.a.copy(), u)
    assert np.allclose(xdot[3 * g:], 0.1 / 0.2)


ISOLATED = """
mpc.baseMVA = 100;
mpc.bus = [ 1 3 0 0 0 0 1 1.0 0 345 1 1.1 0.9; ];
mpc.gen = [ 1 0 0 100 -100 1.0 100 1 200 0; ];
mpc.branch = [ ];
mpc.gencost = [ 2 0 0 3 0.0 1 0; ];
"""


def test_isolated_generator_stator_rows():
    # delta = theta and e = v make both stator residuals collapse to
    # -p_g and -q_g; the balance requires p_g = q_g = 0
    case = parse_case(ISOLATED)
    Y = build_ybus(case)
    x = np.array([0.3, case.omega_s, 1.0, 0.0])   # delta=0.3, e=1
    a = np.array([0.0, 0.0, 1.0, 0.3])            # p=q=0, v=1, theta=0.3
    h = eval_h(case, Y, x, a)
    assert h[0] == pytest.approx(0.0, abs=1e-15)
    assert h[1] == pytest.approx(0.0, abs=1e-15)


def test_eval_h_matches_complex_power_oracle(nine):
    case, Y, z0 = nine
    rng = np.random.default_rng(11)
    g, n = case.n_gen, case.n_bus
    for _ in range(5):
        x = z0.x + 0.1 * rng.normal(size=z0.x.shape)
        a = z0.a + 0.05 * rng.normal(size=z0.a.shape)
        p_g, q_g, v, th = split_a(case, a)
        volt = v * np.exp(1j * th)
        s = volt * np.conj(Y.complex @ volt)
        h = eval_h(case, Y, x, a)
        oracle_p = np.concatenate([-p_g + s.real[:g], s.real[g:]])
        oracle_q = np.concatenate([-q_g + s.imag[:g], s.imag[g:]])
        assert np.allclose(h[2 * g: 3 * g], oracle_p[:g], atol=1e-12)
        assert np.allclose(h[3 * g: 4 * g], oracle_q[:g], atol=1e-12)
        assert np.allclose(h[4 * g: 4 * g + n - g], oracle_p[g:], atol=1e-12)
        assert np.allclose(h[4 * g + n - g:], oracle_q[g:], atol=1e-12)


def test_dimension_mismatch_raises(nine):
    case, Y, z0 = nine
    with pytest.raises(ValueError, match="dimension"):
        eval_g(case, z0.x[:-1], z0.a, z0.u)
    with pytest.raises(ValueError, match="dimension"):
        eval_h(case, Y, z0.x, z0.a[:-1])


def test_solve_algebraic_identity_at_equilibrium(nine):
    case, Y, z0 = nine
    a = solve_algebraic(case, Y, z0.x, z0.d, z0.a)
    assert np.max(np.abs(a - z0.a)) < 1e-9


def test_solve_algebraic_contracts_from_perturbed_guess(nine):
    case, Y, z0 = nine
    rng = np.random.default_rng(5)
    guess = z0.a + 1e-3 * rng.normal(size=z0.a.shape)
    a = solve_algebraic(case, Y, z0.x, z0.d, guess)
    assert np.max(np.abs(eval_h(case, Y, z0.x, a) - z0.d)) <= 1e-10
    assert np.max(np.abs(a - z0.a)) < 1e-6


def test_solve_algebraic_nonconvergence_on_infeasible_load(nine):
    case, Y, z0 = nine
    with pytest.raises(NonConvergence):
        solve_algebraic(case, Y, z0.x, 50.0 * z0.d, z0.a)


def test_solve_algebraic_singular_jacobian_on_islanded_bus():
    # a bus with no incident branches zeroes its balance rows
    from gridlqr.errors import SingularJacobian

    text = """
    mpc.baseMVA = 100;
    mpc.bus = [
        1 3 0 0 0 0 1 1.0 0 345 1 1.1 0.9;
        2 1 10 5 0 0 1 1.0 0 345 1 1.1 0.9;
    ];
    mpc.gen = [ 1 0 0 100 -100 1.0 100 1 200 0; ];
    mpc.branch = [ ];
    mpc.gencost = [ 2 0 0 3 0.0 1 0; ];
    """
    case = parse_case(text)
    Y = build_ybus(case)
    x = np.array([0.0, case.omega_s, 1.0, 0.1])
    a = np.array([0.1, 0.0, 1.0, 1.0, 0.0, 0.0])
    d = build_load_vector(case, case.p_load0, case.q_load0)
    with pytest.raises(SingularJacobian):
        solve_algebraic(case, Y, x, d, a)


def test_lossless_network_power_balance(nine):
    # with r = 0 everywhere any algebraic solution balances real power
    import dataclasses

    from gridlqr.netcase import NetworkCase

    case9, _, _ = nine
    branches = [dataclasses.replace(b, series_r=0.0) for b in case9.branches]
    case = NetworkCase(case9.name, case9.base_mva, case9.f_hz, case9.buses,
                       branches, case9.machines, case9.costs,
                       case9.gen_setpoints)
    assert np.all(case.br_r == 0)
    Y = build_ybus(case)
    from gridlqr.steady_state import base_operating_point

    z = base_operating_point(case, Y)
    rng = np.random.default_rng(2)
    x = z.x + 0.02 * rng.normal(size=z.x.shape)
    a = solve_algebraic(case, Y, x, z.d, z.a)
    p_l, _ = loads_from_vector(case, z.d)
    assert abs(np.sum(a[: case.n_gen]) - np.sum(p_l)) < 1e-9


def test_angle_shift_invariance(nine):
    case, Y, z0 = nine
    g, n = case.n_gen, case.n_bus
    shift = 0.37
    x2 = z0.x.copy()
    x2[:g] += shift
    a2 = z0.a.copy()
    a2[2 * g + n:] += shift
    h1 = eval_h(case, Y, z0.x, z0.a)
    h2 = eval_h(case, Y, x2, a2)
    assert np.max(np.abs(h1 - h2)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_eval_g_affine_in_controls(seed):
    case = load_network("case9")
    Y = build_ybus(case)
    from gridlqr.steady_state import base_operating_point

    z0 = base_operating_point(case, Y)
    rng = np.random.default_rng(seed)
    u1 = z0.u + rng.normal(size=z0.u.shape)
    u2 = z0.u + rng.normal(size=z0.u.shape)
    du = u1 - u2
    d1 = eval_g(case, z0.x, z0.a, u1) - eval_g(case, z0.x, z0.a, u2)
    # the difference depends on u1 - u2 only
    d2 = eval_g(case, z0.x, z0.a, z0.u + du) - eval_g(case, z0.x, z0.a, z0.u)
    assert np.allclose(d1, d2, atol=1e-12)


def test_kernels_match_reference(nine):
    case, Y, z0 = nine
    nz = _kernels.YbusNonzeros(Y)
    rng = np.random.default_rng(9)
    na = z0.a.size
    for _ in range(3):
        x = z0.x + 0.05 * rng.normal(size=z0.x.shape)
        a = z0.a + 0.02 * rng.normal(size=z0.a.shape)
        out = np.empty(na)
        _kernels.residual(case.n_gen, case.n_bus, nz.rows, nz.cols, nz.gv,
                          nz.bv, case.x_dp, case.x_q, x, a, z0.d, out)
        assert np.allclose(out, eval_h(case, Y, x, a) - z0.d, atol=1e-13)
        ha_k = np.empty((na, na))
        _kernels.jacobian_a(case.n_gen, case.n_bus, nz.rows, nz.cols, nz.gv,
                            nz.bv, nz.gd, nz.bd, case.x_dp, case.x_q, x, a, ha_k)
        assert np.allclose(ha_k, eval_h_jacobians(case, Y, x, a)[1], atol=1e-12)


def test_machine_derivative_kernel_matches_eval_g(nine):
    case, Y, z0 = nine
    rng = np.random.default_rng(13)
    x = z0.x + 0.1 * rng.normal(size=z0.x.shape)
    a = z0.a + 0.05 * rng.normal(size=z0.a.shape)
    u = z0.u + 0.1 * rng.normal(size=z0.u.shape)
    out = np.empty(4 * case.n_gen)
    _kernels.machine_derivatives(
        case.n_gen, case.n_bus, case.omega_s, case.m_inertia, case.d_damp,
        case.tau_d, case.tau_c, case.x_d, case.x_dp, case.r_droop, x, a, u, out,
    )
    assert np.allclose(out, eval_g(case, x, a, u), atol=1e-13)


def test_load_vector_roundtrip(nine):
    case, _, z0 = nine
    p_l, q_l = loads_from_vector(case, z0.d)
    assert np.array_equal(build_load_vector(case, p_l, q_l), z0.d)
    assert np.all(z0.d[: 2 * case.n_gen] == 0.0)
