"""Closed-loop nonlinear DAE simulation under a step load change.

Fixed-step RK4 integrates the machine states (plus the AGC integrator when
selected) while the algebraic layer is re-solved at every stage with warm
starts.  The load-following control cost is accumulated by the trapezoid
rule on (T/2)(dx' Q dx + du' R du) with the weights evaluated at z^eq.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from . import agc as agc_mod
from .dae_model import (AlgebraicSolver, SystemPoint, TWO_PI,
                        build_load_vector, split_x)
from .dispatch import DispatchConfig, DispatchSolution, alqr_opf, baseline_opf
from .errors import (AlgebraicSolveFailure, GridLqrError, NonConvergence,
                     NonFiniteState, SingularJacobian, StageError)
from .linearizer import dump_matrices, linearize
from .lqr import build_qr, feedback
from .netcase import NetworkCase, build_ybus, load_network
from .steady_state import base_operating_point

log = logging.getLogger("gridlqr")


@dataclass(frozen=True)
class ScenarioConfig:
    """Step definition, horizon, controller/method selection and outputs."""

    step_fraction: float = 0.1
    power_factor: float = 0.9
    t_f: float = 60.0
    dt: float = 0.005
    controllers: tuple = ("lqr", "agc")
    methods: tuple = ("alqr", "baseline")
    alpha: float = 0.6
    t_lqr: float = 1000.0
    k_max: int = 2
    agc_gain: float = 1.0
    area_of: dict | None = None
    out_dir: str | None = None
    output_every: int = 10
    dump_matrices: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_f < self.dt:
            raise ValueError("t_f must be at least one step")
        unknown = set(self.controllers) - {"lqr", "agc", "open"}
        if unknown:
            raise ValueError(f"unknown controllers {sorted(unknown)}")
        unknown = set(self.methods) - {"alqr", "baseline"}
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    @property
    def dispatch(self) -> DispatchConfig:
        return DispatchConfig(alpha=self.alpha, t_lqr=self.t_lqr, k_max=self.k_max)


@dataclass
class Trajectory:
    """Sampled closed-loop trajectory (decimated to the output interval)."""

    t: np.ndarray
    x: np.ndarray
    a: np.ndarray
    u: np.ndarray
    ace: np.ndarray | None
    n_gen: int
    n_bus: int
    omega_s: float


@dataclass
class ScenarioReport:
    """One Table-I style result row; wall times never reach output files."""

    network: str
    method: str
    controller: str
    objective: float | None
    steady_state_cost: float
    control_est_cost: float
    total_est_cost: float
    control_cost: float
    total: float
    max_freq_dev_hz: float
    max_volt_dev_pu: float
    dispatch_seconds: float = 0.0
    simulate_seconds: float = 0.0


# ---------------------------------------------------------------------------
# Load step
# ---------------------------------------------------------------------------

# Reactive step per unit fraction, normalized so the reference 10% step at
# power factor 0.9 scales q by exactly 0.0484.
_Q_REF_RATE = 0.484
_TAN_REF = np.tan(np.arccos(0.9))


def apply_step_load(case: NetworkCase, fraction: float, pf: float):
    """Base and stepped load vectors (d0, ds, ds - d0) for a uniform step."""
    if fraction < 0:
        raise ValueError("step fraction must be nonnegative")
    if not (0.0 < pf <= 1.0):
        raise ValueError("power factor must lie in (0, 1]")
    q_rate = fraction * _Q_REF_RATE * float(np.tan(np.arccos(pf))) / _TAN_REF
    d0 = build_load_vector(case, case.p_load0, case.q_load0)
    ds = build_load_vector(
        case,
        (1.0 + fraction) * case.p_load0,
        (1.0 + q_rate) * case.q_load0,
    )
    return d0, ds, ds - d0


# ---------------------------------------------------------------------------
# Controllers
# ---------------------------------------------------------------------------

class LqrController:
    """u = u_eq + K (x - x_eq); no internal state."""

    kind = "lqr"
    n_state = 0

    def __init__(self, z_eq: SystemPoint, k_gain: np.ndarray):
        self.z_eq = z_eq
        self.k = k_gain

    def initial_state(self):
        return np.zeros(0)

    def control(self, x, y, a):
        return feedback(self.z_eq.u, self.z_eq.x, self.k, x)

    def state_derivative(self, x, y, a):
        return np.zeros(0)


class OpenLoopController:
    """Feedforward only: hold the equilibrium controls."""

    kind = "open"
    n_state = 0

    def __init__(self, z_eq: SystemPoint):
        self.z_eq = z_eq

    def initial_state(self):
        return np.zeros(0)

    def control(self, x, y, a):
        return self.z_eq.u

    def state_derivative(self, x, y, a):
        return np.zeros(0)


class AgcController:
    """Governor references from the per-area AGC integrator.

    The integrator replaces the LQR law on the governor channel only; the
    field-voltage rows of the LQR gain stay active (without any excitation
    feedback the flux-decay mode is open-loop unstable at the typical
    machine constants, so a pure r-only law cannot reach the equilibrium).
    """

    kind = "agc"

    def __init__(self, cfg: agc_mod.AreaConfig, z_eq: SystemPoint,
                 k_field: np.ndarray):
        self.cfg = cfg
        self.z_eq = z_eq
        self.k_field = k_field  # f rows of the LQR gain (G x 4G)
        self.n_state = cfg.n_areas

    def initial_state(self):
        return self.cfg.p_eq_area.copy()

    def control(self, x, y, a):
        r = self.cfg.participation * y[
            self.cfg.area_of_bus[: self.cfg.case.n_gen]
        ]
        f = feedback(self.z_eq.f_field, self.z_eq.x, self.k_field, x)
        return np.concatenate([r, f])

    def state_derivative(self, x, y, a):
        ace_vals = agc_mod.ace(self.cfg, a, x, self.z_eq)
        ydot, _ = agc_mod.agc_step(self.cfg, y, ace_vals, self.z_eq.p_g)
        return ydot

    def ace_values(self, x, y, a):
        return agc_mod.ace(self.cfg, a, x, self.z_eq)


def make_controller(kind: str, case: NetworkCase, sol: DispatchSolution,
                    cfg: ScenarioConfig):
    if kind == "lqr":
        return LqrController(sol.z_eq, sol.riccati.k)
    if kind == "open":
        return OpenLoopController(sol.z_eq)
    if kind == "agc":
        area_cfg = agc_mod.build_area_config(
            case, sol.z_eq, area_of=cfg.area_of, gain=cfg.agc_gain
        )
        return AgcController(area_cfg, sol.z_eq,
                             sol.riccati.k[case.n_gen:, :])
    raise ValueError(f"unknown controller {kind!r}")


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

def simulate(case: NetworkCase, Y, z0: SystemPoint, z_eq: SystemPoint,
             controller, d_s, cfg: ScenarioConfig):
    """Integrate the closed-loop DAEs from x(0) = x0 under load d_s.

    Returns (Trajectory, metrics dict).  The control-cost integrand uses
    Q, R evaluated at z_eq and T_lqr from the config.
    """
    weights = build_qr(case, z_eq, cfg.dispatch.weights)
    q_diag = np.diag(weights.q)
    r_diag = np.diag(weights.r)
    g = case.n_gen
    nx = 4 * g
    solver = AlgebraicSolver(case, Y)
    d_s = np.asarray(d_s, float)

    def integrand(x, u):
        dx = x - z_eq.x
        du = u - z_eq.u
        return 0.5 * cfg.t_lqr * (q_diag @ dx**2 + r_diag @ du**2)

    steps = int(round(cfg.t_f / cfg.dt))
    dt = cfg.dt
    has_ace = hasattr(controller, "ace_values")

    s = np.concatenate([z0.x, controller.initial_state()])
    a = np.array(z0.a)
    times, xs, aas, us, aces = [], [], [], [], []

    ny = controller.n_state

    def rhs(s_vec, a_guess):
        x = s_vec[:nx]
        y = s_vec[nx:]
        a_loc = solver.solve(x, d_s, a_guess)
        u = controller.control(x, y, a_loc)
        sdot = np.empty(nx + ny)
        _kernels.machine_derivatives(
            g, case.n_bus, case.omega_s, case.m_inertia, case.d_damp,
            case.tau_d, case.tau_c, case.x_d, case.x_dp, case.r_droop,
            x, a_loc, u, sdot[:nx],
        )
        if ny:
            sdot[nx:] = controller.state_derivative(x, y, a_loc)
        return sdot, a_loc, u

    def store(t, x, a_loc, u, y):
        times.append(t)
        xs.append(x.copy())
        aas.append(a_loc.copy())
        us.append(np.asarray(u, float).copy())
        if has_ace:
            aces.append(controller.ace_values(x, y, a_loc))

    def partial_traj():
        return Trajectory(
            t=np.array(times), x=np.array(xs), a=np.array(aas), u=np.array(us),
            ace=np.array(aces) if has_ace else None, n_gen=g, n_bus=case.n_bus,
            omega_s=case.omega_s,
        )

    # algebraic variables jump at t = 0 when the load steps
    try:
        _, a, u = rhs(s, a)
    except (NonConvergence, SingularJacobian) as exc:
        raise AlgebraicSolveFailure(str(exc), trajectory=partial_traj()) from exc
    store(0.0, s[:nx], a, u, s[nx:])
    cost = 0.0
    prev_integrand = integrand(s[:nx], u)
    max_freq = float(np.max(np.abs(split_x(case, s[:nx])[1] - case.omega_s))) / TWO_PI
    max_volt = float(np.max(np.abs(
        a[2 * g: 2 * g + case.n_bus] - z_eq.v
    )))

    t_wall = time.perf_counter()
    for k in range(steps):
        try:
            k1, a, _ = rhs(s, a)
            k2, a, _ = rhs(s + 0.5 * dt * k1, a)
            k3, a, _ = rhs(s + 0.5 * dt * k2, a)
            k4, a, _ = rhs(s + dt * k3, a)
            s_next = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(s_next)):
                raise NonFiniteState(
                    f"non-finite state at t = {(k + 1) * dt:.4f} s"
                )
            s = s_next
            a = solver.solve(s[:nx], d_s, a)
        except (NonConvergence, SingularJacobian) as exc:
            raise AlgebraicSolveFailure(str(exc), trajectory=partial_traj()) from exc
        u = controller.control(s[:nx], s[nx:], a)

        cur = integrand(s[:nx], u)
        cost += 0.5 * (prev_integrand + cur) * dt
        prev_integrand = cur

        omega = split_x(case, s[:nx])[1]
        max_freq = max(max_freq, float(np.max(np.abs(omega - case.omega_s))) / TWO_PI)
        v = a[2 * g: 2 * g + case.n_bus]
        max_volt = max(max_volt, float(np.max(np.abs(v - z_eq.v))))

        if (k + 1) % cfg.output_every == 0 or k == steps - 1:
            store((k + 1) * dt, s[:nx], a, u, s[nx:])

    metrics = {
        "control_cost": cost,
        "max_freq_dev_hz": max_freq,
        "max_volt_dev_pu": max_volt,
        "final_state_gap": float(np.max(np.abs(s[:nx] - z_eq.x))),
        "simulate_seconds": time.perf_counter() - t_wall,
    }
    return partial_traj(), metrics


# ---------------------------------------------------------------------------
# Scenario workflow
# ---------------------------------------------------------------------------

@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except GridLqrError as exc:
        raise StageError(name, exc) from exc


def trajectory_csv(traj: Trajectory) -> str:
    """Render the trajectory with the plotting schema columns."""
    g, n = traj.n_gen, traj.n_bus
    header = (
        ["t"]
        + [f"delta_{i+1}" for i in range(g)]
        + [f"freq_hz_dev_{i+1}" for i in range(g)]
        + [f"emf_{i+1}" for i in range(g)]
        + [f"mech_{i+1}" for i in range(g)]
        + [f"r_{i+1}" for i in range(g)]
        + [f"f_{i+1}" for i in range(g)]
        + [f"v_{i+1}" for i in range(n)]
        + [f"theta_{i+1}" for i in range(n)]
    )
    if traj.ace is not None:
        header += [f"ace_{i+1}" for i in range(traj.ace.shape[1])]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for k, t in enumerate(traj.t):
        x, a, u = traj.x[k], traj.a[k], traj.u[k]
        delta, omega, emf, mech = x[:g], x[g:2*g], x[2*g:3*g], x[3*g:]
        row = (
            [f"{t:.6f}"]
            + [f"{val:.10g}" for val in delta]
            + [f"{val:.10g}" for val in (omega - traj.omega_s) / TWO_PI]
            + [f"{val:.10g}" for val in emf]
            + [f"{val:.10g}" for val in mech]
            + [f"{val:.10g}" for val in u[:g]]
            + [f"{val:.10g}" for val in u[g:]]
            + [f"{val:.10g}" for val in a[2*g:2*g+n]]
            + [f"{val:.10g}" for val in a[2*g+n:]]
        )
        if traj.ace is not None:
            row += [f"{val:.10g}" for val in traj.ace[k]]
        writer.writerow(row)
    return buf.getvalue()


def _auto_machines(case_source):
    """Prefer a bundled machine file next to the named case."""
    from .netcase import data_dir, resolve_case_path

    try:
        path = resolve_case_path(case_source)
    except FileNotFoundError:
        return "typical"
    sibling = path.with_suffix(".machines")
    if sibling.is_file():
        return str(sibling)
    candidate = data_dir() / f"{path.stem}.machines"
    return str(candidate) if candidate.is_file() else "typical"


def run_scenario(case_source, cfg: ScenarioConfig, machines="auto"):
    """Full workflow: build, linearize, dispatch, simulate, emit files.

    Returns (reports, solutions, trajectories) where trajectories maps
    (method, controller) keys to Trajectory objects.  ``machines="auto"``
    picks the bundled machine file shipped with a named case, falling back
    to the typical constants.
    """
    if machines == "auto":
        machines = _auto_machines(case_source)
    with _stage("case"):
        case = load_network(case_source, machines)
        Y = build_ybus(case)
    with _stage("base-point"):
        z0 = base_operating_point(case, Y)
    with _stage("linearize"):
        lin = linearize(case, Y, z0)
    d0, d_s, delta_d = apply_step_load(case, cfg.step_fraction, cfg.power_factor)

    solutions = {}
    for method in cfg.methods:
        with _stage(f"dispatch-{method}"):
            solver = alqr_opf if method == "alqr" else baseline_opf
            solutions[method] = solver(case, Y, lin, delta_d, cfg.dispatch)
            log.info("%s dispatch on %s took %.3f s", method, case.name,
                     solutions[method].wall_time)

    tasks = [(m, c) for m in cfg.methods for c in cfg.controllers]

    def run_one(task):
        method, controller_kind = task
        sol = solutions[method]
        controller = make_controller(controller_kind, case, sol, cfg)
        with _stage(f"simulate-{method}-{controller_kind}"):
            traj, metrics = simulate(case, Y, z0, sol.z_eq, controller, d_s, cfg)
        report = ScenarioReport(
            network=case.name,
            method=method,
            controller=controller_kind,
            objective=sol.objective if method == "alqr" else None,
            steady_state_cost=sol.steady_cost_eq,
            control_est_cost=sol.est_control_cost,
            total_est_cost=sol.steady_cost_eq + sol.est_control_cost,
            control_cost=metrics["control_cost"],
            total=sol.steady_cost_eq + metrics["control_cost"],
            max_freq_dev_hz=metrics["max_freq_dev_hz"],
            max_volt_dev_pu=metrics["max_volt_dev_pu"],
            dispatch_seconds=sol.wall_time,
            simulate_seconds=metrics["simulate_seconds"],
        )
        log.info("simulated %s under %s in %.3f s", method, controller_kind,
                 metrics["simulate_seconds"])
        return task, traj, report

    results = {}
    if len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(tasks))) as pool:
            for task, traj, report in pool.map(run_one, tasks):
                results[task] = (traj, report)
    else:
        for task in tasks:
            t, traj, report = run_one(task)
            results[t] = (traj, report)

    reports = [results[t][1] for t in tasks]
    trajectories = {t: results[t][0] for t in tasks}

    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if cfg.dump_matrices:
            dump_matrices(lin, out / "matrices")
        for (method, controller_kind), traj in trajectories.items():
            path = out / f"traj_{case.name}_{method}_{controller_kind}.csv"
            path.write_text(trajectory_csv(traj))
        (out / f"report_{case.name}.csv").write_text(report_csv(reports))
        (out / f"report_{case.name}.txt").write_text(report_table(reports))
    return reports, solutions, trajectories


_REPORT_COLUMNS = [
    ("network", "Network"),
    ("method", "Method"),
    ("controller", "Controller"),
    ("objective", "Obj. ($)"),
    ("steady_state_cost", "Steady-state cost ($)"),
    ("control_est_cost", "Control est. cost ($)"),
    ("total_est_cost", "Total est. cost ($)"),
    ("control_cost", "Control cost ($)"),
    ("total", "Total ($)"),
    ("max_freq_dev_hz", "Max. freq. dev. (Hz)"),
    ("max_volt_dev_pu", "Max. volt. dev. (pu)"),
]


def _fmt(value):
    if value is None:
        return "---"
    if isinstance(value, str):
        return value
    return f"{value:.4f}"


def report_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([key for key, _ in _REPORT_COLUMNS])
    for rep in reports:
        writer.writerow([_fmt(getattr(rep, key)) for key, _ in _REPORT_COLUMNS])
    return buf.getvalue()


def report_table(reports) -> str:
    headers = [label for _, label in _REPORT_COLUMNS]
    rows = [[_fmt(getattr(rep, key)) for key, _ in _REPORT_COLUMNS]
            for rep in reports]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(r))))
    return "\n".join(lines) + "\n"
