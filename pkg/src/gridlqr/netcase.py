"""Grid case ingestion and bus admittance matrix assembly.

Reads a MATPOWER-compatible plain-text case (``baseMVA`` scalar plus the
``bus``, ``gen``, ``branch`` and ``gencost`` matrices) together with a
key-value machine-parameter file, and produces an immutable
:class:`NetworkCase` with buses internally reordered so that generator buses
occupy positions ``1..G`` and load buses ``G+1..N``.  All quantities are
converted to per-unit on the declared MVA base.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import CaseFormatError

# Typical machine constants used when a generator has no explicit entry
# (M, D, tau_d, tau_c, x_d, x_q, x_d_prime, R in Hz/pu).
TYPICAL_MACHINE = dict(
    m=0.2, d=0.0, tau_d=5.0, tau_c=0.2, x_d=0.7, x_q=0.5, x_d_prime=0.07, r_droop=0.02
)

DEFAULT_BASE_MVA = 100.0
DEFAULT_F_HZ = 60.0


@dataclass(frozen=True)
class Bus:
    """One electrical node.

    ``index`` is the 1-based id from the case file; ``kind`` is one of
    ``slack``, ``generator``, ``load``.  Loads and shunts are per-unit on
    the system base.
    """

    index: int
    kind: str
    v_min: float
    v_max: float
    p_load0: float
    q_load0: float
    shunt_g: float
    shunt_b: float
    vm0: float = 1.0
    va0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("slack", "generator", "load"):
            raise CaseFormatError(f"bus {self.index}: unknown kind {self.kind!r}")
        if self.v_min > self.v_max:
            raise CaseFormatError(f"bus {self.index}: v_min > v_max")


@dataclass(frozen=True)
class Branch:
    """Series branch with the standard pi model (tap on the from side)."""

    from_bus: int
    to_bus: int
    series_r: float
    series_x: float
    charging_b: float = 0.0
    tap_ratio: float = 1.0
    phase_shift: float = 0.0  # radians

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise CaseFormatError(f"branch {self.from_bus}-{self.to_bus}: self loop")
        if self.series_r == 0.0 and self.series_x == 0.0:
            raise CaseFormatError(
                f"branch {self.from_bus}-{self.to_bus}: zero series impedance"
            )


@dataclass(frozen=True)
class MachineParams:
    """Fourth-order synchronous machine constants (droop R in Hz/pu)."""

    m: float
    d: float
    tau_d: float
    tau_c: float
    x_d: float
    x_q: float
    x_d_prime: float
    r_droop: float

    def __post_init__(self):
        if self.m <= 0:
            raise CaseFormatError("machine inertia M must be positive")
        if self.tau_d <= 0 or self.tau_c <= 0:
            raise CaseFormatError("machine time constants must be positive")
        if not (self.x_d >= self.x_d_prime > 0):
            raise CaseFormatError("need x_d >= x_d_prime > 0")
        if self.x_q <= 0:
            raise CaseFormatError("x_q must be positive")
        if self.r_droop <= 0:
            raise CaseFormatError("droop R must be positive")
        if self.d < 0:
            raise CaseFormatError("damping D must be nonnegative")


@dataclass(frozen=True)
class GenCost:
    """Quadratic generation cost in $/pu^2 h, $/pu h, $ plus P/Q limits (pu)."""

    c2: float
    c1: float
    c0: float
    p_min: float
    p_max: float
    q_min: float
    q_max: float

    def __post_init__(self):
        if self.c2 < 0:
            raise CaseFormatError("quadratic cost coefficient must be >= 0")
        if self.p_min > self.p_max or self.q_min > self.q_max:
            raise CaseFormatError("generator limit interval is empty")


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Bus admittance matrix Y = G + jB stored by real and imaginary parts."""

    g: np.ndarray
    b: np.ndarray

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def complex(self) -> np.ndarray:
        return self.g + 1j * self.b


class NetworkCase:
    """Validated, internally reordered grid description.

    Buses are stored generators-first; ``orig_ids[i]`` maps the internal
    position ``i`` back to the case-file bus id.  Numpy views of the
    frequently used quantities are precomputed.  Instances are treated as
    immutable and are safe to share across concurrent scenario runs.
    """

    def __init__(self, name, base_mva, f_hz, buses, branches, machines, costs,
                 gen_setpoints):
        self.name = name
        self.base_mva = float(base_mva)
        self.f_hz = float(f_hz)
        self.buses = tuple(buses)
        self.branches = tuple(branches)
        self.machines = tuple(machines)
        self.costs = tuple(costs)

        kinds = [b.kind for b in self.buses]
        if kinds.count("slack") != 1:
            raise CaseFormatError(
                "multiple slack buses" if kinds.count("slack") > 1 else "no slack bus"
            )
        n_gen = sum(1 for k in kinds if k != "load")
        if any(k == "load" for k in kinds[:n_gen]) or any(
            k != "load" for k in kinds[n_gen:]
        ):
            raise CaseFormatError("buses must be ordered generators first")
        if len(self.machines) != n_gen or len(self.costs) != n_gen:
            raise CaseFormatError("machine/cost entries must match generator count")

        self.n_bus = len(self.buses)
        self.n_gen = n_gen
        self.n_load = self.n_bus - n_gen
        self.slack = kinds.index("slack")

        self.orig_ids = np.array([b.index for b in self.buses], dtype=int)
        self.internal_of = {b.index: i for i, b in enumerate(self.buses)}
        if len(self.internal_of) != self.n_bus:
            raise CaseFormatError("duplicate bus ids")

        self.p_load0 = np.array([b.p_load0 for b in self.buses])
        self.q_load0 = np.array([b.q_load0 for b in self.buses])
        self.shunt_g = np.array([b.shunt_g for b in self.buses])
        self.shunt_b = np.array([b.shunt_b for b in self.buses])
        self.v_min = np.array([b.v_min for b in self.buses])
        self.v_max = np.array([b.v_max for b in self.buses])
        self.vm0 = np.array([b.vm0 for b in self.buses])
        self.va0 = np.array([b.va0 for b in self.buses])

        self.m_inertia = np.array([m.m for m in self.machines])
        self.d_damp = np.array([m.d for m in self.machines])
        self.tau_d = np.array([m.tau_d for m in self.machines])
        self.tau_c = np.array([m.tau_c for m in self.machines])
        self.x_d = np.array([m.x_d for m in self.machines])
        self.x_q = np.array([m.x_q for m in self.machines])
        self.x_dp = np.array([m.x_d_prime for m in self.machines])
        self.r_droop = np.array([m.r_droop for m in self.machines])

        self.c2 = np.array([c.c2 for c in self.costs])
        self.c1 = np.array([c.c1 for c in self.costs])
        self.c0 = np.array([c.c0 for c in self.costs])
        self.p_min = np.array([c.p_min for c in self.costs])
        self.p_max = np.array([c.p_max for c in self.costs])
        self.q_min = np.array([c.q_min for c in self.costs])
        self.q_max = np.array([c.q_max for c in self.costs])

        self.pg0 = np.array([gen_setpoints[b.index][0] for b in self.buses[:n_gen]])
        self.qg0 = np.array([gen_setpoints[b.index][1] for b in self.buses[:n_gen]])
        self.vg0 = np.array([gen_setpoints[b.index][2] for b in self.buses[:n_gen]])
        self.gen_setpoints = dict(gen_setpoints)

        for br in self.branches:
            if br.from_bus not in self.internal_of or br.to_bus not in self.internal_of:
                raise CaseFormatError(
                    f"branch {br.from_bus}-{br.to_bus} references unknown bus"
                )
        self.br_from = np.array([self.internal_of[b.from_bus] for b in self.branches],
                                dtype=int)
        self.br_to = np.array([self.internal_of[b.to_bus] for b in self.branches],
                              dtype=int)
        self.br_r = np.array([b.series_r for b in self.branches])
        self.br_x = np.array([b.series_x for b in self.branches])
        self.br_b = np.array([b.charging_b for b in self.branches])
        self.br_tap = np.array([b.tap_ratio if b.tap_ratio else 1.0
                                for b in self.branches])
        self.br_shift = np.array([b.phase_shift for b in self.branches])

    @property
    def omega_s(self) -> float:
        """Synchronous electrical speed in rad/s."""
        return 2.0 * math.pi * self.f_hz

    @property
    def gen_bus_ids(self):
        return self.orig_ids[: self.n_gen]

    def cost_of(self, p_g: np.ndarray) -> float:
        """Total generation cost c(a) = sum c2 p^2 + c1 p + c0 in $."""
        return float(np.sum(self.c2 * p_g**2 + self.c1 * p_g + self.c0))


# ---------------------------------------------------------------------------
# Case text parsing
# ---------------------------------------------------------------------------

_MATRIX_RE = re.compile(
    r"(?:mpc\.)?(?P<name>bus|gen|branch|gencost)\s*=\s*\[(?P<body>.*?)\]\s*;",
    re.DOTALL,
)
_SCALAR_RE = re.compile(r"(?:mpc\.)?baseMVA\s*=\s*(?P<val>[-+0-9.eE]+)\s*;")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_matrix(body: str, name: str) -> list[list[float]]:
    rows = []
    for raw in re.split(r"[;\n]", body):
        tokens = raw.replace(",", " ").split()
        if not tokens:
            continue
        try:
            rows.append([float(t) for t in tokens])
        except ValueError as exc:
            raise CaseFormatError(f"{name} matrix: bad token in row {raw!r}") from exc
    if not rows:
        if name == "branch":
            return []  # isolated-bus networks are legal
        raise CaseFormatError(f"{name} matrix is empty")
    width = len(rows[0])
    for k, row in enumerate(rows):
        if len(row) != width:
            raise CaseFormatError(
                f"{name} matrix: row {k + 1} has {len(row)} columns, expected {width}"
            )
    return rows


def _parse_case_text(case_text: str):
    text = _strip_comments(case_text)
    matrices = {}
    for match in _MATRIX_RE.finditer(text):
        matrices[match.group("name")] = _parse_matrix(
            match.group("body"), match.group("name")
        )
    scalar = _SCALAR_RE.search(text)
    base_mva = float(scalar.group("val")) if scalar else DEFAULT_BASE_MVA
    name_match = re.search(r"function\s+mpc\s*=\s*(\w+)", text)
    name = name_match.group(1) if name_match else "case"
    for required in ("bus", "gen", "branch", "gencost"):
        if required not in matrices:
            raise CaseFormatError(f"case text is missing the {required} matrix")
    return name, base_mva, matrices


def _parse_machine_text(machine_text: str):
    """Parse the key-value machine file into (globals, per-bus dicts)."""
    globals_, sections = {}, {}
    current = None
    for lineno, raw in enumerate(machine_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        header = re.fullmatch(r"\[\s*gen\s+(\d+)\s*\]", line)
        if header:
            current = int(header.group(1))
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise CaseFormatError(f"machine file line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        target = globals_ if current is None else sections[current]
        if key in ("typical",):
            target[key] = value.lower() in ("true", "1", "yes", "on")
        else:
            try:
                target[key] = float(value)
            except ValueError as exc:
                raise CaseFormatError(
                    f"machine file line {lineno}: bad value {value!r}"
                ) from exc
    return globals_, sections


_MACHINE_KEYS = {
    "m": "m", "d": "d", "tau_d": "tau_d", "tau_c": "tau_c",
    "x_d": "x_d", "x_q": "x_q", "x_d_prime": "x_d_prime", "r_droop": "r_droop",
}


def _machine_for(bus_id, sections):
    # Missing sections or keys fall back to the typical constants.
    values = dict(TYPICAL_MACHINE)
    section = sections.get(bus_id, {})
    unknown = set(section) - set(_MACHINE_KEYS)
    if unknown:
        raise CaseFormatError(
            f"machine section for bus {bus_id}: unknown keys {sorted(unknown)}"
        )
    for key, attr in _MACHINE_KEYS.items():
        if key in section:
            values[attr] = section[key]
    return MachineParams(**values)


def parse_case(case_text: str, machine_text: str = "typical = true") -> NetworkCase:
    """Build a validated :class:`NetworkCase` from case and machine text.

    Generator buses are moved to the front (ascending original id, slack
    among them), all quantities are converted to per-unit on the declared
    MVA base, and missing machine entries are filled with the typical
    constants.
    """
    name, base, matrices = _parse_case_text(case_text)
    globals_, sections = _parse_machine_text(machine_text)
    f_hz = float(globals_.get("f_hz", DEFAULT_F_HZ))

    bus_rows = matrices["bus"]
    if any(len(r) < 13 for r in bus_rows):
        raise CaseFormatError("bus matrix needs at least 13 columns")
    ids = [int(r[0]) for r in bus_rows]
    if len(set(ids)) != len(ids):
        raise CaseFormatError("duplicate bus ids")
    slack_ids = [int(r[0]) for r in bus_rows if int(r[1]) == 3]
    if len(slack_ids) > 1:
        raise CaseFormatError("multiple slack buses")
    if not slack_ids:
        raise CaseFormatError("no slack bus")
    slack_id = slack_ids[0]

    gen_rows = matrices["gen"]
    if any(len(r) < 10 for r in gen_rows):
        raise CaseFormatError("gen matrix needs at least 10 columns")
    cost_rows = matrices["gencost"]
    if len(cost_rows) != len(gen_rows):
        raise CaseFormatError("gencost must have one row per generator")

    # Out-of-service generators are dropped; generators with zero capacity
    # degrade their bus to a plain load bus.
    active = [
        (g, c) for g, c in zip(gen_rows, cost_rows) if g[7] > 0 and g[8] > 0.0
    ]
    gen_ids = [int(g[0]) for g, _ in active]
    if len(set(gen_ids)) != len(gen_ids):
        raise CaseFormatError("multiple generators on one bus; aggregate externally")
    if slack_id not in gen_ids:
        raise CaseFormatError("slack bus has no generator")

    bus_by_id = {int(r[0]): r for r in bus_rows}
    for gid in gen_ids:
        if gid not in bus_by_id:
            raise CaseFormatError(f"generator references unknown bus {gid}")

    def make_bus(row, kind):
        return Bus(
            index=int(row[0]),
            kind=kind,
            v_min=float(row[12]),
            v_max=float(row[11]),
            p_load0=float(row[2]) / base,
            q_load0=float(row[3]) / base,
            shunt_g=float(row[4]) / base,
            shunt_b=float(row[5]) / base,
            vm0=float(row[7]),
            va0=math.radians(float(row[8])),
        )

    gen_order = sorted(gen_ids)
    load_order = sorted(i for i in ids if i not in set(gen_ids))
    buses = [
        make_bus(bus_by_id[i], "slack" if i == slack_id else "generator")
        for i in gen_order
    ] + [make_bus(bus_by_id[i], "load") for i in load_order]

    machines, costs, setpoints = [], [], {}
    gen_by_id = {int(g[0]): (g, c) for g, c in active}
    for gid in gen_order:
        g, c = gen_by_id[gid]
        machines.append(_machine_for(gid, sections))
        if int(c[0]) != 2 or int(c[3]) != 3:
            raise CaseFormatError(
                "only polynomial gencost with three coefficients is supported"
            )
        costs.append(
            GenCost(
                c2=float(c[4]) * base * base,
                c1=float(c[5]) * base,
                c0=float(c[6]),
                p_min=float(g[9]) / base,
                p_max=float(g[8]) / base,
                q_min=float(g[4]) / base,
                q_max=float(g[3]) / base,
            )
        )
        setpoints[gid] = (float(g[1]) / base, float(g[2]) / base, float(g[5]))

    branch_rows = matrices["branch"]
    if any(len(r) < 5 for r in branch_rows):
        raise CaseFormatError("branch matrix needs at least 5 columns")
    branches = []
    for r in branch_rows:
        if len(r) >= 11 and r[10] == 0.0:
            continue  # out-of-service branch
        branches.append(
            Branch(
                from_bus=int(r[0]),
                to_bus=int(r[1]),
                series_r=float(r[2]),
                series_x=float(r[3]),
                charging_b=float(r[4]),
                tap_ratio=float(r[8]) if len(r) > 8 and r[8] != 0.0 else 1.0,
                phase_shift=math.radians(float(r[9])) if len(r) > 9 else 0.0,
            )
        )

    return NetworkCase(name, base, f_hz, buses, branches, machines, costs, setpoints)


def serialize_case(case: NetworkCase) -> tuple[str, str]:
    """Render a NetworkCase back into case/machine text (original bus ids).

    ``parse_case(*serialize_case(case))`` reproduces the case exactly.
    """
    base = case.base_mva
    lines = [f"function mpc = {case.name}", "mpc.version = '2';",
             f"mpc.baseMVA = {base:.17g};", "", "mpc.bus = ["]
    kind_code = {"slack": 3, "generator": 2, "load": 1}
    for b in sorted(case.buses, key=lambda b: b.index):
        lines.append(
            f"\t{b.index}\t{kind_code[b.kind]}\t{b.p_load0 * base:.17g}"
            f"\t{b.q_load0 * base:.17g}\t{b.shunt_g * base:.17g}"
            f"\t{b.shunt_b * base:.17g}\t1\t{b.vm0:.17g}"
            f"\t{math.degrees(b.va0):.17g}\t0\t1\t{b.v_max:.17g}\t{b.v_min:.17g};"
        )
    lines += ["];", "", "mpc.gen = ["]
    for i in range(case.n_gen):
        gid = int(case.orig_ids[i])
        pg, qg, vg = case.gen_setpoints[gid]
        lines.append(
            f"\t{gid}\t{pg * base:.17g}\t{qg * base:.17g}"
            f"\t{case.q_max[i] * base:.17g}\t{case.q_min[i] * base:.17g}"
            f"\t{vg:.17g}\t{base:.17g}\t1\t{case.p_max[i] * base:.17g}"
            f"\t{case.p_min[i] * base:.17g};"
        )
    lines += ["];", "", "mpc.branch = ["]
    for br in case.branches:
        lines.append(
            f"\t{br.from_bus}\t{br.to_bus}\t{br.series_r:.17g}\t{br.series_x:.17g}"
            f"\t{br.charging_b:.17g}\t0\t0\t0\t{br.tap_ratio:.17g}"
            f"\t{math.degrees(br.phase_shift):.17g}\t1;"
        )
    lines += ["];", "", "mpc.gencost = ["]
    for i in range(case.n_gen):
        lines.append(
            f"\t2\t0\t0\t3\t{case.c2[i] / base / base:.17g}"
            f"\t{case.c1[i] / base:.17g}\t{case.c0[i]:.17g};"
        )
    lines += ["];", ""]

    mlines = [f"f_hz = {case.f_hz:.17g}", ""]
    for i in range(case.n_gen):
        m = case.machines[i]
        mlines.append(f"[gen {int(case.orig_ids[i])}]")
        mlines += [
            f"M = {m.m:.17g}", f"D = {m.d:.17g}", f"tau_d = {m.tau_d:.17g}",
            f"tau_c = {m.tau_c:.17g}", f"x_d = {m.x_d:.17g}", f"x_q = {m.x_q:.17g}",
            f"x_d_prime = {m.x_d_prime:.17g}", f"R_droop = {m.r_droop:.17g}", "",
        ]
    return "\n".join(lines), "\n".join(mlines)


# ---------------------------------------------------------------------------
# Bundled data access
# ---------------------------------------------------------------------------

def data_dir():
    """Directory holding the bundled case files (GRIDLQR_DATA overrides)."""
    import os
    from pathlib import Path

    override = os.environ.get("GRIDLQR_DATA")
    if override:
        return Path(override)
    return Path(__file__).parent / "data"


def resolve_case_path(name_or_path):
    """Map a case name like ``case9`` or an explicit path to a file path."""
    from pathlib import Path

    p = Path(name_or_path)
    if p.is_file():
        return p
    candidate = data_dir() / f"{name_or_path}.m"
    if candidate.is_file():
        return candidate
    candidate = data_dir() / str(name_or_path)
    if candidate.is_file():
        return candidate
    raise FileNotFoundError(f"case {name_or_path!r} not found (looked in {data_dir()})")


def load_network(case, machines="typical"):
    """Load a NetworkCase from a case name/path and a machine spec.

    ``machines`` is either the literal ``"typical"``, a path to a machine
    file, or a bundled name resolved next to the case file.
    """
    case_path = resolve_case_path(case)
    case_text = case_path.read_text()
    if machines == "typical":
        machine_text = "typical = true"
    else:
        from pathlib import Path

        mpath = Path(machines)
        if not mpath.is_file():
            mpath = data_dir() / machines
        if not mpath.is_file():
            raise FileNotFoundError(f"machine file {machines!r} not found")
        machine_text = mpath.read_text()
    return parse_case(case_text, machine_text)


# ---------------------------------------------------------------------------
# Admittance matrix
# ---------------------------------------------------------------------------

def branch_admittance_terms(case: NetworkCase):
    """Two-port admittance entries (y_ff, y_ft, y_tf, y_tt) per branch."""
    z = case.br_r + 1j * case.br_x
    if np.any(z == 0):
        raise CaseFormatError("zero series impedance in branch table")
    ys = 1.0 / z
    tap = case.br_tap * np.exp(1j * case.br_shift)
    y_ff = (ys + 0.5j * case.br_b) / (case.br_tap**2)
    y_tt = ys + 0.5j * case.br_b
    y_ft = -ys / np.conj(tap)
    y_tf = -ys / tap
    return y_ff, y_ft, y_tf, y_tt


def build_ybus(case: NetworkCase) -> AdmittanceMatrix:
    """Assemble the bus admittance matrix from the standard pi model.

    Taps (on the from side), phase shifts, line charging and bus shunts are
    all included; row sums vanish when none of those are present.
    """
    n = case.n_bus
    y = np.zeros((n, n), dtype=complex)
    y_ff, y_ft, y_tf, y_tt = branch_admittance_terms(case)
    f, t = case.br_from, case.br_to
    np.add.at(y, (f, f), y_ff)
    np.add.at(y, (t, t), y_tt)
    np.add.at(y, (f, t), y_ft)
    np.add.at(y, (t, f), y_tf)
    y[np.diag_indices(n)] += case.shunt_g + 1j * case.shunt_b
    return AdmittanceMatrix(g=np.ascontiguousarray(y.real),
                            b=np.ascontiguousarray(y.imag))
