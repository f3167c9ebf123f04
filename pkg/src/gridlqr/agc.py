"""Area control error and the AGC integrator.

Per area a the control error is

    ACE_a = sum_{a'} (p_aa' - p_aa'^eq) + b_a (mean_i omega_i - omega_s)/2pi

with bias b_a = sum over area generators of (1/R_i + D_i); the frequency
term is in Hz to match the Hz/pu droop convention.  The integrator

    ydot_a = K_a (-y_a - ACE_a + sum p_g^eq),   r_i = K_i y_a

feeds the governor reference; participation factors K_i sum to one per area.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dae_model import SystemPoint, split_a, split_x, TWO_PI
from .errors import CaseFormatError
from .netcase import NetworkCase, branch_admittance_terms


@dataclass(frozen=True)
class AreaConfig:
    """Area partition plus the derived AGC constants."""

    case: NetworkCase
    area_of_bus: np.ndarray          # internal bus order -> area position
    area_ids: tuple                  # external labels, sorted
    bias: np.ndarray                 # b_a per area
    gain: float                      # integrator gain K_a (shared)
    participation: np.ndarray        # K_i per generator
    p_eq_area: np.ndarray            # sum of p_g^eq per area
    tie_from: np.ndarray             # tie branch indices oriented by from bus
    net_export_eq: np.ndarray        # equilibrium net tie export per area

    @property
    def n_areas(self) -> int:
        return len(self.area_ids)


def parse_area_file(text: str) -> dict:
    """Read ``bus_id area_id`` lines into a mapping."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CaseFormatError(f"area file line {lineno}: expected 'bus area'")
        mapping[int(parts[0])] = int(parts[1])
    return mapping


def branch_real_flows(case: NetworkCase, v, theta):
    """Sending-end real power at the from and to terminals of every branch."""
    y_ff, y_ft, y_tf, y_tt = branch_admittance_terms(case)
    vc = v * np.exp(1j * theta)
    vf, vt = vc[case.br_from], vc[case.br_to]
    p_from = np.real(vf * np.conj(y_ff * vf + y_ft * vt))
    p_to = np.real(vt * np.conj(y_tf * vf + y_tt * vt))
    return p_from, p_to


def _net_exports(case, area_of_bus, n_areas, tie, v, theta):
    """Net real power each area pushes into its tie lines."""
    out = np.zeros(n_areas)
    if tie.size == 0:
        return out
    p_from, p_to = branch_real_flows(case, v, theta)
    for idx in tie:
        out[area_of_bus[case.br_from[idx]]] += p_from[idx]
        out[area_of_bus[case.br_to[idx]]] += p_to[idx]
    return out


def build_area_config(case: NetworkCase, z_eq: SystemPoint, area_of=None,
                      gain: float = 1.0) -> AreaConfig:
    """Derive bias, participation and tie-line bookkeeping for a partition.

    ``area_of`` maps original bus ids to area labels; by default the whole
    network forms a single area.  Participation factors are p_g^eq shares
    within each area (uniform when an area carries no generation).
    """
    g = case.n_gen
    if area_of is None:
        area_of = {int(b): 0 for b in case.orig_ids}
    missing = [int(b) for b in case.orig_ids if int(b) not in area_of]
    if missing:
        raise CaseFormatError(f"area partition misses buses {missing}")
    area_ids = tuple(sorted(set(area_of[int(b)] for b in case.orig_ids)))
    pos = {aid: i for i, aid in enumerate(area_ids)}
    area_of_bus = np.array([pos[area_of[int(b)]] for b in case.orig_ids], dtype=int)

    gen_area = area_of_bus[:g]
    bias = np.zeros(len(area_ids))
    p_eq_area = np.zeros(len(area_ids))
    np.add.at(bias, gen_area, 1.0 / case.r_droop + case.d_damp)
    np.add.at(p_eq_area, gen_area, z_eq.p_g)
    for i, aid in enumerate(area_ids):
        if not np.any(gen_area == i):
            raise CaseFormatError(f"area {aid} has no generator")

    participation = np.zeros(g)
    for i in range(len(area_ids)):
        members = gen_area == i
        total = p_eq_area[i]
        if abs(total) > 1e-12:
            participation[members] = z_eq.p_g[members] / total
        else:
            participation[members] = 1.0 / members.sum()

    tie = np.array(
        [k for k in range(len(case.branches))
         if area_of_bus[case.br_from[k]] != area_of_bus[case.br_to[k]]],
        dtype=int,
    )
    exports_eq = _net_exports(case, area_of_bus, len(area_ids), tie,
                              z_eq.v, z_eq.theta)
    return AreaConfig(
        case=case, area_of_bus=area_of_bus, area_ids=area_ids, bias=bias,
        gain=gain, participation=participation, p_eq_area=p_eq_area,
        tie_from=tie, net_export_eq=exports_eq,
    )


def ace(cfg: AreaConfig, a, x, z_eq: SystemPoint):
    """Area control error: tie-line deviations plus biased frequency error."""
    case = cfg.case
    _, _, v, theta = split_a(case, a)
    _, omega, _, _ = split_x(case, x)
    exports = _net_exports(case, cfg.area_of_bus, cfg.n_areas, cfg.tie_from,
                           v, theta)
    out = exports - cfg.net_export_eq
    freq_dev_hz = (omega - case.omega_s) / TWO_PI
    gen_area = cfg.area_of_bus[: case.n_gen]
    for i in range(cfg.n_areas):
        members = gen_area == i
        out[i] += cfg.bias[i] * float(np.mean(freq_dev_hz[members]))
    return out


def agc_step(cfg: AreaConfig, y, ace_values, p_g_eq):
    """Integrator derivative and governor references for the current state."""
    p_area = np.zeros(cfg.n_areas)
    np.add.at(p_area, cfg.area_of_bus[: cfg.case.n_gen], p_g_eq)
    ydot = cfg.gain * (-y - ace_values + p_area)
    r = cfg.participation * y[cfg.area_of_bus[: cfg.case.n_gen]]
    return ydot, r
