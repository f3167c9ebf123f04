"""Figure builders for gridlqr CSV outputs.

Trajectory CSVs follow the schema ``t, delta_*, freq_hz_dev_*, emf_*,
mech_*, r_*, f_*, v_*, theta_*[, ace_*]``; one figure is produced per
quantity group with one line per generator/bus and a horizontal reference
at the equilibrium value.  Styling is fixed and SVG metadata is stripped
so re-plotting the same CSV is byte-identical.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

NOMINAL_HZ = 60.0

# group key -> (column prefix, y label, title)
TRAJECTORY_GROUPS = {
    "delta": ("delta_", "rotor angle (rad)", "Generator internal angles"),
    "frequency": ("freq_hz_dev_", "frequency (Hz)", "Generator frequencies"),
    "emf": ("emf_", "internal EMF (pu)", "Generator EMF"),
    "mech": ("mech_", "mechanical power (pu)", "Mechanical power"),
    "governor": ("r_", "reference power (pu)", "Governor signals"),
    "exciter": ("f_", "field voltage (pu)", "Exciter voltage"),
    "voltage": ("v_", "voltage magnitude (pu)", "Nodal voltages"),
    "theta": ("theta_", "voltage angle (rad)", "Nodal voltage angles"),
    "ace": ("ace_", "area control error (pu)", "Area control error"),
}


class SchemaError(Exception):
    """The CSV does not follow the expected column schema."""


def _style():
    plt.rcParams.update({
        "svg.hashsalt": "plotkit",
        "figure.figsize": (6.0, 3.6),
        "figure.dpi": 100,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "lines.linewidth": 1.2,
        "font.size": 9,
    })


def _read_csv(path):
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or not rows[0]:
        raise SchemaError(f"{path}: empty CSV")
    header = rows[0]
    body = rows[1:]
    if not body:
        raise SchemaError(f"{path}: no data rows")
    try:
        data = np.array([[float(tok) for tok in row] for row in body])
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric cell ({exc})") from exc
    if data.shape[1] != len(header):
        raise SchemaError(f"{path}: ragged rows")
    return header, data


def _group_columns(header, prefix):
    """Columns matching prefix<index>, ordered by index."""
    found = []
    pattern = re.compile(re.escape(prefix) + r"(\d+)$")
    for pos, name in enumerate(header):
        match = pattern.fullmatch(name)
        if match:
            found.append((int(match.group(1)), pos))
    found.sort()
    if found and [i for i, _ in found] != list(range(1, len(found) + 1)):
        raise SchemaError(f"non-contiguous {prefix}* columns")
    return [pos for _, pos in found]


def load_trajectory(path):
    """Validate the schema and split columns into quantity groups."""
    header, data = _read_csv(path)
    if header[0] != "t":
        raise SchemaError(f"{path}: first column must be t")
    groups = {}
    for key, (prefix, _, _) in TRAJECTORY_GROUPS.items():
        cols = _group_columns(header, prefix)
        if cols:
            groups[key] = data[:, cols]
    required = {"delta", "frequency", "emf", "mech", "governor", "exciter",
                "voltage", "theta"}
    missing = required - set(groups)
    if missing:
        raise SchemaError(f"{path}: missing column groups {sorted(missing)}")
    n_gen = groups["delta"].shape[1]
    for key in ("frequency", "emf", "mech", "governor", "exciter"):
        if groups[key].shape[1] != n_gen:
            raise SchemaError(f"{path}: {key} width differs from delta width")
    if groups["voltage"].shape[1] != groups["theta"].shape[1]:
        raise SchemaError(f"{path}: voltage/theta widths differ")
    return data[:, 0], groups


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_group(t, series, ylabel, title, reference=None):
    fig, ax = plt.subplots()
    for j in range(series.shape[1]):
        (line,) = ax.plot(t, series[:, j], label=f"{j + 1}")
        ref = series[-1, j] if reference is None else reference
        ax.axhline(ref, color=line.get_color(), linestyle="--",
                   linewidth=0.6, alpha=0.4)
    ax.set_xlabel("time (s)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if series.shape[1] <= 12:
        ax.legend(loc="best", fontsize=7, ncol=2)
    fig.tight_layout()
    return fig


def plot_trajectories(csv_path, out_dir, base_hz=NOMINAL_HZ):
    """One SVG per quantity group; returns the list of written paths."""
    _style()
    t, groups = load_trajectory(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for key, (_, ylabel, title) in TRAJECTORY_GROUPS.items():
        if key not in groups:
            if key == "ace":
                print("plotkit: no ace_* columns, skipping the ACE figure")
            continue
        series = groups[key]
        reference = None
        if key == "frequency":
            series = base_hz + series
            reference = base_hz
        fig = _plot_group(t, series, ylabel, title, reference)
        path = out / f"{key}.svg"
        _save(fig, path)
        written.append(path)
    return written


COUPLING_COLUMNS = ("alpha", "control_cost_alqr", "control_cost_baseline")


def plot_coupling(csv_path, out_dir):
    """Two-series control-cost curve over the coupling coefficient."""
    _style()
    header, data = _read_csv(csv_path)
    try:
        cols = [header.index(name) for name in COUPLING_COLUMNS]
    except ValueError as exc:
        raise SchemaError(f"{csv_path}: missing coupling column ({exc})") from exc
    alpha = data[:, cols[0]]
    fig, ax = plt.subplots()
    ax.plot(alpha, data[:, cols[1]], marker="o", label="coupled dispatch")
    ax.plot(alpha, data[:, cols[2]], marker="s", label="decoupled baseline")
    ax.set_xlabel("coupling coefficient")
    ax.set_ylabel("control cost ($)")
    ax.set_title("Control cost versus coupling")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "coupling.svg"
    _save(fig, path)
    return path
