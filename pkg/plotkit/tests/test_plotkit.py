import csv
import io
import shutil
import subprocess

import numpy as np
import pytest

from plotkit.cli import main
from plotkit.figures import (SchemaError, load_trajectory, plot_coupling,
                             plot_trajectories)


def make_trajectory_csv(path, n_gen=3, n_bus=9, samples=11, with_ace=True,
                        flat=True, seed=0):
    header = (
        ["t"]
        + [f"delta_{i+1}" for i in range(n_gen)]
        + [f"freq_hz_dev_{i+1}" for i in range(n_gen)]
        + [f"emf_{i+1}" for i in range(n_gen)]
        + [f"mech_{i+1}" for i in range(n_gen)]
        + [f"r_{i+1}" for i in range(n_gen)]
        + [f"f_{i+1}" for i in range(n_gen)]
        + [f"v_{i+1}" for i in range(n_bus)]
        + [f"theta_{i+1}" for i in range(n_bus)]
    )
    if with_ace:
        header += ["ace_1"]
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.9, 1.1, size=len(header) - 1)
    rows = []
    for k in range(samples):
        t = 0.1 * k
        values = base if flat else base + 0.01 * np.sin(t + np.arange(base.size))
        rows.append([f"{t:.3f}"] + [f"{v:.9g}" for v in values])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue())
    return base


def make_coupling_csv(path, alphas=(0.0, 0.4, 0.8)):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["alpha", "control_cost_alqr", "control_cost_baseline",
                     "control_est_cost_alqr", "control_est_cost_baseline"])
    for a in alphas:
        writer.writerow([a, 10 + 5 * a, 30 + 20 * a, 9 + 5 * a, 28 + 20 * a])
    path.write_text(buf.getvalue())


def test_flat_csv_produces_flat_traces(tmp_path):
    csv_path = tmp_path / "traj.csv"
    make_trajectory_csv(csv_path, flat=True)
    t, groups = load_trajectory(csv_path)
    for key, series in groups.items():
        assert np.all(series == series[0:1, :]), key
    written = plot_trajectories(csv_path, tmp_path / "figs")
    names = {p.name for p in written}
    assert {"frequency.svg", "voltage.svg", "ace.svg", "governor.svg",
            "emf.svg", "exciter.svg", "delta.svg", "mech.svg",
            "theta.svg"} == names


def test_missing_ace_columns_skipped_with_note(tmp_path, capsys):
    csv_path = tmp_path / "traj.csv"
    make_trajectory_csv(csv_path, with_ace=False)
    written = plot_trajectories(csv_path, tmp_path / "figs")
    assert not (tmp_path / "figs" / "ace.svg").exists()
    assert "skipping the ACE figure" in capsys.readouterr().out
    assert (tmp_path / "figs" / "frequency.svg").exists()


def test_schema_mismatch_is_rejected(tmp_path):
    csv_path = tmp_path / "traj.csv"
    make_trajectory_csv(csv_path)
    text = csv_path.read_text().replace("v_1", "volt_1")
    csv_path.write_text(text)
    with pytest.raises(SchemaError):
        plot_trajectories(csv_path, tmp_path / "figs")
    assert main(["traj", str(csv_path), str(tmp_path / "figs")]) == 2


def test_empty_csv_writes_nothing(tmp_path):
    csv_path = tmp_path / "empty.csv"
    csv_path.write_text("")
    out = tmp_path / "figs"
    with pytest.raises(SchemaError):
        plot_coupling(csv_path, out)
    assert not out.exists() or not any(out.iterdir())
    header_only = tmp_path / "header.csv"
    header_only.write_text("alpha,control_cost_alqr,control_cost_baseline\n")
    with pytest.raises(SchemaError):
        plot_coupling(header_only, out)


def test_two_point_sweep_plots_two_segments(tmp_path):
    csv_path = tmp_path / "coupling.csv"
    make_coupling_csv(csv_path, alphas=(0.0, 0.6))
    path = plot_coupling(csv_path, tmp_path / "figs")
    assert path.is_file()
    assert path.suffix == ".svg"
    assert b"<svg" in path.read_bytes()[:200]


def test_replotting_is_byte_identical(tmp_path):
    csv_path = tmp_path / "traj.csv"
    make_trajectory_csv(csv_path, flat=False)
    a = plot_trajectories(csv_path, tmp_path / "a")
    b = plot_trajectories(csv_path, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes(), pa.name
    make_coupling_csv(tmp_path / "c.csv")
    ca = plot_coupling(tmp_path / "c.csv", tmp_path / "ca")
    cb = plot_coupling(tmp_path / "c.csv", tmp_path / "cb")
    assert ca.read_bytes() == cb.read_bytes()


def test_cli_traj_and_coupling(tmp_path, capsys):
    csv_path = tmp_path / "traj.csv"
    make_trajectory_csv(csv_path)
    assert main(["traj", str(csv_path), str(tmp_path / "f1")]) == 0
    make_coupling_csv(tmp_path / "c.csv")
    assert main(["coupling", str(tmp_path / "c.csv"), str(tmp_path / "f2")]) == 0
    out = capsys.readouterr().out
    assert "coupling.svg" in out
    assert main(["traj", str(tmp_path / "missing.csv"), str(tmp_path)]) == 1


@pytest.mark.skipif(shutil.which("gridlqr") is None,
                    reason="gridlqr CLI not installed")
def test_regenerates_figures_from_real_outputs(tmp_path):
    """End to end against the dispatch/simulation toolkit's own CSVs."""
    out = tmp_path / "run"
    proc = subprocess.run(
        ["gridlqr", "run", "--case", "case9", "--tf", "1.0",
         "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    lqr_csv = out / "traj_case9_alqr_lqr.csv"
    agc_csv = out / "traj_case9_alqr_agc.csv"
    written = plot_trajectories(agc_csv, tmp_path / "figs_agc")
    assert (tmp_path / "figs_agc" / "ace.svg").exists()
    written = plot_trajectories(lqr_csv, tmp_path / "figs_lqr")
    assert (tmp_path / "figs_lqr" / "frequency.svg").exists()
    assert (tmp_path / "figs_lqr" / "voltage.svg").exists()

    sweep = subprocess.run(
        ["gridlqr", "sweep", "--case", "case9", "--alphas", "0,0.5",
         "--tf", "0.5", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert sweep.returncode == 0, sweep.stderr
    path = plot_coupling(out / "coupling.csv", tmp_path / "figs_sweep")
    assert path.is_file()
