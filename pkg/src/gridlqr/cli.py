"""Command-line entry point.

Subcommands:
    gridlqr run    --case case9 --alpha 0.6 --tlqr 1000 ...
    gridlqr sweep  --case case9 --alphas 0,0.2,0.4,0.6,0.8 ...

Configuration precedence: explicit flags > scenario file (--scenario,
key-value lines mirroring flag names) > built-in defaults.  Exit codes:
0 success, 1 usage error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

from .agc import parse_area_file
from .errors import GridLqrError
from .simulate import ScenarioConfig, report_table, run_scenario

log = logging.getLogger("gridlqr")

_DEFAULTS = {
    "machines": "auto",
    "alpha": 0.6,
    "tlqr": 1000.0,
    "kmax": 2,
    "controller": None,   # None -> both lqr and agc rows
    "method": "both",
    "step_frac": 0.1,
    "pf": 0.9,
    "tf": 60.0,
    "dt": 0.005,
    "agc_gain": 1.0,
    "areas": None,
    "out": None,
    "dump_matrices": False,
}

_FLOAT_KEYS = {"alpha", "tlqr", "step_frac", "pf", "tf", "dt", "agc_gain"}
_INT_KEYS = {"kmax"}
_BOOL_KEYS = {"dump_matrices"}


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; solver failures are reported with exit 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(sub):
    sub.add_argument("--case", required=True,
                     help="bundled case name (case9/case14/case39/case57) or path")
    sub.add_argument("--machines", help="machine file path, 'typical' or 'auto'")
    sub.add_argument("--scenario", help="key-value scenario config file")
    sub.add_argument("--alpha", type=float, help="coupling coefficient in [0,1)")
    sub.add_argument("--tlqr", type=float, help="LQR time-scale factor")
    sub.add_argument("--kmax", type=int, help="alternation iterations")
    sub.add_argument("--step-frac", type=float, dest="step_frac",
                     help="load step fraction (default 0.1)")
    sub.add_argument("--pf", type=float, help="step power factor (default 0.9)")
    sub.add_argument("--tf", type=float, help="simulation horizon in seconds")
    sub.add_argument("--dt", type=float, help="integration step in seconds")
    sub.add_argument("--agc-gain", type=float, dest="agc_gain",
                     help="AGC integrator gain (1/s)")
    sub.add_argument("--areas", help="area partition file (bus_id area_id lines)")
    sub.add_argument("--out", help="output directory for reports and CSVs")
    sub.add_argument("--dump-matrices", action="store_true", default=None,
                     dest="dump_matrices", help="write Jacobian/state-space dumps")


def _build_parser():
    parser = _Parser(prog="gridlqr", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="dispatch + closed-loop simulation")
    _add_common(run)
    run.add_argument("--controller", choices=["lqr", "agc", "open"],
                     help="restrict to one controller (default: lqr and agc)")
    run.add_argument("--method", choices=["alqr", "baseline", "both"],
                     help="dispatch method (default both)")

    sweep = subs.add_parser("sweep", help="coupling-coefficient sweep")
    _add_common(sweep)
    sweep.add_argument("--alphas", default="0,0.2,0.4,0.6,0.8",
                       help="comma-separated alpha values in [0,1)")
    return parser


def _read_scenario_file(path):
    values = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GridLqrError(f"scenario file line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip()
        if key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key in _INT_KEYS:
            values[key] = int(val)
        elif key in _BOOL_KEYS:
            values[key] = val.lower() in ("1", "true", "yes", "on")
        else:
            values[key] = val
    return values


def _effective(args):
    """flags > scenario file > defaults."""
    merged = dict(_DEFAULTS)
    if getattr(args, "scenario", None):
        merged.update(_read_scenario_file(args.scenario))
    for key in merged:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def _scenario_config(opts, controllers=None, methods=None):
    area_of = None
    if opts["areas"]:
        area_of = parse_area_file(Path(opts["areas"]).read_text())
    return ScenarioConfig(
        step_fraction=opts["step_frac"],
        power_factor=opts["pf"],
        t_f=opts["tf"],
        dt=opts["dt"],
        controllers=controllers or ("lqr", "agc"),
        methods=methods or ("alqr", "baseline"),
        alpha=opts["alpha"],
        t_lqr=opts["tlqr"],
        k_max=opts["kmax"],
        agc_gain=opts["agc_gain"],
        area_of=area_of,
        out_dir=opts["out"],
        dump_matrices=bool(opts["dump_matrices"]),
    )


def _cmd_run(args):
    opts = _effective(args)
    controller = opts.get("controller")
    controllers = (controller,) if controller else ("lqr", "agc")
    method = opts.get("method") or "both"
    methods = ("alqr", "baseline") if method == "both" else (method,)
    cfg = _scenario_config(opts, controllers, methods)
    reports, solutions, _ = run_scenario(args.case, cfg, opts["machines"])
    for sol in solutions.values():
        log.info("%s iteration log:\n%s", sol.method, sol.iteration_log())
        log.info("%s dispatch wall time: %.3f s", sol.method, sol.wall_time)
    sys.stdout.write(report_table(reports))
    return 0


def sweep_alpha(case_source, alphas, base_cfg: ScenarioConfig,
                machines="auto", out_dir=None):
    """Simulated and estimated control costs of both methods per alpha.

    Returns the rows and writes ``coupling.csv`` when out_dir is given.
    """
    rows = []
    for alpha in alphas:
        if not (0.0 <= alpha < 1.0):
            raise GridLqrError(f"sweep alpha {alpha} outside [0, 1)")
        cfg = ScenarioConfig(
            step_fraction=base_cfg.step_fraction,
            power_factor=base_cfg.power_factor,
            t_f=base_cfg.t_f,
            dt=base_cfg.dt,
            controllers=("lqr",),
            methods=("alqr", "baseline"),
            alpha=alpha,
            t_lqr=base_cfg.t_lqr,
            k_max=base_cfg.k_max,
            agc_gain=base_cfg.agc_gain,
            area_of=base_cfg.area_of,
            out_dir=None,
        )
        reports, _, _ = run_scenario(case_source, cfg, machines)
        by_method = {r.method: r for r in reports}
        rows.append({
            "alpha": alpha,
            "control_cost_alqr": by_method["alqr"].control_cost,
            "control_cost_baseline": by_method["baseline"].control_cost,
            "control_est_cost_alqr": by_method["alqr"].control_est_cost,
            "control_est_cost_baseline": by_method["baseline"].control_est_cost,
        })
        log.info("sweep alpha=%.2f done", alpha)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "coupling.csv").write_text(coupling_csv(rows))
    return rows


def coupling_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["alpha", "control_cost_alqr", "control_cost_baseline",
              "control_est_cost_alqr", "control_est_cost_baseline"]
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{row[k]:.6f}" for k in header])
    return buf.getvalue()


def _cmd_sweep(args):
    opts = _effective(args)
    alphas = [float(tok) for tok in args.alphas.split(",") if tok.strip()]
    cfg = _scenario_config(opts)
    rows = sweep_alpha(args.case, alphas, cfg, opts["machines"], opts["out"])
    sys.stdout.write(coupling_csv(rows))
    return 0


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except FileNotFoundError as exc:
        print(f"gridlqr: error: {exc}", file=sys.stderr)
        return 1
    except GridLqrError as exc:
        print(f"gridlqr: solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
