"""plotkit command line: regenerate figures from gridlqr CSV outputs.

    plotkit traj CSV OUTDIR       trajectory figure set
    plotkit coupling CSV OUTDIR   coupling-sweep curve
"""

from __future__ import annotations

import argparse
import sys

from .figures import SchemaError, plot_coupling, plot_trajectories


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plotkit", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    traj = subs.add_parser("traj", help="plot a trajectory CSV")
    traj.add_argument("csv")
    traj.add_argument("outdir")
    traj.add_argument("--base-hz", type=float, default=60.0,
                      help="nominal frequency added to the deviation columns")

    coup = subs.add_parser("coupling", help="plot a coupling-sweep CSV")
    coup.add_argument("csv")
    coup.add_argument("outdir")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "traj":
            written = plot_trajectories(args.csv, args.outdir, args.base_hz)
        else:
            written = [plot_coupling(args.csv, args.outdir)]
    except FileNotFoundError as exc:
        print(f"plotkit: {exc}", file=sys.stderr)
        return 1
    except SchemaError as exc:
        print(f"plotkit: schema mismatch: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
