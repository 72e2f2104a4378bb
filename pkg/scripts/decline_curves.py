"""Write N(t), Np(t), M(t) and TREC fraction for every builtin preset.

One trajectory CSV per preset lands in the output directory, plus a combined
gnuplot-style block file (`N.dat`) with one block per preset for quick overlays.

    python3 scripts/decline_curves.py --out curves
"""
import argparse
from pathlib import Path

from tcell_sd.analysis import run_scenario
from tcell_sd.model import builtin_scenarios
from tcell_sd.output import write_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="curves")
    ap.add_argument("--t-end", type=float, default=100.0)
    args = ap.parse_args()
    out = Path(args.out)
    blocks = []
    for s in builtin_scenarios():
        s = s.with_(integration=s.integration.with_(t_end=args.t_end))
        result = run_scenario(s)
        write_trajectory(out / f"{s.name}_trajectory.csv", result)
        traj = result.trajectory
        lines = [f"# {s.name}"] + [f"{t!r} {n!r}" for t, n in zip(traj.times, traj.column("N"))]
        blocks.append("\n".join(lines))
        peak = max(traj.column("N"))
        print(f"{s.name:24s} peak N {peak:10.4g}  N({args.t_end:g}) {traj.final['N']:10.4g}")
    (out / "N.dat").write_text("\n\n\n".join(blocks) + "\n")


if __name__ == "__main__":
    main()
