"""Tabulate how the naive-to-proliferated transition rate shapes the outcome.

Sweeps lambda_n over a log grid for both proliferation modes and prints the final
stocks and the age at which the TREC-positive fraction falls below one half.
"""
import argparse

import numpy as np

from tcell_sd.analysis import SweepSpec, sweep
from tcell_sd.model import get_preset
from tcell_sd.output import write_sweep

METRICS = ("final_N", "final_Np", "peak_total_naive", "half_trec_age")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=9)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--csv", help="also write the sweep table here")
    args = ap.parse_args()
    grid = tuple(float(f"{v:.6g}") for v in np.geomspace(0.003, 2.1, args.points))
    spec = SweepSpec(get_preset("ln0.22_cOFF_mn0"),
                     (("c_mode", ("off", "density_dependent")), ("lambda_n", grid)), METRICS)
    result = sweep(spec, workers=args.workers)
    print(f"{'c_mode':>18s} {'lambda_n':>9s} " + " ".join(f"{m:>16s}" for m in METRICS))
    for row in result.rows:
        cells = ["failed" if row.error else ("-" if v is None else f"{v:.6g}") for v in row.values]
        print(f"{row.coords[0]:>18s} {row.coords[1]:9.4g} " + " ".join(f"{c:>16s}" for c in cells))
    if args.csv:
        write_sweep(args.csv, result)


if __name__ == "__main__":
    main()
