"""Real parts of S(β, γ) against the interval bounds over a β grid.

    python3 scripts/spectrum_sweep.py --out sweep.csv
"""
import argparse
import csv

from lipschitz_rnn.cli import SWEEP_COLUMNS, spectrum_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--gamma", type=float, default=0.001)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="spectrum_sweep.csv")
    args = ap.parse_args()
    betas = [0.5 + 0.025 * k for k in range(21)]
    rows = spectrum_sweep(args.N, args.trials, betas, args.gamma, args.seed)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    for b in (betas[0], betas[10], betas[-1]):
        sel = [r for r in rows if r["beta"] == b]
        print(f"beta={b:.3f}  max Re {max(r['max_re'] for r in sel):+.4f}  "
              f"min Re {min(r['min_re'] for r in sel):+.4f}")


if __name__ == "__main__":
    main()
