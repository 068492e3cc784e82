"""Train the three variants on length-98 row MNIST and compare clean, noisy
and PGD accuracy plus Hessian metrics of the test loss.

Uses the IDX files under $LIPSCHITZ_RNN_DATA/mnist when present and the
5000-image sample bundled with mlxtend otherwise.

    python3 scripts/row8_robustness.py --seeds 0,1,2,3,4 --out row8.csv
"""
import argparse
import csv

import numpy as np

from lipschitz_rnn.config import PRESETS
from lipschitz_rnn.data import DataError, load_mnist
from lipschitz_rnn.robustness import accuracy, hessian_metrics, model_objective, perturb, pgd_attack
from lipschitz_rnn.train import train

VARIANTS = ("lipschitz", "neuralode", "antisymmetric")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--noise", type=float, default=0.2)
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--hessian-n", type=int, default=256)
    ap.add_argument("--out", default="row8_robustness.csv")
    args = ap.parse_args()
    cfg = PRESETS["row8"]
    try:
        load_mnist(cfg.data_dir)
    except DataError:
        cfg = cfg.replace(mnist_source="subset", n_test=1000)
        print("MNIST IDX files not found; using the bundled 5000-image sample")
    if args.epochs is not None:
        cfg = cfg.replace(epochs=args.epochs)
    rows = []
    for seed in (int(s) for s in args.seeds.split(",")):
        for v in VARIANTS:
            r = train(cfg.replace(variant=v, seed=seed))
            X, y = r.task.test.sequences, r.task.test.labels
            n = min(args.hessian_n, len(X))
            h = hessian_metrics(model_objective(r.cell, X[:n], y[:n]), probes=10, iters=50, seed=seed)
            row = {"variant": v, "seed": seed, "clean": accuracy(r.cell, X, y),
                   "noise": float(np.mean([accuracy(r.cell, perturb(X, "white", args.noise, s), y)
                                           for s in range(3)])),
                   "pgd": accuracy(r.cell, pgd_attack(r.cell, X, y, args.eps, 0.01, 7), y),
                   "lambda_max": h.lambda_max, "trace": h.trace_estimate, "condition": h.condition}
            rows.append(row)
            print(" ".join(f"{k}={val:.4g}" if isinstance(val, float) else f"{k}={val}"
                           for k, val in row.items()), flush=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, list(rows[0]))
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
