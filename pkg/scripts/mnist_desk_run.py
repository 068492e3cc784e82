"""Pixel-by-pixel MNIST with the N=64 tuning row, shortened to a few epochs.

Needs the four IDX files under $LIPSCHITZ_RNN_DATA/mnist.  Pass --epochs 100
for the full schedule (decay at epoch 90).

    python3 scripts/mnist_desk_run.py --epochs 5 --out runs/mnist64
"""
import argparse

from lipschitz_rnn.config import PRESETS
from lipschitz_rnn.train import train, write_run


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--preset", default="mnist64", choices=["mnist64", "mnist128", "permuted64", "permuted128"])
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--scheme", default="euler", choices=["euler", "rk2"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/mnist64")
    args = ap.parse_args()
    cfg = PRESETS[args.preset].replace(epochs=args.epochs, scheme=args.scheme, seed=args.seed,
                                       output_dir=args.out)
    result = train(cfg)
    write_run(args.out, cfg, result)
    print(f"test accuracy after {args.epochs} epochs: {result.final['test_accuracy']:.4f}")


if __name__ == "__main__":
    main()
