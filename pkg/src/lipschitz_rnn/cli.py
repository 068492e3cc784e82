"""Command-line entry point: ``lipschitz-rnn <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
4 numerical divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .cell import DivergenceError, load_checkpoint
from .config import PRESETS, ConfigError, ExperimentConfig, apply_overrides, content_hash, parse_config
from .data import DATA_ENV, DataError, LabeledSequenceSet, make_rng
from .linalg import general_eigs, parse_matrix
from .params import SymSkewParam, materialize, spectrum_interval
from .robustness import (accuracy, hessian_metrics, model_objective, perturb, pgd_attack,
                         quadratic_objective)
from .stability import EigTrace, certify_cell, decay_rate
from .train import evaluate, load_task, resume, train, write_run

log = logging.getLogger("lipschitz_rnn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

SWEEP_COLUMNS = ("trial", "beta", "gamma", "max_re", "min_re", "bound_lo", "bound_hi")
ABLATE_COLUMNS = ("param", "value", "variant", "seed", "train_loss", "test_loss", "test_accuracy")
PERTURB_COLUMNS = ("kind", "amount", "accuracy", "stderr", "test_loss")
ATTACK_COLUMNS = ("eps_inf", "step", "iters", "accuracy")

_EPILOG = f"""\
outputs (CSV schema version 1):
  train          metrics.csv: epoch,lr,train_loss,test_loss,test_accuracy
                 plus checkpoint.json and manifest.json
  stability      JSON: certificate report and decay-rate fit
  spectrum-sweep {",".join(SWEEP_COLUMNS)}
  eig-track      eig_trace.csv: step,maxReA,maxReW (plus the train outputs)
  ablate         {",".join(ABLATE_COLUMNS)}
  perturb        {",".join(PERTURB_COLUMNS)}
  attack         {",".join(ATTACK_COLUMNS)}
  hessian        JSON: lambda_max, trace_estimate, trace_stderr, lambda_min, condition

environment:
  {DATA_ENV}   root directory holding mnist/ (IDX files)

exit codes: 0 ok, 2 config error, 3 data/IO error, 4 numerical divergence
"""


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------

def resolve_config(args) -> ExperimentConfig:
    if getattr(args, "manifest", None):
        record = json.loads(Path(args.manifest).read_text())
        text = record["config"]
        if content_hash(text) != record.get("config_hash"):
            raise ConfigError(f"manifest {args.manifest}: config hash mismatch")
        cfg = parse_config(text)
    elif getattr(args, "config", None):
        cfg = parse_config(Path(args.config).read_text())
    elif getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
        cfg = PRESETS[args.preset]
    else:
        cfg = ExperimentConfig()
    return apply_overrides(cfg, getattr(args, "set", None) or [])


def _add_config_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="INI config file")
    src.add_argument("--preset", help=f"named preset: {', '.join(PRESETS)}")
    src.add_argument("--manifest", help="manifest.json of an earlier run (exact replay)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in columns)])


def _emit_json(obj, out) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------------------
# library-level helpers behind the commands
# ---------------------------------------------------------------------------

def spectrum_sweep(N: int, trials: int, betas, gamma: float, seed: int = 0) -> list[dict]:
    """For each random M (shared across the β grid) record the extreme real
    parts of S's spectrum next to the corrected interval."""
    rng = make_rng(seed, 21)
    rows = []
    for trial in range(trials):
        M = rng.standard_normal((N, N)) / np.sqrt(N)
        for beta in betas:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # β < 0.5 is allowed in a sweep
                param = SymSkewParam(M, beta, gamma)
            re = general_eigs(materialize(param)).real
            iv = spectrum_interval(param)
            rows.append({"trial": trial, "beta": float(beta), "gamma": float(gamma),
                         "max_re": float(re.max()), "min_re": float(re.min()),
                         "bound_lo": iv.lo, "bound_hi": iv.hi})
    return rows


def ablate(cfg: ExperimentConfig, param: str, values, seeds, include_neuralode: bool = False) -> list[dict]:
    rows = []
    for seed in seeds:
        runs = [(param, v, cfg.replace(**{param: v, "seed": seed})) for v in values]
        if include_neuralode:
            runs.append(("variant", 0.0, cfg.replace(variant="neuralode", seed=seed)))
        for name, value, c in runs:
            final = train(c).final
            rows.append({"param": name, "value": float(value), "variant": c.variant, "seed": seed,
                         "train_loss": final["train_loss"], "test_loss": final["test_loss"],
                         "test_accuracy": final["test_accuracy"]})
    return rows


def _checkpoint_task(path, args):
    cell, extra = load_checkpoint(path)
    if getattr(args, "config", None):
        cfg = parse_config(Path(args.config).read_text())
    elif "config" in extra:
        cfg = parse_config(extra["config"])
    else:
        raise ConfigError(f"{path} carries no config; pass --config")
    cfg = apply_overrides(cfg, getattr(args, "set", None) or [])
    return cell, cfg, load_task(cfg)


def _test_subset(task, n):
    data = task.test
    return data if not n or n >= len(data) else data.subset(np.arange(n))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    if args.resume:
        _, extra = load_checkpoint(args.resume)
        cfg = apply_overrides(parse_config(extra["config"]), args.set or [])
        result = resume(args.resume, cfg)
    else:
        cfg = resolve_config(args)
        result = train(cfg)
    out = args.out or cfg.output_dir
    write_run(out, cfg, result)
    print(json.dumps({"out": str(out), **{k: result.final[k] for k in ("train_loss", "test_loss",
                                                                       "test_accuracy")}}))
    return EXIT_OK


def cmd_stability(args) -> int:
    cell, _ = load_checkpoint(args.checkpoint)
    report = certify_cell(cell, args.lipschitz)
    x = np.zeros(cell.p) if args.x_const is None else np.asarray(_floats(args.x_const))
    fit = decay_rate(cell, x, trials=args.trials, horizon=args.horizon, seed=args.seed)
    record = json.loads(report.to_json())
    record["decay"] = {"lambda_hat": fit.lambda_hat, "C_hat": fit.C_hat, "diverged": fit.diverged,
                       "rates": fit.rates.tolist(), "constants": fit.constants.tolist()}
    _emit_json(record, args.out)
    return EXIT_OK


def cmd_spectrum_sweep(args) -> int:
    betas = _floats(args.betas)
    if any(not 0.0 <= b <= 1.0 for b in betas):
        raise ConfigError("beta grid must lie in [0, 1]")
    rows = spectrum_sweep(args.N, args.trials, betas, args.gamma, args.seed)
    _write_csv(args.out, SWEEP_COLUMNS, rows)
    return EXIT_OK


def cmd_eig_track(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out or cfg.output_dir)
    trace = EigTrace(stride=args.stride)
    result = train(cfg, callbacks=[trace])
    write_run(out, cfg, result)
    trace.to_csv(out / "eig_trace.csv")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    rows = ablate(cfg, args.param, _floats(args.values), _ints(args.seeds), args.neuralode)
    _write_csv(args.out, ABLATE_COLUMNS, rows)
    return EXIT_OK


def perturbation_curve(cell, data, loss: str, kind: str, amounts, seeds) -> list[dict]:
    """Mean test accuracy (and loss) per noise amount over noise seeds; ``stderr``
    is the standard error of the accuracy across seeds."""
    rows = []
    for amount in amounts:
        accs, losses = [], []
        for seed in seeds:
            noisy = LabeledSequenceSet(perturb(data.sequences, kind, amount, seed), data.labels, "test")
            value, acc = evaluate(cell, noisy, loss)
            accs.append(acc)
            losses.append(value)
        stderr = float(np.std(accs, ddof=1) / np.sqrt(len(accs))) if len(accs) > 1 else float("nan")
        rows.append({"kind": kind, "amount": float(amount), "accuracy": float(np.mean(accs)),
                     "stderr": stderr, "test_loss": float(np.mean(losses))})
    return rows


def cmd_perturb(args) -> int:
    cell, cfg, task = _checkpoint_task(args.checkpoint, args)
    data = _test_subset(task, args.n)
    rows = perturbation_curve(cell, data, task.loss, args.kind, _floats(args.amounts), _ints(args.seeds))
    _write_csv(args.out, PERTURB_COLUMNS, rows)
    return EXIT_OK


def cmd_attack(args) -> int:
    cell, cfg, task = _checkpoint_task(args.checkpoint, args)
    if task.loss != "ce":
        raise ConfigError(f"attack needs a classification task, {cfg.task} is a regression task")
    data = _test_subset(task, args.n)
    rows = []
    for eps in _floats(args.eps):
        X = pgd_attack(cell, data.sequences, data.labels, eps, args.step, args.iters) if eps > 0 \
            else data.sequences
        rows.append({"eps_inf": eps, "step": args.step, "iters": args.iters,
                     "accuracy": accuracy(cell, X, data.labels)})
    _write_csv(args.out, ATTACK_COLUMNS, rows)
    return EXIT_OK


def cmd_hessian(args) -> int:
    if args.quadratic:
        Q = parse_matrix(Path(args.quadratic).read_text())
        obj = quadratic_objective(Q)
    else:
        if not args.checkpoint:
            raise ConfigError("hessian needs a checkpoint or --quadratic")
        cell, cfg, task = _checkpoint_task(args.checkpoint, args)
        data = _test_subset(task, args.n)
        obj = model_objective(cell, data.sequences, data.labels, task.loss)
    metrics = hessian_metrics(obj, probes=args.probes, iters=args.iters, seed=args.seed)
    _emit_json(json.loads(metrics.to_json()), args.out)
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"lipschitz-rnn {__version__}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipschitz-rnn", epilog=_EPILOG,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("train", help="train a model", epilog=_EPILOG, formatter_class=fmt)
    _add_config_args(p)
    p.add_argument("--out", help="output directory (default: run.output_dir)")
    p.add_argument("--resume", metavar="CHECKPOINT",
                   help="continue from a checkpoint.json using its stored config (plus --set)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("stability", help="certificate report and decay-rate fit for a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--lipschitz", type=float, default=1.0)
    p.add_argument("--x-const", help="comma-separated constant input (default zeros)")
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("spectrum-sweep", help="real parts of S against the interval bounds",
                       epilog=f"columns: {','.join(SWEEP_COLUMNS)}", formatter_class=fmt)
    p.add_argument("--N", type=int, default=16)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--betas", default="0.5,0.6,0.7,0.8,0.9,0.95,0.99,1.0")
    p.add_argument("--gamma", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum_sweep)

    p = sub.add_parser("eig-track", help="train while recording max Re λ of A and W",
                       epilog="eig_trace.csv columns: step,maxReA,maxReW", formatter_class=fmt)
    _add_config_args(p)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eig_track)

    p = sub.add_parser("ablate", help="retrain over a grid of one config key",
                       epilog=f"columns: {','.join(ABLATE_COLUMNS)}", formatter_class=fmt)
    _add_config_args(p)
    p.add_argument("--param", default="alpha", help="config key to sweep (alpha, beta, ...)")
    p.add_argument("--values", default="0,0.5,1.0,1.8")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--neuralode", action="store_true", help="also train the neural-ODE variant")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("perturb", help="test accuracy under input noise",
                       epilog=f"columns: {','.join(PERTURB_COLUMNS)}", formatter_class=fmt)
    p.add_argument("checkpoint")
    p.add_argument("--config", help="override the config stored in the checkpoint")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--kind", choices=("white", "saltpepper"), default="white")
    p.add_argument("--amounts", default="0,0.05,0.1,0.2,0.4")
    p.add_argument("--n", type=int, default=0, help="test examples (0 = all)")
    p.add_argument("--seeds", default="0,1,2,3,4", help="noise seeds averaged per amount")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("attack", help="test accuracy under L-inf PGD",
                       epilog=f"columns: {','.join(ATTACK_COLUMNS)}", formatter_class=fmt)
    p.add_argument("checkpoint")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--eps", default="0,0.05,0.1")
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--iters", type=int, default=7)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("hessian", help="Hessian spectrum estimates of the training loss")
    p.add_argument("checkpoint", nargs="?")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--quadratic", help="matrix file Q; estimate the Hessian of ½θᵀQθ instead")
    p.add_argument("--n", type=int, default=256, help="examples in the loss batch")
    p.add_argument("--probes", type=int, default=10)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_hessian)

    p = sub.add_parser("version", help="print the version")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
