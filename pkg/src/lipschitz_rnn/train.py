"""Training loop, task assembly and run artifacts (metrics CSV, checkpoint, manifest)."""
from __future__ import annotations

import contextlib
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import __version__
from .autodiff import batch_gradients
from .cell import DivergenceError, LipschitzCell, init_cell, save_checkpoint
from .config import ExperimentConfig, content_hash
from .data import (
    LabeledSequenceSet,
    PermutationSpec,
    adding_task,
    iterate_batches,
    load_mnist,
    load_mnist_subset,
    make_rng,
    mnist_sequences,
    pendulum_trajectories,
)
from .optim import OptimState, clip_gradients, lr_schedule, make_optimizer
from .optim import step as optim_step
from .robustness import predict

log = logging.getLogger(__name__)

__all__ = ["TaskData", "load_task", "build_cell", "evaluate", "train", "TrainResult",
           "METRICS_COLUMNS", "write_run", "deterministic_threads", "resume"]

METRICS_COLUMNS = ("epoch", "lr", "train_loss", "test_loss", "test_accuracy")
METRICS_SCHEMA_VERSION = 1

# stream ids for the counter-based generator
_STREAM_INIT, _STREAM_SHUFFLE, _STREAM_TRAIN_DATA, _STREAM_TEST_DATA = 1, 2, 3, 4


@dataclass
class TaskData:
    train: LabeledSequenceSet
    test: LabeledSequenceSet
    loss: str  # "ce" or "mse"
    d: int
    source: str = ""

    @property
    def p(self) -> int:
        return self.train.p


def _cap(x, y, n):
    return (x, y) if not n else (x[:n], y[:n])


def load_task(cfg: ExperimentConfig) -> TaskData:
    if cfg.task.startswith("mnist"):
        if cfg.mnist_source == "subset":
            splits = load_mnist_subset(seed=cfg.seed)
            source = "mnist-5k-subset"
        else:
            splits = load_mnist(cfg.data_dir)
            source = "mnist-idx"
        mode = "row8" if cfg.task == "mnist-row8" else "pixel"
        perm = PermutationSpec.from_seed(784, cfg.permutation_seed) if cfg.task == "mnist-permuted" else None
        xtr, ytr = _cap(*splits["train"], cfg.n_train)
        xte, yte = _cap(*splits["test"], cfg.n_test)
        return TaskData(mnist_sequences(xtr, ytr, mode, perm, "train"),
                        mnist_sequences(xte, yte, mode, perm, "test"), "ce", 10, source)
    if cfg.task == "pendulum":
        tr = pendulum_trajectories(cfg.n_train, cfg.task_dt, cfg.seq_len, seed=cfg.seed * 1000 + _STREAM_TRAIN_DATA)
        te = pendulum_trajectories(cfg.n_test, cfg.task_dt, cfg.seq_len, seed=cfg.seed * 1000 + _STREAM_TEST_DATA,
                                   split="test")
        return TaskData(tr, te, "mse", 2, "pendulum")
    if cfg.task == "adding":
        tr = adding_task(cfg.n_train, cfg.seq_len, seed=cfg.seed * 1000 + _STREAM_TRAIN_DATA)
        te = adding_task(cfg.n_test, cfg.seq_len, seed=cfg.seed * 1000 + _STREAM_TEST_DATA, split="test")
        return TaskData(tr, te, "mse", 1, "adding")
    raise ValueError(f"unknown task {cfg.task}")


def build_cell(cfg: ExperimentConfig, p: int, d: int) -> LipschitzCell:
    return init_cell(
        cfg.N, p, d,
        beta=cfg.beta, beta_w=cfg.beta_w, gamma_a=cfg.gamma_a, gamma_w=cfg.gamma_w,
        init_std=cfg.init_std, alpha=cfg.alpha, dt=cfg.dt, scheme=cfg.scheme,
        variant=cfg.variant, rng=make_rng(cfg.seed, _STREAM_INIT),
    )


def evaluate(cell: LipschitzCell, data: LabeledSequenceSet, loss: str) -> tuple[float, float]:
    """(loss, accuracy); accuracy is NaN for regression tasks."""
    Y = predict(cell, data.sequences)
    if loss == "ce":
        from .autodiff import cross_entropy_batch
        value, _ = cross_entropy_batch(Y, data.labels)
        return value, float(np.mean(np.argmax(Y, axis=1) == data.labels))
    r = Y - data.labels.reshape(Y.shape)
    return float(np.mean(r * r)), float("nan")


@contextlib.contextmanager
def deterministic_threads(enabled: bool = True):
    """Pin BLAS to one thread so reductions happen in a fixed order."""
    if not enabled:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=1):
        yield


@dataclass
class TrainResult:
    cell: LipschitzCell
    optimizer: OptimState
    history: list[dict] = field(default_factory=list)
    task: TaskData | None = None

    @property
    def final(self) -> dict:
        """Last metrics row; for a zero-epoch run, the untrained model's test metrics."""
        if self.history:
            return self.history[-1]
        test_loss, test_acc = evaluate(self.cell, self.task.test, self.task.loss)
        return {"epoch": 0, "lr": float("nan"), "train_loss": float("nan"),
                "test_loss": test_loss, "test_accuracy": test_acc}


def train(cfg: ExperimentConfig, task: TaskData | None = None,
          callbacks: Iterable[Callable[[int, LipschitzCell], None]] = (),
          cell: LipschitzCell | None = None, optimizer: OptimState | None = None,
          start_epoch: int = 0, history: list[dict] | None = None) -> TrainResult:
    """Train from scratch (or resume from ``cell``/``optimizer`` at
    ``start_epoch``) according to ``cfg``.

    Callbacks receive ``(step, cell)`` once before training (step 0) and after
    every optimizer step.  A non-finite loss raises
    :class:`~lipschitz_rnn.cell.DivergenceError` carrying the epoch index.
    Each epoch's shuffle is keyed by (seed, epoch), so a resumed run replays
    the uninterrupted one exactly.
    """
    task = load_task(cfg) if task is None else task
    cell = build_cell(cfg, task.p, task.d) if cell is None else cell
    opt = make_optimizer(cfg.optimizer, momentum=cfg.momentum) if optimizer is None else optimizer
    callbacks = list(callbacks)
    history = [] if history is None else list(history)
    step = opt.step
    with deterministic_threads(cfg.deterministic):
        for cb in callbacks:
            cb(step, cell)
        for epoch in range(start_epoch, cfg.epochs):
            lr = lr_schedule(epoch, cfg.lr, cfg.decay_epochs, cfg.decay_factor)
            total, count = 0.0, 0
            shuffle = make_rng(cfg.seed, _STREAM_SHUFFLE, epoch)
            for X, y in iterate_batches(task.train, cfg.batch_size, shuffle):
                try:
                    loss, grads = batch_gradients(cell, X, y, task.loss)
                except DivergenceError as exc:
                    raise DivergenceError(f"epoch {epoch}: {exc}", epoch) from exc
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite training loss in epoch {epoch}", epoch)
                g = grads.as_dict()
                with np.errstate(over="ignore"):
                    gnorm = grads.global_norm()
                if not np.isfinite(gnorm):
                    raise DivergenceError(f"non-finite gradient in epoch {epoch}", epoch)
                if cfg.clip is not None:
                    g = clip_gradients(g, cfg.clip)
                with np.errstate(over="ignore", invalid="ignore"):
                    optim_step(cell.params(), g, opt, lr)
                if not all(np.all(np.isfinite(v)) for v in cell.params().values()):
                    raise DivergenceError(f"parameters became non-finite in epoch {epoch}", epoch)
                step += 1
                total += loss * len(X)
                count += len(X)
                for cb in callbacks:
                    cb(step, cell)
            test_loss, test_acc = evaluate(cell, task.test, task.loss)
            row = {"epoch": epoch + 1, "lr": lr, "train_loss": total / max(count, 1),
                   "test_loss": test_loss, "test_accuracy": test_acc}
            history.append(row)
            log.info("epoch %d  lr %.3g  train %.5f  test %.5f  acc %.4f", epoch + 1, lr,
                     row["train_loss"], test_loss, test_acc)
    return TrainResult(cell, opt, history, task)


def resume(path, cfg: ExperimentConfig | None = None, **kw) -> TrainResult:
    """Continue a run from its ``checkpoint.json`` up to ``cfg.epochs``
    (defaults to the config stored in the checkpoint)."""
    from .cell import load_checkpoint
    from .config import parse_config

    cell, extra = load_checkpoint(path)
    cfg = parse_config(extra["config"]) if cfg is None else cfg
    opt = OptimState.from_dict(extra["optimizer"])
    return train(cfg, cell=cell, optimizer=opt, start_epoch=extra["epochs_done"],
                 history=extra.get("history", []), **kw)


def write_metrics(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for row in history:
            w.writerow([row["epoch"]] + [repr(float(row[k])) for k in METRICS_COLUMNS[1:]])


def manifest(cfg: ExperimentConfig, source: str = "") -> dict:
    text = cfg.to_ini()
    return {
        "tool": "lipschitz-rnn",
        "version": __version__,
        "config": text,
        "config_hash": content_hash(text),
        "seed": cfg.seed,
        "deterministic": cfg.deterministic,
        "data_source": source,
        "metrics_schema": METRICS_SCHEMA_VERSION,
    }


def write_run(out_dir, cfg: ExperimentConfig, result: TrainResult) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(out / "metrics.csv", result.history)
    save_checkpoint(out / "checkpoint.json", result.cell, optimizer=result.optimizer.to_dict(),
                    config=cfg.to_ini(), epochs_done=len(result.history), history=result.history)
    (out / "manifest.json").write_text(json.dumps(manifest(cfg, result.task.source if result.task else ""),
                                                  indent=2))
    return out
