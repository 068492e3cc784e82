"""Experiment configuration: flat ``key = value`` INI sections and named presets.

Tuning defaults for the MNIST presets follow the published tuning table
(N, lr, decay, β, γ_a, γ_w, step size ε, init σ).
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from typing import Any

__all__ = ["ConfigError", "ExperimentConfig", "PRESETS", "load_config", "parse_config",
           "content_hash", "TASKS"]

TASKS = ("mnist-pixel", "mnist-row8", "mnist-permuted", "pendulum", "adding")


class ConfigError(ValueError):
    pass


def _meta(section: str, doc: str = "") -> dict:
    return {"section": section, "doc": doc}


@dataclass
class ExperimentConfig:
    # [task]
    task: str = field(default="adding", metadata=_meta("task"))
    # [model]
    N: int = field(default=32, metadata=_meta("model", "hidden units"))
    beta: float = field(default=0.75, metadata=_meta("model"))
    beta_w: float | None = field(default=None, metadata=_meta("model", "defaults to beta"))
    gamma_a: float = field(default=0.001, metadata=_meta("model"))
    gamma_w: float = field(default=0.001, metadata=_meta("model"))
    alpha: float = field(default=1.0, metadata=_meta("model"))
    dt: float = field(default=0.03, metadata=_meta("model", "integrator step"))
    scheme: str = field(default="euler", metadata=_meta("model"))
    variant: str = field(default="lipschitz", metadata=_meta("model"))
    init_std: float | None = field(default=None, metadata=_meta("model", "defaults to 0.1/N"))
    # [optim]
    optimizer: str = field(default="adam", metadata=_meta("optim"))
    lr: float = field(default=0.003, metadata=_meta("optim"))
    decay_epochs: tuple[int, ...] = field(default=(), metadata=_meta("optim"))
    decay_factor: float = field(default=0.1, metadata=_meta("optim"))
    momentum: float = field(default=0.9, metadata=_meta("optim"))
    clip: float | None = field(default=None, metadata=_meta("optim", "global-norm clip, none if empty"))
    # [run]
    epochs: int = field(default=2, metadata=_meta("run"))
    batch_size: int = field(default=64, metadata=_meta("run"))
    seed: int = field(default=0, metadata=_meta("run"))
    deterministic: bool = field(default=True, metadata=_meta("run"))
    output_dir: str = field(default="runs/default", metadata=_meta("run"))
    # [data]
    data_dir: str | None = field(default=None, metadata=_meta("data", "MNIST IDX directory"))
    mnist_source: str = field(default="idx", metadata=_meta("data", "idx | subset"))
    permutation_seed: int = field(default=92916, metadata=_meta("data"))
    n_train: int = field(default=2000, metadata=_meta("data", "synthetic tasks / cap for MNIST (0 = all)"))
    n_test: int = field(default=500, metadata=_meta("data"))
    seq_len: int = field(default=50, metadata=_meta("data", "adding / pendulum length"))
    task_dt: float = field(default=0.1, metadata=_meta("data", "pendulum sampling step"))

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if self.N < 1:
            raise ConfigError("N must be positive")
        for name in ("beta", "beta_w"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.gamma_a < 0 or self.gamma_w < 0:
            raise ConfigError("gamma_a and gamma_w must be non-negative")
        if not 0.0 <= self.alpha <= 2.0:
            raise ConfigError("alpha must lie in [0, 2]")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.scheme not in ("euler", "rk2"):
            raise ConfigError("scheme must be euler or rk2")
        if self.variant not in ("lipschitz", "neuralode", "antisymmetric"):
            raise ConfigError("variant must be lipschitz, neuralode or antisymmetric")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError("optimizer must be adam or sgd")
        if self.lr <= 0 or not 0 < self.decay_factor <= 1:
            raise ConfigError("need lr > 0 and decay_factor in (0, 1]")
        if self.clip is not None and self.clip <= 0:
            raise ConfigError("clip must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("need epochs >= 0 and batch_size >= 1")
        if self.mnist_source not in ("idx", "subset"):
            raise ConfigError("mnist_source must be idx or subset")
        if self.seq_len < 2 or self.n_train < 0 or self.n_test < 1:
            raise ConfigError("need seq_len >= 2, n_train >= 0, n_test >= 1")

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    # -- serialization -----------------------------------------------------
    def to_ini(self) -> str:
        sections: dict[str, list[str]] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                text = ""
            elif isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, tuple):
                text = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            sections.setdefault(f.metadata["section"], []).append(f"{f.name} = {text}")
        return "\n".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in sections.items())

    def echo(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(name: str, text: str) -> Any:
    f = _FIELDS[name]
    text = text.strip()
    optional = "None" in str(f.type)
    if text == "" and optional:
        return None
    kind = str(f.type)
    try:
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("tuple"):
            return tuple(int(t) for t in text.split(",") if t.strip())
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc
    return text


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse INI text.  Keys must sit in their own section; unknown keys and
    sections are rejected before anything is computed."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {} if base is None else base.echo()
    for section in cp.sections():
        for key, raw in cp.items(section):
            if key not in _FIELDS:
                raise ConfigError(f"unknown key {section}.{key}")
            want = _FIELDS[key].metadata["section"]
            if section != want:
                raise ConfigError(f"key {key} belongs in [{want}], found in [{section}]")
            values[key] = _coerce(key, raw)
    return ExperimentConfig(**values)


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    values = cfg.echo()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key}")
        values[key] = _coerce(key, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def content_hash(text: str) -> str:
    """Git blob hash of ``text`` (sha1 over ``"blob <len>\\0" + bytes``)."""
    data = text.encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


PRESETS: dict[str, ExperimentConfig] = {
    # tuning-table rows (Adam, 100 epochs, decay x0.1 at epoch 90)
    "mnist64": ExperimentConfig(task="mnist-pixel", N=64, lr=0.003, decay_epochs=(90,), decay_factor=0.1,
                                beta=0.75, gamma_a=0.001, gamma_w=0.001, dt=0.03, init_std=0.1 / 64,
                                epochs=100, batch_size=128, n_train=0, n_test=10000),
    "mnist128": ExperimentConfig(task="mnist-pixel", N=128, lr=0.003, decay_epochs=(90,), decay_factor=0.1,
                                 beta=0.75, gamma_a=0.001, gamma_w=0.001, dt=0.03, init_std=0.1 / 128,
                                 epochs=100, batch_size=128, n_train=0, n_test=10000),
    "permuted64": ExperimentConfig(task="mnist-permuted", N=64, lr=0.0035, decay_epochs=(90,), decay_factor=0.1,
                                   beta=0.75, gamma_a=0.001, gamma_w=0.001, dt=0.03, init_std=0.1 / 128,
                                   epochs=100, batch_size=128, n_train=0, n_test=10000),
    "permuted128": ExperimentConfig(task="mnist-permuted", N=128, lr=0.0035, decay_epochs=(90,), decay_factor=0.1,
                                    beta=0.75, gamma_a=0.001, gamma_w=0.001, dt=0.03, init_std=0.1 / 128,
                                    epochs=100, batch_size=128, n_train=0, n_test=10000),
    # length-98 rows, SGD with momentum
    "row8": ExperimentConfig(task="mnist-row8", N=64, optimizer="sgd", lr=0.1, momentum=0.9, beta=0.75,
                             gamma_a=0.001, gamma_w=0.001, dt=0.1, init_std=0.1 / 64, clip=1.0,
                             epochs=20, batch_size=64, n_train=0, n_test=10000),
    # N=2 next-state regression; γ_a = 1 with dt = 1 makes the hidden state track the latest input
    "pendulum": ExperimentConfig(task="pendulum", N=2, beta=0.75, gamma_a=1.0, gamma_w=0.01, dt=1.0,
                                 init_std=0.5, lr=0.05, decay_epochs=(40,), epochs=60, batch_size=32,
                                 n_train=1000, n_test=200, seq_len=50, task_dt=0.1),
    "adding": ExperimentConfig(task="adding", N=32, beta=0.75, gamma_a=0.001, gamma_w=0.001, dt=0.1,
                               lr=0.03, epochs=2, batch_size=32, n_train=10000, n_test=2000, seq_len=20),
}
