"""Mini-batch SGD with momentum over a coarse-to-fine correction dataset.

The loop is fully deterministic given the seed: one generator drives the
train/test split, parameter init, and the per-epoch shuffles, and gradient
reductions fold in fixed shard order (see jnet.backward), so two runs with
the same seed produce bitwise-identical checkpoints regardless of worker
count.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .jnet import JNet, JNetConfig, apply_bn_stats, backward, net_forward, save_net


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    lr_schedule: tuple[tuple[int, float], ...] = ((0, 1e-3), (1000, 5e-4))
    momentum: float = 0.9
    epochs: int = 2000
    seed: int = 0
    test_fraction: float = 0.1
    workers: int = 1
    checkpoint_every: int = 0  # epochs between checkpoint files; 0 = none
    checkpoint_dir: str | Path | None = None
    log_path: str | Path | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if not self.lr_schedule or self.lr_schedule[0][0] != 0:
            raise ConfigError("lr_schedule must start at epoch 0")
        epochs_seen = [e for e, _ in self.lr_schedule]
        if epochs_seen != sorted(set(epochs_seen)):
            raise ConfigError("lr_schedule epochs must be strictly increasing")
        if any(lr <= 0 for _, lr in self.lr_schedule):
            raise ConfigError("learning rates must be positive")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in [0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    final_train_loss: float = math.nan
    test_loss: float | None = None
    wall_time_s: float = 0.0
    aborted: bool = False
    abort_epoch: int | None = None


def lr_at(epoch: int, schedule: tuple[tuple[int, float], ...]) -> float:
    """Piecewise-constant learning rate: the last entry at or before epoch."""
    lr = schedule[0][1]
    for start, value in schedule:
        if epoch >= start:
            lr = value
    return lr


def sgd_momentum_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    lr: float,
    momentum: float,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """v' = momentum v + g;  p' = p - lr v'."""
    if params.keys() != grads.keys() or params.keys() != velocity.keys():
        raise ConfigError("params, grads, and velocity must share the same tensors")
    new_v = {}
    new_p = {}
    for key, p in params.items():
        if grads[key].shape != p.shape or velocity[key].shape != p.shape:
            raise ConfigError(f"shape mismatch on {key}")
        v = momentum * velocity[key] + grads[key]
        new_v[key] = v
        new_p[key] = p - lr * v
    return new_p, new_v


def split_indices(
    n_records: int, test_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train, test) index arrays; test gets floor(n * fraction)."""
    perm = rng.permutation(n_records)
    n_test = min(int(n_records * test_fraction), n_records - 1)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def dataset_loss(net: JNet, x: np.ndarray, y: np.ndarray, chunk: int = 64) -> float:
    """Inference-mode mean per-example summed squared error."""
    if x.shape[0] == 0:
        raise ConfigError("cannot evaluate loss on an empty set")
    total = 0.0
    for start in range(0, x.shape[0], chunk):
        yhat = net_forward(net, x[start : start + chunk])
        diff = yhat - y[start : start + chunk]
        total += float(np.sum(diff * diff))
    return total / x.shape[0]


def train(
    x: np.ndarray,
    y: np.ndarray,
    net_config: JNetConfig,
    cfg: TrainConfig,
    dt_star: float | None = None,
) -> tuple[JNet, TrainReport]:
    """Fit a network to (x, y) record arrays.

    x: (R, in_channels, n, n), y: (R, out_channels, 2n, 2n). Returns the
    trained bundle and a report. A non-finite batch loss aborts the run and
    returns the parameters from the last completed epoch.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 4 or y.ndim != 4 or x.shape[0] != y.shape[0]:
        raise ConfigError(f"bad dataset shapes {x.shape}, {y.shape}")
    if x.shape[0] == 0:
        raise ConfigError("dataset is empty")

    rng = np.random.default_rng(cfg.seed)
    train_idx, test_idx = split_indices(x.shape[0], cfg.test_fraction, rng)
    net = JNet.init(net_config, rng, dt_star=dt_star)
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}

    report = TrainReport()
    log_rows: list[tuple[int, float, float]] = []
    last_good = net.copy()
    started = time.monotonic()

    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg.lr_schedule)
        order = rng.permutation(train_idx)
        batch_losses: list[float] = []
        aborted = False
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads, bn_stats = backward(net, x[batch], y[batch], workers=cfg.workers)
            if not math.isfinite(loss):
                aborted = True
                break
            net.state = apply_bn_stats(net.state, bn_stats)
            net.params, velocity = sgd_momentum_step(
                net.params, grads, velocity, lr, cfg.momentum
            )
            batch_losses.append(loss)
        if aborted:
            report.aborted = True
            report.abort_epoch = epoch
            net = last_good
            break
        epoch_loss = float(np.mean(batch_losses)) if batch_losses else math.nan
        report.epoch_losses.append(epoch_loss)
        log_rows.append((epoch, epoch_loss, lr))
        last_good = net.copy()
        if (
            cfg.checkpoint_every > 0
            and cfg.checkpoint_dir is not None
            and (epoch + 1) % cfg.checkpoint_every == 0
        ):
            path = Path(cfg.checkpoint_dir) / f"ckpt-epoch{epoch + 1:05d}.pwnn"
            save_net(net, path)

    report.wall_time_s = time.monotonic() - started
    if report.epoch_losses:
        report.final_train_loss = report.epoch_losses[-1]
    if len(test_idx) > 0:
        report.test_loss = dataset_loss(net, x[test_idx], y[test_idx])
    if cfg.log_path is not None:
        with open(cfg.log_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", "lr"])
            writer.writerows(log_rows)
    return net, report
