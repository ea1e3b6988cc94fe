"""Mini-batch training loop: Adam updates, plateau LR halving, early stopping.

The LR schedule watches validation loss; early stopping watches validation
accuracy; the returned model always carries the best-validation-accuracy
weights seen during the run.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import nn
from .errors import ConfigError, DataError, DivergenceError
from .pipeline import SampleSet

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 100
    initial_lr: float = 1e-3
    plateau_patience: int = 10
    lr_factor: float = 0.5
    early_stop_patience: int = 15
    min_delta: float = 1e-3  # relative improvement threshold
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if not 0.0 < self.lr_factor < 1.0:
            raise ConfigError("lr_factor must lie in (0, 1)")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("patience values must be >= 1")
        if self.initial_lr <= 0:
            raise ConfigError("initial_lr must be positive")

    def to_json_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "initial_lr": self.initial_lr,
            "plateau_patience": self.plateau_patience,
            "lr_factor": self.lr_factor,
            "early_stop_patience": self.early_stop_patience,
            "min_delta": self.min_delta,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrainConfig":
        defaults = cls()
        return cls(**{
            key: type(getattr(defaults, key))(data[key])
            for key in defaults.to_json_dict()
            if key in data
        })


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    lr: float
    wall_time: float


TrainHistory = list  # list[EpochRecord]


@dataclass(eq=False)
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    current_lr: float = 0.0


def init_optimizer_state(model: nn.BiLstmModel, lr: float = 0.0) -> OptimizerState:
    params = [arr for _, arr in model.parameters()]
    return OptimizerState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        current_lr=lr,
    )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: OptimizerState,
    lr: float,
) -> OptimizerState:
    """One adaptive-moment update, in place, with bias correction."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise DataError("params/grads/state length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient; aborting epoch")
    state.step += 1
    state.current_lr = lr
    t = state.step
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DataError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    return state


def _improved_loss(value: float, best: float, min_delta: float) -> bool:
    if not np.isfinite(best):
        return True
    return value < best - min_delta * abs(best)


def _improved_acc(value: float, best: float, min_delta: float) -> bool:
    if not np.isfinite(best):
        return True
    return value > best + min_delta * abs(best)


def lr_on_plateau(history: Sequence[EpochRecord], config: TrainConfig) -> float:
    """LR for the next epoch: halved whenever validation loss has sat on a
    plateau for ``plateau_patience`` epochs since the last best (or halving)."""
    lr = config.initial_lr
    best = np.inf
    stale = 0
    for rec in history:
        if _improved_loss(rec.val_loss, best, config.min_delta):
            best = rec.val_loss
            stale = 0
        else:
            stale += 1
            if stale >= config.plateau_patience:
                lr *= config.lr_factor
                stale = 0
    return lr


def early_stop(history: Sequence[EpochRecord], config: TrainConfig) -> bool:
    """True when validation accuracy stopped improving ``early_stop_patience``
    epochs ago."""
    best = -np.inf
    stale = 0
    for rec in history:
        if _improved_acc(rec.val_accuracy, best, config.min_delta):
            best = rec.val_accuracy
            stale = 0
        else:
            stale += 1
    return stale >= config.early_stop_patience


def evaluate(
    model: nn.BiLstmModel,
    x: np.ndarray,
    y: np.ndarray,
    batch_size: int = 2048,
) -> tuple[float, float]:
    """(loss, accuracy) over a full set, infer mode."""
    if len(x) == 0:
        raise DataError("cannot evaluate an empty set")
    total_ce = 0.0
    correct = 0
    for start in range(0, len(x), batch_size):
        xb = x[start:start + batch_size]
        yb = y[start:start + batch_size]
        probs = nn.forward(model, xb)
        p_true = np.clip(probs[np.arange(len(yb)), yb], nn.PROB_CLAMP, None)
        total_ce += float(-np.log(p_true).sum())
        correct += int(np.sum(np.argmax(probs, axis=1) == yb))
    loss_value = total_ce / len(x) + nn.penalty(model)
    return loss_value, correct / len(x)


def train(
    model_cfg: nn.ModelConfig,
    train_cfg: TrainConfig,
    datasets: dict[str, SampleSet],
) -> tuple[nn.BiLstmModel, list[EpochRecord]]:
    """Train on datasets['train'], monitor datasets['val'].

    Deterministic given the seed (single-threaded). Returns the model with the
    best-validation-accuracy weights and the per-epoch history.
    """
    train_set = datasets["train"]
    val_set = datasets["val"]
    if len(train_set) == 0:
        raise DataError("empty training set")
    if len(val_set) == 0:
        raise DataError("empty validation set")

    x_train = np.asarray(train_set.x, dtype=np.float64)
    y_train = np.asarray(train_set.y, dtype=np.int64)
    x_val = np.asarray(val_set.x, dtype=np.float64)
    y_val = np.asarray(val_set.y, dtype=np.int64)
    if x_train.shape[1:] != (model_cfg.input_channels, model_cfg.window_len):
        raise DataError(
            f"training data {x_train.shape[1:]} does not match model "
            f"({model_cfg.input_channels}, {model_cfg.window_len})"
        )
    if y_train.max() >= model_cfg.n_classes or y_train.min() < 0:
        raise DataError("training label out of range for model n_classes")

    root = np.random.SeedSequence(train_cfg.seed)
    init_ss, shuffle_ss, dropout_ss = root.spawn(3)
    model = nn.init_model(model_cfg, np.random.default_rng(init_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)

    params = [arr for _, arr in model.parameters()]
    state = init_optimizer_state(model, lr=train_cfg.initial_lr)
    history: list[EpochRecord] = []
    lr = train_cfg.initial_lr
    best_acc = -np.inf
    best_snapshot = nn.clone_parameters(model)

    n = len(x_train)
    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.perf_counter()
        perm = shuffle_rng.permutation(n)
        ce_sum = 0.0
        for start in range(0, n, train_cfg.batch_size):
            idx = perm[start:start + train_cfg.batch_size]
            loss_b, grads = nn.backward(
                model, x_train[idx], y_train[idx], mode="train", rng=dropout_rng
            )
            adam_step(params, grads.as_list(model), state, lr)
            ce_sum += loss_b * len(idx)
        train_loss = ce_sum / n

        val_loss, val_acc = evaluate(model, x_val, y_val)
        history.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                val_accuracy=val_acc,
                lr=lr,
                wall_time=time.perf_counter() - t0,
            )
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_snapshot = nn.clone_parameters(model)

        lr = lr_on_plateau(history, train_cfg)
        if early_stop(history, train_cfg):
            break

    nn.restore_parameters(model, best_snapshot)
    return model, history


def write_history(history: Sequence[EpochRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_acc", "lr", "seconds"])
        for rec in history:
            writer.writerow([
                rec.epoch, repr(rec.train_loss), repr(rec.val_loss),
                repr(rec.val_accuracy), repr(rec.lr), f"{rec.wall_time:.3f}",
            ])


def write_run_dir(
    out: str | Path,
    model: nn.BiLstmModel,
    history: Sequence[EpochRecord],
    train_cfg: TrainConfig,
    extra_config: Optional[dict] = None,
) -> None:
    """history.csv + best.blsm + config.json in one run directory."""
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    write_history(history, root / "history.csv")
    nn.save_model(model, root / "best.blsm")
    config = {
        "model": model.config.to_json_dict(),
        "train": train_cfg.to_json_dict(),
    }
    if extra_config:
        config.update(extra_config)
    with open(root / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
        fh.write("\n")
