"""Seeded random search over the model hyperparameter grid.

Each axis is drawn uniformly and independently; per-trial training seeds are
derived from (search seed, trial index) so trials are reproducible and
order-independent. Candidates are ranked by validation accuracy, with ties
broken by parameter count and then draw order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import nn, trainer
from .errors import ConfigError, DivergenceError
from .pipeline import SampleSet


@dataclass(frozen=True)
class SearchSpace:
    """Hyperparameter domains; the defaults span 4*4*6*4*4*3 = 4608 configs."""

    n_layers: tuple = (1, 2, 3, 4)
    hidden_units: tuple = (16, 32, 40, 64)
    dropout: tuple = (0.0, 0.2, 0.4, 0.6, 0.7, 0.8)
    kernel_reg: tuple = ("none", "L1", "L2", "L1+L2")
    recurrent_reg: tuple = ("none", "L1", "L2", "L1+L2")
    initial_lr: tuple = (1e-3, 2e-4, 1e-4)

    def __post_init__(self) -> None:
        for name in ("n_layers", "hidden_units", "dropout", "kernel_reg",
                     "recurrent_reg", "initial_lr"):
            if not getattr(self, name):
                raise ConfigError(f"search axis {name} is empty")

    @property
    def cardinality(self) -> int:
        return (len(self.n_layers) * len(self.hidden_units) * len(self.dropout)
                * len(self.kernel_reg) * len(self.recurrent_reg) * len(self.initial_lr))


@dataclass(frozen=True)
class CandidateConfig:
    """One sampled point: the model config plus its initial learning rate."""

    model: nn.ModelConfig
    initial_lr: float


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    candidate: CandidateConfig
    val_accuracy: float
    parameter_count: int
    seed: int
    history: Optional[list] = field(default=None, compare=False)


def sample_config(
    space: SearchSpace,
    rng: np.random.Generator,
    *,
    input_channels: int,
    window_len: int,
    n_classes: int,
) -> CandidateConfig:
    """Uniform independent draw per axis; deterministic given the rng state."""
    def pick(axis: tuple):
        return axis[int(rng.integers(len(axis)))]

    model = nn.ModelConfig(
        input_channels=input_channels,
        window_len=window_len,
        n_layers=int(pick(space.n_layers)),
        hidden_units=int(pick(space.hidden_units)),
        dropout_rate=float(pick(space.dropout)),
        kernel_reg=str(pick(space.kernel_reg)),
        recurrent_reg=str(pick(space.recurrent_reg)),
        n_classes=n_classes,
    )
    return CandidateConfig(model=model, initial_lr=float(pick(space.initial_lr)))


def trial_seed(search_seed: int, trial_index: int) -> int:
    """Stable per-trial training seed derived from the search seed."""
    return int(np.random.SeedSequence([search_seed, trial_index]).generate_state(1)[0])


def best_val_accuracy(history: list) -> float:
    return max(rec.val_accuracy for rec in history)


def run_trial(
    candidate: CandidateConfig,
    datasets: dict[str, SampleSet],
    base_train_cfg: trainer.TrainConfig,
    seed: int,
) -> tuple[float, Optional[list]]:
    """Train one candidate; divergence scores 0 instead of failing the search."""
    cfg = replace(base_train_cfg, initial_lr=candidate.initial_lr, seed=seed)
    try:
        _, history = trainer.train(candidate.model, cfg, datasets)
    except DivergenceError:
        return 0.0, None
    return best_val_accuracy(history), history


def random_search(
    space: SearchSpace,
    budget: int,
    datasets: dict[str, SampleSet],
    seed: int,
    *,
    base_train_cfg: Optional[trainer.TrainConfig] = None,
    n_classes: Optional[int] = None,
    workers: int = 1,
) -> tuple[CandidateConfig, list[TrialResult]]:
    """Sample ``budget`` configs, train each, return (winner, leaderboard).

    With ``workers`` > 1 the trials run in a process pool; the leaderboard is
    assembled from (index, result) pairs and sorted, so it does not depend on
    completion order.
    """
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    train_set = datasets["train"]
    channels, window_len = train_set.x.shape[1], train_set.x.shape[2]
    if n_classes is None:
        n_classes = int(max(train_set.y.max(), datasets["val"].y.max())) + 1
    n_classes = max(n_classes, 2)
    base_cfg = base_train_cfg if base_train_cfg is not None else trainer.TrainConfig()

    draw_rng = np.random.default_rng(seed)
    candidates = [
        sample_config(
            space, draw_rng,
            input_channels=channels, window_len=window_len, n_classes=n_classes,
        )
        for _ in range(budget)
    ]
    seeds = [trial_seed(seed, index) for index in range(budget)]

    outcomes: list[tuple[float, Optional[list]]] = [None] * budget  # type: ignore[list-item]
    if workers <= 1 or budget == 1:
        for index, candidate in enumerate(candidates):
            outcomes[index] = run_trial(candidate, datasets, base_cfg, seeds[index])
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, budget)) as pool:
            futures = {
                pool.submit(run_trial, candidate, datasets, base_cfg, seeds[index]): index
                for index, candidate in enumerate(candidates)
            }
            for future, index in futures.items():
                outcomes[index] = future.result()

    results = [
        TrialResult(
            trial_index=index,
            candidate=candidate,
            val_accuracy=outcomes[index][0],
            parameter_count=nn.parameter_count(candidate.model),
            seed=seeds[index],
            history=outcomes[index][1],
        )
        for index, candidate in enumerate(candidates)
    ]
    leaderboard = sorted(
        results, key=lambda r: (-r.val_accuracy, r.parameter_count, r.trial_index)
    )
    return leaderboard[0].candidate, leaderboard


def write_leaderboard(leaderboard: list[TrialResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "rank", "n_layers", "hidden_units", "dropout", "kernel_reg",
            "recurrent_reg", "initial_lr", "val_accuracy", "params", "seed",
        ])
        for rank, res in enumerate(leaderboard, start=1):
            m = res.candidate.model
            writer.writerow([
                rank, m.n_layers, m.hidden_units, m.dropout_rate, m.kernel_reg,
                m.recurrent_reg, repr(res.candidate.initial_lr),
                repr(res.val_accuracy), res.parameter_count, res.seed,
            ])
