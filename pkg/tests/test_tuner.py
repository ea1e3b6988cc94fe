from __future__ import annotations

import numpy as np
import pytest

from spikedecode.errors import ConfigError
from spikedecode.trainer import TrainConfig
from spikedecode.tuner import (
    SearchSpace,
    random_search,
    sample_config,
    trial_seed,
    write_leaderboard,
)

from test_trainer import _toy_sets


def _draw(space, seed=0, **dims):
    defaults = dict(input_channels=4, window_len=6, n_classes=2)
    defaults.update(dims)
    return sample_config(space, np.random.default_rng(seed), **defaults)


def test_space_cardinality_is_4608():
    assert SearchSpace().cardinality == 4608


def test_degenerate_space_returns_its_point():
    space = SearchSpace(
        n_layers=(3,), hidden_units=(40,), dropout=(0.6,),
        kernel_reg=("L1",), recurrent_reg=("L2",), initial_lr=(2e-4,),
    )
    cand = _draw(space)
    assert cand.model.n_layers == 3
    assert cand.model.hidden_units == 40
    assert cand.model.dropout_rate == 0.6
    assert cand.model.kernel_reg == "L1"
    assert cand.model.recurrent_reg == "L2"
    assert cand.initial_lr == 2e-4


def test_draws_uniform_within_4_sigma():
    space = SearchSpace()
    rng = np.random.default_rng(42)
    n = 10_000
    counts = {
        "n_layers": {}, "hidden_units": {}, "dropout": {},
        "kernel_reg": {}, "recurrent_reg": {}, "initial_lr": {},
    }
    for _ in range(n):
        cand = sample_config(space, rng, input_channels=4, window_len=6, n_classes=2)
        values = {
            "n_layers": cand.model.n_layers,
            "hidden_units": cand.model.hidden_units,
            "dropout": cand.model.dropout_rate,
            "kernel_reg": cand.model.kernel_reg,
            "recurrent_reg": cand.model.recurrent_reg,
            "initial_lr": cand.initial_lr,
        }
        for axis, v in values.items():
            counts[axis][v] = counts[axis].get(v, 0) + 1
    for axis, axis_counts in counts.items():
        k = len(getattr(space, axis))
        expected = n / k
        sigma = np.sqrt(n * (1 / k) * (1 - 1 / k))
        assert set(axis_counts) == set(getattr(space, axis))
        for v, c in axis_counts.items():
            assert abs(c - expected) <= 4 * sigma, f"{axis}={v}: {c} vs {expected}"


def test_paper_selected_configs_are_members():
    space = SearchSpace()
    selected = [
        # (layers, units, dropout, kernel, recurrent, lr)
        (2, 40, 0.8, "L2", "L2", 1e-3),
        (1, 40, 0.7, "L2", "L1+L2", 1e-3),
    ]
    for layers, units, dropout, kreg, rreg, lr in selected:
        assert layers in space.n_layers
        assert units in space.hidden_units
        assert dropout in space.dropout
        assert kreg in space.kernel_reg
        assert rreg in space.recurrent_reg
        assert lr in space.initial_lr


def test_every_sample_lies_in_domain():
    space = SearchSpace()
    rng = np.random.default_rng(3)
    for _ in range(500):
        cand = sample_config(space, rng, input_channels=4, window_len=6, n_classes=3)
        assert cand.model.n_layers in space.n_layers
        assert cand.model.hidden_units in space.hidden_units
        assert cand.model.dropout_rate in space.dropout
        assert cand.model.kernel_reg in space.kernel_reg
        assert cand.model.recurrent_reg in space.recurrent_reg
        assert cand.initial_lr in space.initial_lr


def test_empty_axis_rejected():
    with pytest.raises(ConfigError):
        SearchSpace(n_layers=())


def test_trial_seeds_stable_and_distinct():
    seeds = [trial_seed(123, i) for i in range(10)]
    assert seeds == [trial_seed(123, i) for i in range(10)]
    assert len(set(seeds)) == 10


_FAST = TrainConfig(batch_size=32, max_epochs=4, initial_lr=1e-2, seed=0)
_TINY_SPACE = SearchSpace(
    n_layers=(1,), hidden_units=(3, 6), dropout=(0.0,),
    kernel_reg=("none",), recurrent_reg=("none",), initial_lr=(1e-2,),
)


def test_budget_one_returns_that_config():
    sets = _toy_sets(n_per_class=30)
    best, board = random_search(_TINY_SPACE, 1, sets, seed=5, base_train_cfg=_FAST)
    assert len(board) == 1
    assert board[0].candidate is best


def test_winner_matches_exhaustive_oracle():
    sets = _toy_sets(n_per_class=30)
    # budget large enough that both configs of the two-point space are drawn
    best, board = random_search(_TINY_SPACE, 6, sets, seed=1, base_train_cfg=_FAST)
    drawn = {r.candidate.model.hidden_units for r in board}
    assert drawn == {3, 6}

    # independent oracle: re-train every (candidate, seed) trial outside the
    # search and recompute the winner under the documented sort key
    from spikedecode.tuner import run_trial
    oracle_rows = []
    for r in sorted(board, key=lambda r: r.trial_index):
        val_acc, _ = run_trial(r.candidate, sets, _FAST, r.seed)
        assert val_acc == r.val_accuracy
        oracle_rows.append(
            (-val_acc, r.parameter_count, r.trial_index, r.candidate)
        )
    oracle_winner = min(oracle_rows)[3]
    assert best == oracle_winner


def test_leaderboard_sorted_and_tie_break():
    sets = _toy_sets(n_per_class=30)
    _, board = random_search(_TINY_SPACE, 5, sets, seed=2, base_train_cfg=_FAST)
    keys = [(-r.val_accuracy, r.parameter_count, r.trial_index) for r in board]
    assert keys == sorted(keys)


def test_same_seed_identical_leaderboard():
    sets = _toy_sets(n_per_class=30)
    _, a = random_search(_TINY_SPACE, 3, sets, seed=9, base_train_cfg=_FAST)
    _, b = random_search(_TINY_SPACE, 3, sets, seed=9, base_train_cfg=_FAST)
    for ra, rb in zip(a, b):
        assert ra.val_accuracy == rb.val_accuracy
        assert ra.candidate == rb.candidate
        assert ra.seed == rb.seed


def test_diverged_trial_scores_zero(monkeypatch):
    from spikedecode import tuner as tuner_mod
    from spikedecode.errors import DivergenceError

    calls = {"n": 0}
    original = tuner_mod.trainer.train

    def explode_first(model_cfg, train_cfg, datasets):
        calls["n"] += 1
        if calls["n"] == 1:
            raise DivergenceError("boom")
        return original(model_cfg, train_cfg, datasets)

    monkeypatch.setattr(tuner_mod.trainer, "train", explode_first)
    sets = _toy_sets(n_per_class=30)
    _, board = random_search(_TINY_SPACE, 2, sets, seed=0, base_train_cfg=_FAST)
    assert any(r.val_accuracy == 0.0 and r.history is None for r in board)
    assert any(r.val_accuracy > 0.0 for r in board)


def test_leaderboard_csv(tmp_path):
    sets = _toy_sets(n_per_class=30)
    _, board = random_search(_TINY_SPACE, 2, sets, seed=4, base_train_cfg=_FAST)
    write_leaderboard(board, tmp_path / "leaderboard.csv")
    lines = (tmp_path / "leaderboard.csv").read_text().strip().splitlines()
    assert lines[0].startswith("rank,n_layers,hidden_units")
    assert len(lines) == 3


def test_parallel_workers_agree_with_sequential():
    sets = _toy_sets(n_per_class=30)
    _, seq = random_search(_TINY_SPACE, 3, sets, seed=6, base_train_cfg=_FAST)
    _, par = random_search(_TINY_SPACE, 3, sets, seed=6, base_train_cfg=_FAST,
                           workers=2)
    for a, b in zip(seq, par):
        assert a.candidate == b.candidate
        assert a.seed == b.seed
        assert abs(a.val_accuracy - b.val_accuracy) <= 1e-10
