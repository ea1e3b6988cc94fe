"""Command-line front end.

Subcommands compose through documented file formats only: ``synth`` writes a
session directory, ``preprocess`` turns it into a dataset bundle, ``train`` /
``tune`` produce checkpoints, ``eval`` / ``stream`` / ``sweep`` produce report
directories (delimited output plus rendered figures). Every command writes a
manifest with its effective config, seeds and versions, and reruns of the same
manifest are bit-identical in single-threaded mode.

Exit codes: 0 ok, 1 config error, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, metrics, nn, plots, realtime, trainer, tuner
from .errors import ConfigError, DataError, DivergenceError, SessionFormatError
from .pipeline import (
    PipelineConfig,
    assemble_datasets,
    load_dataset_bundle,
    write_dataset_bundle,
)
from .session import load_session, save_session
from .synthgen import (
    default_benchmark_config,
    generate_session,
    save_synth_config,
    with_seed,
)

TASK_ALIASES = {"phase": "phase_detection", "phase_detection": "phase_detection",
                "classification": "classification"}
SWEEP_DEFAULT_PCTS = (80, 70, 60, 50, 40, 30, 20)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as config errors (exit 1)."""

    def error(self, message: str):  # noqa: A003 - argparse API
        raise ConfigError(message)


def _worker_cap(requested: int) -> int:
    cap = os.environ.get("SPIKEDECODE_THREADS")
    if cap is not None:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"SPIKEDECODE_THREADS must be an integer: {cap!r}") from exc
    return max(1, requested)


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return data


def _write_manifest(out: Path, command: str, config: dict, seeds: dict) -> None:
    """Write (or extend) the run manifest; never clobbers existing dataset keys."""
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    manifest = {}
    if path.is_file():
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    manifest.update({
        "command": command,
        "config": {**manifest.get("config", {}), **config},
        "seeds": seeds,
        "versions": {
            "spikedecode": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--fractions needs three comma-separated values, got {text!r}")
    try:
        fractions = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad fraction in {text!r}") from exc
    return fractions  # validated by stratified_split


def _pipeline_config(args: argparse.Namespace, file_cfg: dict) -> PipelineConfig:
    section = dict(file_cfg.get("pipeline", {}))
    if args.bin_width is not None:
        section["bin_width"] = args.bin_width
    if args.window is not None:
        section["window"] = args.window
    if args.fractions is not None:
        section["fractions"] = list(_parse_fractions(args.fractions))
    if getattr(args, "min_trials", None) is not None:
        section["min_trials"] = args.min_trials
    if args.seed is not None:
        section["seed"] = args.seed
    return PipelineConfig.from_json_dict(section)


def _model_config(
    args: argparse.Namespace, file_cfg: dict, channels: int, window: int, n_classes: int,
) -> nn.ModelConfig:
    section = dict(file_cfg.get("model", {}))
    overrides = {
        "n_layers": args.layers,
        "hidden_units": args.hidden,
        "dropout_rate": args.dropout,
        "kernel_reg": args.kernel_reg,
        "recurrent_reg": args.recurrent_reg,
    }
    for key, value in overrides.items():
        if value is not None:
            section[key] = value
    section.setdefault("n_layers", 1)
    section.setdefault("hidden_units", 32)
    section.setdefault("dropout_rate", 0.4)
    section["input_channels"] = channels
    section["window_len"] = window
    section["n_classes"] = n_classes
    return nn.ModelConfig.from_json_dict(section)


def _train_config(args: argparse.Namespace, file_cfg: dict) -> trainer.TrainConfig:
    section = dict(file_cfg.get("train", {}))
    overrides = {
        "batch_size": getattr(args, "batch_size", None),
        "max_epochs": getattr(args, "max_epochs", None),
        "initial_lr": getattr(args, "lr", None),
        "early_stop_patience": getattr(args, "patience", None),
        "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            section[key] = value
    return trainer.TrainConfig.from_json_dict(section)


def _task_name(raw: str) -> str:
    if raw not in TASK_ALIASES:
        raise ConfigError(f"unknown task {raw!r}; use phase or classification")
    return TASK_ALIASES[raw]


# --- commands ---------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> None:
    file_cfg = _load_config_file(args.config)
    if "synth" in file_cfg:
        from .synthgen import SynthConfig

        cfg = SynthConfig.from_json_dict(file_cfg["synth"])
    else:
        cfg = default_benchmark_config()
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)

    session = generate_session(cfg)
    out = Path(args.out)
    save_session(session, out)
    save_synth_config(cfg, out / "synth_config.json")
    _write_manifest(out, "synth", cfg.to_json_dict(), {"synth": cfg.seed})
    print(f"synth: {session.n_trials} trials, {session.channel_count} channels -> {out}")


def cmd_preprocess(args: argparse.Namespace) -> None:
    file_cfg = _load_config_file(args.config)
    config = _pipeline_config(args, file_cfg)
    session = load_session(args.session_dir)
    bundle = assemble_datasets(session, config)
    out = Path(args.out)
    write_dataset_bundle(bundle, out)
    _write_manifest(out, "preprocess", config.to_json_dict(), {"split": config.seed})
    counts = {
        task: {part: len(bundle.sets[task][part]) for part in ("train", "val", "test")}
        for task in bundle.sets
    }
    print(f"preprocess: {counts} -> {out}")


def cmd_train(args: argparse.Namespace) -> None:
    file_cfg = _load_config_file(args.config)
    task = _task_name(args.task)
    bundle = load_dataset_bundle(args.data)
    sets = bundle.sets[task]
    n_classes = 2 if task == "phase_detection" else bundle.class_map.n_classes
    model_cfg = _model_config(args, file_cfg, bundle.channels, bundle.config.window, n_classes)
    train_cfg = _train_config(args, file_cfg)

    model, history = trainer.train(model_cfg, train_cfg, sets)
    out = Path(args.out)
    trainer.write_run_dir(out, model, history, train_cfg, {"task": task})
    plots.save_history_figure(history, out / "history.png")
    _write_manifest(
        out, "train",
        {"task": task, "model": model_cfg.to_json_dict(), "train": train_cfg.to_json_dict(),
         "data": str(args.data)},
        {"train": train_cfg.seed},
    )
    best = max(rec.val_accuracy for rec in history)
    print(f"train[{task}]: {len(history)} epochs, best val acc {best:.4f} -> {out}")


def cmd_tune(args: argparse.Namespace) -> None:
    file_cfg = _load_config_file(args.config)
    task = _task_name(args.task)
    bundle = load_dataset_bundle(args.data)
    sets = bundle.sets[task]
    n_classes = 2 if task == "phase_detection" else bundle.class_map.n_classes
    base_cfg = _train_config(args, file_cfg)
    workers = _worker_cap(args.workers)

    best, leaderboard = tuner.random_search(
        tuner.SearchSpace(), args.budget, sets, args.seed,
        base_train_cfg=base_cfg, n_classes=n_classes, workers=workers,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tuner.write_leaderboard(leaderboard, out / "leaderboard.csv")
    with open(out / "best_config.json", "w", encoding="utf-8") as fh:
        json.dump(
            {"model": best.model.to_json_dict(), "initial_lr": best.initial_lr},
            fh, indent=2,
        )
        fh.write("\n")
    _write_manifest(
        out, "tune",
        {"task": task, "budget": args.budget, "train": base_cfg.to_json_dict(),
         "data": str(args.data), "workers": workers},
        {"search": args.seed},
    )
    top = leaderboard[0]
    print(
        f"tune[{task}]: {args.budget} trials, best val acc {top.val_accuracy:.4f} "
        f"({top.candidate.model.n_layers} layers, {top.candidate.model.hidden_units} units) -> {out}"
    )


def cmd_eval(args: argparse.Namespace) -> None:
    task = _task_name(args.task)
    bundle = load_dataset_bundle(args.data)
    model = nn.load_model(args.model)
    sample_set = bundle.sets[task][args.split]
    if len(sample_set) == 0:
        raise DataError(f"no samples for task {task}, split {args.split}")

    preds = nn.predict(model, np.asarray(sample_set.x, dtype=np.float64))
    if task == "phase_detection":
        labels = ["rest", "grasp"]
        cm = metrics.confusion(preds, sample_set.y, 2)
        report = metrics.build_report(cm, class_map=None, labels=labels)
    else:
        labels = bundle.class_map.label_names()
        cm = metrics.confusion(preds, sample_set.y, bundle.class_map.n_classes)
        report = metrics.build_report(cm, class_map=bundle.class_map, labels=labels)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_metrics_json(report, out / "metrics.json")
    metrics.write_confusion_csv(cm, labels, out / "confusion.csv")
    metrics.write_confusion_pgm(cm, out / "confusion.pgm")
    plots.save_confusion_figure(cm, labels, out / "confusion.png",
                                title=f"{task} / {args.split}")
    _write_manifest(
        out, "eval",
        {"task": task, "split": args.split, "model": str(args.model), "data": str(args.data)},
        {},
    )
    line = f"eval[{task}/{args.split}]: accuracy {report.accuracy:.4f}, macro-F1 {report.macro_f1:.4f}"
    if report.relaxed_accuracy is not None:
        line += f", relaxed {report.relaxed_accuracy:.4f}"
    print(line + f" -> {out}")


def cmd_stream(args: argparse.Namespace) -> None:
    session = load_session(args.session)
    phase_model = nn.load_model(args.phase_model)
    class_model = nn.load_model(args.class_model)
    if phase_model.config.window_len != class_model.config.window_len:
        raise DataError("phase and classification models disagree on window length")
    if phase_model.config.input_channels != session.channel_count:
        raise DataError("phase model channel count does not match session")

    report = realtime.replay_session(
        session,
        realtime.model_predictor(phase_model),
        realtime.model_predictor(class_model),
        phase_model.config.window_len,
        args.bin_width,
    )
    out = Path(args.out)
    realtime.write_stream_report(report, out)
    plots.save_latency_figure(report.latencies, out / "latency.png")
    _write_manifest(
        out, "stream",
        {"session": str(args.session), "bin_width": args.bin_width,
         "phase_model": str(args.phase_model), "class_model": str(args.class_model)},
        {},
    )
    print(
        f"stream: {report.n_steps} steps, false grasp {report.false_grasp_rate:.4f}, "
        f"false rest {report.false_rest_rate:.4f} -> {out}"
    )


def sweep_fractions(train_val_pct: int) -> tuple[float, float, float]:
    """(train, val, test) fractions for one sweep point.

    Validation is 20% of train+val, rising to 30%/40% of the training set at
    the 30%/20% points so every class keeps a validation representative.
    """
    if not 0 < train_val_pct < 100:
        raise ConfigError(f"train+val percentage must be in (0, 100), got {train_val_pct}")
    tv = train_val_pct / 100.0
    if train_val_pct > 30:
        train, val = 0.8 * tv, 0.2 * tv
    else:
        ratio = 0.3 if train_val_pct > 20 else 0.4
        train = tv / (1.0 + ratio)
        val = tv - train
    return train, val, 1.0 - tv


def cmd_sweep(args: argparse.Namespace) -> None:
    file_cfg = _load_config_file(args.config)
    session = load_session(args.session)
    pcts = [int(p) for p in args.tv_fractions.split(",")] if args.tv_fractions else list(
        SWEEP_DEFAULT_PCTS
    )
    seeds = [int(s) for s in args.seeds.split(",")]
    base_pipeline = _pipeline_config(args, file_cfg)

    rows: list[dict] = []
    for pct in pcts:
        fractions = sweep_fractions(pct)
        for seed in seeds:
            pcfg = replace(base_pipeline, fractions=fractions, seed=seed)
            bundle = assemble_datasets(session, pcfg)
            sets = bundle.sets["classification"]
            model_cfg = _model_config(
                args, file_cfg, bundle.channels, pcfg.window, bundle.class_map.n_classes
            )
            train_cfg = replace(_train_config(args, file_cfg), seed=seed)
            model, _ = trainer.train(model_cfg, train_cfg, sets)
            test = sets["test"]
            preds = nn.predict(model, np.asarray(test.x, dtype=np.float64))
            cm = metrics.confusion(preds, test.y, bundle.class_map.n_classes)
            rows.append({
                "train_val_pct": pct,
                "seed": seed,
                "accuracy": metrics.accuracy(cm),
                "relaxed_accuracy": metrics.relaxed_accuracy(cm, bundle.class_map),
            })
            print(
                f"sweep: tv={pct}% seed={seed} acc={rows[-1]['accuracy']:.4f} "
                f"relaxed={rows[-1]['relaxed_accuracy']:.4f}"
            )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep_runs.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train_val_pct", "seed", "accuracy", "relaxed_accuracy"])
        for row in rows:
            writer.writerow([row["train_val_pct"], row["seed"],
                             repr(row["accuracy"]), repr(row["relaxed_accuracy"])])
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train_val_pct", "accuracy", "relaxed_accuracy"])
        for pct in pcts:
            sub = [r for r in rows if r["train_val_pct"] == pct]
            writer.writerow([
                pct,
                repr(float(np.mean([r["accuracy"] for r in sub]))),
                repr(float(np.mean([r["relaxed_accuracy"] for r in sub]))),
            ])
    plots.save_sweep_figure(rows, out / "sweep.png")
    _write_manifest(
        out, "sweep",
        {"session": str(args.session), "train_val_pcts": pcts, "seeds": seeds,
         "pipeline": base_pipeline.to_json_dict()},
        {"split_and_train": seeds},
    )
    print(f"sweep: {len(rows)} runs -> {out}")


# --- parser -------------------------------------------------------------------


def _add_pipeline_flags(p: argparse.ArgumentParser, with_min_trials: bool = True) -> None:
    p.add_argument("--bin-width", dest="bin_width", type=float, default=None,
                   help="bin width in seconds (default 0.040)")
    p.add_argument("--window", type=int, default=None,
                   help="window length in bins (default 15)")
    p.add_argument("--fractions", default=None,
                   help="train,val,test fractions, e.g. 0.64,0.16,0.20")
    if with_min_trials:
        p.add_argument("--min-trials", dest="min_trials", type=int, default=None,
                       help="minimum trials per class before dropping (default 3)")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--layers", type=int, default=None, help="number of BiLSTM layers")
    p.add_argument("--hidden", type=int, default=None, help="hidden units per direction")
    p.add_argument("--dropout", type=float, default=None, help="dropout rate")
    p.add_argument("--kernel-reg", dest="kernel_reg", default=None,
                   choices=nn.REG_CHOICES, help="input-kernel regularization")
    p.add_argument("--recurrent-reg", dest="recurrent_reg", default=None,
                   choices=nn.REG_CHOICES, help="recurrent-kernel regularization")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=None, help="initial learning rate")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None, help="early-stop patience")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikedecode", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"spikedecode {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic session directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON config with a 'synth' section")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="bin, split and window a session")
    p.add_argument("session_dir")
    p.add_argument("--seed", type=int, default=None, help="split seed (default 0)")
    p.add_argument("--config", default=None)
    _add_pipeline_flags(p)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one model on a dataset bundle")
    p.add_argument("--data", required=True, help="dataset bundle directory")
    p.add_argument("--task", default="classification",
                   help="phase or classification (default classification)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="random search over the hyperparameter space")
    p.add_argument("--data", required=True)
    p.add_argument("--task", default="classification")
    p.add_argument("--budget", type=int, required=True, help="number of trials")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1,
                   help="parallel trial processes (capped by SPIKEDECODE_THREADS)")
    p.add_argument("--config", default=None)
    _add_train_flags(p)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--model", required=True, help="checkpoint (.blsm)")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--task", default="classification")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stream", help="simulated real-time decode of a session")
    p.add_argument("--session", required=True)
    p.add_argument("--phase-model", dest="phase_model", required=True)
    p.add_argument("--class-model", dest="class_model", required=True)
    p.add_argument("--bin-width", dest="bin_width", type=float, default=0.040)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("sweep", help="re-split and retrain at shrinking train+val shares")
    p.add_argument("--session", required=True)
    p.add_argument("--seeds", default="0,1,2", help="comma-separated split/train seeds")
    p.add_argument("--tv-fractions", dest="tv_fractions", default=None,
                   help="train+val percentages, e.g. 80,50,20 (default 80..20)")
    p.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--config", default=None)
    _add_pipeline_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SessionFormatError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
