"""Simulated on-line decoding over binned trials.

Bins arrive one at a time per trial; once the sliding buffer is full, each new
bin yields a decision step: the phase model says rest or grasp and, on grasp,
the classification model names the object. Decisions, error rates and
hold-onset detection latency are collected into a stream report.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import nn
from .errors import DataError
from .pipeline import GRASP, REST, BinnedTrial, bin_trial
from .session import Session

Predictor = Callable[[np.ndarray], int]


@dataclass(eq=False)
class StreamState:
    """Sliding buffer of the last ``window`` bin vectors for one trial."""

    channels: int
    window: int
    buffer: np.ndarray = field(init=False)
    bins_seen: int = 0

    def __post_init__(self) -> None:
        self.buffer = np.zeros((self.channels, self.window), dtype=np.int64)

    @property
    def warmed_up(self) -> bool:
        return self.bins_seen >= self.window

    def push(self, bin_vector: np.ndarray) -> None:
        if bin_vector.shape != (self.channels,):
            raise DataError(
                f"bin vector shape {bin_vector.shape} != ({self.channels},)"
            )
        self.buffer[:, :-1] = self.buffer[:, 1:]
        self.buffer[:, -1] = bin_vector
        self.bins_seen += 1

    def current_window(self) -> np.ndarray:
        return self.buffer.copy()


@dataclass(eq=False)
class Decision:
    trial_id: int
    end_bin: int
    truth: int  # REST/GRASP from phase marks
    phase_decision: int
    class_decision: Optional[int]  # only when the phase model says GRASP


@dataclass(eq=False)
class StreamReport:
    decisions: list[Decision]
    false_grasp_rate: float
    false_rest_rate: float
    latencies: dict[int, Optional[int]]  # trial_id -> bins from hold onset, None if missed
    skipped_trials: list[int]
    median_decode_ms: float

    @property
    def n_steps(self) -> int:
        return len(self.decisions)

    def step_confusion(self) -> np.ndarray:
        """Pooled 2x2 rest/grasp confusion matrix over all decision steps."""
        cm = np.zeros((2, 2), dtype=np.int64)
        for d in self.decisions:
            cm[d.truth, d.phase_decision] += 1
        return cm

    def to_json_dict(self) -> dict:
        detected = [v for v in self.latencies.values() if v is not None]
        return {
            "n_steps": self.n_steps,
            "false_grasp_rate": self.false_grasp_rate,
            "false_rest_rate": self.false_rest_rate,
            "skipped_trials": list(self.skipped_trials),
            "n_trials_detected": len(detected),
            "n_trials_missed": sum(1 for v in self.latencies.values() if v is None),
            "median_latency_bins": float(np.median(detected)) if detected else None,
            "median_decode_ms": self.median_decode_ms,
            "latencies": {str(k): v for k, v in sorted(self.latencies.items())},
        }


def model_predictor(model: nn.BiLstmModel) -> Predictor:
    """Wrap a trained model as a single-window argmax predictor."""
    cfg = model.config

    def predict_one(window: np.ndarray) -> int:
        if window.shape != (cfg.input_channels, cfg.window_len):
            raise DataError(
                f"window shape {window.shape} does not match model "
                f"({cfg.input_channels}, {cfg.window_len})"
            )
        probs = nn.forward(model, window[None].astype(np.float64))
        return int(np.argmax(probs[0]))

    return predict_one


def stream_decode(
    binned_trials: Sequence[BinnedTrial],
    phase_model: Predictor,
    class_model: Predictor,
    window: int,
) -> StreamReport:
    """Replay trials bin by bin through the phase->classification cascade.

    The classification model runs only on steps the phase model calls GRASP.
    Ground truth comes from the trials' phase bins; trials shorter than the
    window emit nothing and are reported as skipped.
    """
    decisions: list[Decision] = []
    latencies: dict[int, Optional[int]] = {}
    skipped: list[int] = []
    decode_times: list[float] = []

    for binned in binned_trials:
        if binned.n_bins < window:
            skipped.append(binned.trial_id)
            continue
        hold_start, hold_end = binned.hold_region()
        state = StreamState(channels=binned.channels, window=window)
        first_grasp: Optional[int] = None
        for b in range(binned.n_bins):
            state.push(binned.counts[:, b])
            if not state.warmed_up:
                continue
            win = state.current_window()
            t0 = time.perf_counter()
            phase = phase_model(win)
            cls = class_model(win) if phase == GRASP else None
            decode_times.append(time.perf_counter() - t0)
            truth = GRASP if hold_start <= b < hold_end else REST
            decisions.append(
                Decision(
                    trial_id=binned.trial_id, end_bin=b, truth=truth,
                    phase_decision=phase, class_decision=cls,
                )
            )
            if first_grasp is None and phase == GRASP and b >= hold_start:
                first_grasp = b
        latencies[binned.trial_id] = (
            first_grasp - hold_start if first_grasp is not None else None
        )

    n_steps = len(decisions)
    false_grasp = sum(1 for d in decisions if d.truth != GRASP and d.phase_decision == GRASP)
    false_rest = sum(1 for d in decisions if d.truth == GRASP and d.phase_decision != GRASP)
    return StreamReport(
        decisions=decisions,
        false_grasp_rate=false_grasp / n_steps if n_steps else 0.0,
        false_rest_rate=false_rest / n_steps if n_steps else 0.0,
        latencies=latencies,
        skipped_trials=skipped,
        median_decode_ms=float(np.median(decode_times)) * 1e3 if decode_times else 0.0,
    )


def replay_session(
    session: Session,
    phase_model: Predictor,
    class_model: Predictor,
    window: int,
    bin_width: float,
) -> StreamReport:
    """Bin a raw session and stream-decode it (bin_trial o stream_decode)."""
    binned = [bin_trial(trial, bin_width) for trial in session.trials]
    return stream_decode(binned, phase_model, class_model, window)


def write_stream_report(report: StreamReport, out: str | Path) -> None:
    """stream_report.json + decisions.csv (+ timing.json) in ``out``.

    Wall-clock decode time is hardware-dependent, so it goes to a separate
    timing.json and the main report stays bit-reproducible across reruns.
    """
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    payload = report.to_json_dict()
    timing = {"median_decode_ms": payload.pop("median_decode_ms")}
    with open(root / "stream_report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(root / "timing.json", "w", encoding="utf-8") as fh:
        json.dump(timing, fh, indent=2)
        fh.write("\n")
    with open(root / "decisions.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "bin", "truth", "phase_decision", "class_decision"])
        for d in report.decisions:
            writer.writerow([
                d.trial_id, d.end_bin, d.truth, d.phase_decision,
                "" if d.class_decision is None else d.class_decision,
            ])
