"""Seeded synthetic session generator.

Produces homogeneous-Poisson spike trains whose firing rates are constant
within each trial segment and modulated per class from the cue onward, so the
grasped object is decodable from hold-phase activity. Stands in for real
recordings in every desk-scale test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .session import CatalogEntry, PhaseMark, Session, Trial

# Trial segments in temporal order. "pre" covers the lead-in before the
# fixation mark, "post" the tail after the end mark; both fire at baseline.
SEGMENTS = ("pre", "fixation", "cue", "planning", "movement", "hold", "post")

# Fraction of the per-class modulation applied in each segment. Ramps up from
# cue to hold with a deliberately sharp movement->hold step, so the hold phase
# is separable from the reach; zero outside cue..hold so rest activity is
# class-independent.
SEGMENT_WEIGHT = {
    "pre": 0.0,
    "fixation": 0.0,
    "cue": 0.1,
    "planning": 0.2,
    "movement": 0.3,
    "hold": 1.0,
    "post": 0.0,
}

PHASE_NAMES = ("fixation", "cue", "planning", "movement", "hold")


@dataclass(frozen=True)
class SynthConfig:
    """Everything needed to regenerate a synthetic session deterministically."""

    channels: int
    n_shape_groups: int
    sizes_per_group: int
    trials_per_class: int
    baseline_rate: float
    modulation: np.ndarray  # (n_classes, channels) relative gain during hold
    phase_means: dict[str, float]  # seconds, keys = PHASE_NAMES
    phase_jitters: dict[str, float]  # fraction of the mean, in [0, 1)
    trial_gain_jitter: float = 0.0  # per-trial multiplier spread on the modulation
    lead_in: float = 0.3
    tail: float = 0.6
    seed: int = 0
    session_id: str = "synth"

    @property
    def n_classes(self) -> int:
        return self.n_shape_groups * self.sizes_per_group

    @property
    def n_trials(self) -> int:
        return self.n_classes * self.trials_per_class

    def to_json_dict(self) -> dict:
        return {
            "channels": self.channels,
            "n_shape_groups": self.n_shape_groups,
            "sizes_per_group": self.sizes_per_group,
            "trials_per_class": self.trials_per_class,
            "baseline_rate": self.baseline_rate,
            "modulation": np.asarray(self.modulation).tolist(),
            "phase_means": dict(self.phase_means),
            "phase_jitters": dict(self.phase_jitters),
            "trial_gain_jitter": self.trial_gain_jitter,
            "lead_in": self.lead_in,
            "tail": self.tail,
            "seed": self.seed,
            "session_id": self.session_id,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SynthConfig":
        try:
            return cls(
                channels=int(data["channels"]),
                n_shape_groups=int(data["n_shape_groups"]),
                sizes_per_group=int(data["sizes_per_group"]),
                trials_per_class=int(data["trials_per_class"]),
                baseline_rate=float(data["baseline_rate"]),
                modulation=np.asarray(data["modulation"], dtype=np.float64),
                phase_means={k: float(v) for k, v in data["phase_means"].items()},
                phase_jitters={k: float(v) for k, v in data["phase_jitters"].items()},
                trial_gain_jitter=float(data.get("trial_gain_jitter", 0.0)),
                lead_in=float(data.get("lead_in", 0.3)),
                tail=float(data.get("tail", 0.6)),
                seed=int(data.get("seed", 0)),
                session_id=str(data.get("session_id", "synth")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad synth config: {exc}") from exc


@dataclass(frozen=True)
class RateProfile:
    """Per (class, channel, segment) firing rates in Hz."""

    rates: np.ndarray  # (n_classes, channels, len(SEGMENTS))

    def rate(self, class_index: int, channel: int, segment: str) -> float:
        return float(self.rates[class_index, channel, SEGMENTS.index(segment)])


def _check_config(cfg: SynthConfig) -> None:
    if cfg.channels < 1 or cfg.n_shape_groups < 1 or cfg.sizes_per_group < 1:
        raise ConfigError("channels and class-grid dimensions must be positive")
    if cfg.trials_per_class < 1:
        raise ConfigError("trials_per_class must be positive")
    if cfg.baseline_rate < 0:
        raise ConfigError("baseline_rate must be non-negative")
    mod = np.asarray(cfg.modulation)
    if mod.shape != (cfg.n_classes, cfg.channels):
        raise ConfigError(
            f"modulation shape {mod.shape} != (n_classes={cfg.n_classes}, channels={cfg.channels})"
        )
    if cfg.lead_in <= 0 or cfg.tail <= 0:
        raise ConfigError("lead_in and tail must be positive (phase marks sit strictly inside)")
    if not 0.0 <= cfg.trial_gain_jitter < 1.0:
        raise ConfigError("trial_gain_jitter must lie in [0, 1)")
    for name in PHASE_NAMES:
        if name not in cfg.phase_means:
            raise ConfigError(f"phase_means missing {name!r}")
        if cfg.phase_means[name] <= 0:
            raise ConfigError(f"phase mean for {name!r} must be positive")
        jit = cfg.phase_jitters.get(name, 0.0)
        if not 0.0 <= jit < 1.0:
            raise ConfigError(f"jitter for {name!r} must lie in [0, 1)")


def build_rate_profile(cfg: SynthConfig) -> RateProfile:
    """Segment-constant rates: baseline everywhere, class-modulated cue..hold."""
    mod = np.asarray(cfg.modulation, dtype=np.float64)
    weights = np.array([SEGMENT_WEIGHT[s] for s in SEGMENTS])
    rates = cfg.baseline_rate * (1.0 + mod[:, :, None] * weights[None, None, :])
    if np.any(rates < 0):
        raise ConfigError("modulation drives a firing rate below zero")
    return RateProfile(rates=rates)


def make_catalog(cfg: SynthConfig) -> dict[int, CatalogEntry]:
    """Object id k -> (shape_group, size_index) on a dense grid, no duplicates."""
    return {
        k: CatalogEntry(shape_group=k // cfg.sizes_per_group, size_index=k % cfg.sizes_per_group)
        for k in range(cfg.n_classes)
    }


def _trial_segments(cfg: SynthConfig, rng: np.random.Generator) -> list[float]:
    """Segment durations for one trial: lead-in, five phases, tail."""
    durations = [cfg.lead_in]
    for name in PHASE_NAMES:
        mean = cfg.phase_means[name]
        jit = cfg.phase_jitters.get(name, 0.0)
        durations.append(mean * (1.0 + rng.uniform(-jit, jit)))
    durations.append(cfg.tail)
    return durations


def generate_session(cfg: SynthConfig) -> Session:
    """Generate a full synthetic session; output always passes validate_session.

    Rates are segment-constant per trial: baseline * (1 + gain * weight *
    trial_factor), where trial_factor models trial-to-trial excitability
    (1 +- trial_gain_jitter) and multiplies only the modulated component.
    """
    _check_config(cfg)
    build_rate_profile(cfg)  # validates nominal rates are non-negative

    root_ss = np.random.SeedSequence(cfg.seed)
    order_rng = np.random.default_rng(root_ss.spawn(1)[0])
    object_order = np.repeat(np.arange(cfg.n_classes), cfg.trials_per_class)
    order_rng.shuffle(object_order)
    trial_seeds = root_ss.spawn(cfg.n_trials)

    mod = np.asarray(cfg.modulation, dtype=np.float64)
    weights = np.array([SEGMENT_WEIGHT[s] for s in SEGMENTS])

    trials: list[Trial] = []
    t_cursor = 0.0
    for trial_id, (obj_id, seed) in enumerate(zip(object_order, trial_seeds)):
        rng = np.random.default_rng(seed)
        durations = _trial_segments(cfg, rng)
        edges = t_cursor + np.concatenate([[0.0], np.cumsum(durations)])
        t_start, t_end = float(edges[0]), float(edges[-1])

        # trial-to-trial excitability: one multiplier on the modulated
        # component, shared by all channels and segments of this trial
        factor = 1.0
        if cfg.trial_gain_jitter > 0:
            factor += rng.uniform(-cfg.trial_gain_jitter, cfg.trial_gain_jitter)
        trial_rates = cfg.baseline_rate * (
            1.0 + mod[obj_id][:, None] * weights[None, :] * factor
        )
        np.clip(trial_rates, 0.0, None, out=trial_rates)

        spikes: list[np.ndarray] = []
        for ch in range(cfg.channels):
            parts = []
            for seg_idx in range(len(SEGMENTS)):
                rate = trial_rates[ch, seg_idx]
                a, b = float(edges[seg_idx]), float(edges[seg_idx + 1])
                if rate <= 0.0 or b <= a:
                    continue
                count = rng.poisson(rate * (b - a))
                if count:
                    parts.append(rng.uniform(a, b, size=count))
            times = np.sort(np.concatenate(parts)) if parts else np.empty(0)
            spikes.append(times)

        # Marks are phase onsets; "end" closes the hold phase.
        marks = tuple(
            PhaseMark(name=name, time=float(edges[i + 1]))
            for i, name in enumerate(PHASE_NAMES)
        ) + (PhaseMark(name="end", time=float(edges[6])),)

        trials.append(
            Trial(
                trial_id=trial_id,
                object_id=int(obj_id),
                t_start=t_start,
                t_end=t_end,
                phases=marks,
                spikes=tuple(spikes),
            )
        )
        t_cursor = t_end

    return Session(
        session_id=cfg.session_id,
        channel_count=cfg.channels,
        trials=tuple(trials),
        catalog=make_catalog(cfg),
    )


def default_benchmark_config(seed: int = 0) -> SynthConfig:
    """The stock desk-scale benchmark: 10 classes, 60 channels, 300 trials.

    Classes live on a 5 shape-group x 2 size grid. Each group owns a block of
    12 channels; the two sizes in a group share the block with partially
    opposed intensity ramps and different amplitude, and a per-trial
    excitability jitter blurs the amplitude cue, so size-adjacent classes are
    the most confusable pair and telling them apart genuinely needs many
    trials. A class-independent gain shared by every channel gives the hold
    phase a population-wide signature for the rest/grasp task without adding
    class information. Phase durations are tuned so rest:grasp window counts
    land near 8.5:1.
    """
    channels, groups, sizes = 60, 5, 2
    block = channels // groups
    ramp_down = np.linspace(6.0, 2.0, block)
    ramp_up = np.linspace(2.0, 6.0, block)
    # size 1 = mostly-reversed ramp at higher amplitude: the direction part
    # separates sizes given enough trials, the amplitude part is blurred by
    # the per-trial excitability jitter
    size1 = 1.25 * (0.2 * ramp_down + 0.8 * ramp_up)
    modulation = np.full((groups * sizes, channels), 1.2)
    for g in range(groups):
        cols = slice(g * block, (g + 1) * block)
        modulation[sizes * g + 0, cols] += ramp_down
        modulation[sizes * g + 1, cols] += size1
    return SynthConfig(
        channels=channels,
        n_shape_groups=groups,
        sizes_per_group=sizes,
        trials_per_class=30,
        baseline_rate=5.0,
        modulation=modulation,
        phase_means={
            "fixation": 1.2,
            "cue": 1.0,
            "planning": 1.5,
            "movement": 1.5,
            "hold": 0.7,
        },
        phase_jitters={name: 0.15 for name in PHASE_NAMES},
        trial_gain_jitter=0.2,
        lead_in=0.3,
        tail=1.0,
        seed=seed,
        session_id=f"synth-benchmark-{seed}",
    )


def save_synth_config(cfg: SynthConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_json_dict(), fh, indent=2)
        fh.write("\n")


def load_synth_config(path: str | Path) -> SynthConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return SynthConfig.from_json_dict(json.load(fh))


def with_seed(cfg: SynthConfig, seed: int) -> SynthConfig:
    """Same generator settings under a different seed (and session id)."""
    base = cfg.session_id.rsplit("-", 1)[0] if cfg.session_id else "synth"
    return replace(cfg, seed=seed, session_id=f"{base}-{seed}")
