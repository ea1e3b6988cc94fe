from __future__ import annotations

import numpy as np
import pytest

from spikedecode.session import CatalogEntry, PhaseMark, Session, Trial
from spikedecode.synthgen import PHASE_NAMES, SynthConfig, generate_session


def make_trial(
    trial_id: int = 0,
    object_id: int = 0,
    t_start: float = 0.0,
    t_end: float = 4.0,
    channels: int = 2,
    spikes=None,
    phases=None,
) -> Trial:
    """Hand-built valid trial; phase marks spread over the middle."""
    if phases is None:
        span = t_end - t_start
        phases = tuple(
            PhaseMark(name, t_start + frac * span)
            for name, frac in zip(
                ("fixation", "cue", "planning", "movement", "hold", "end"),
                (0.1, 0.25, 0.4, 0.55, 0.7, 0.9),
            )
        )
    if spikes is None:
        spikes = tuple(np.empty(0) for _ in range(channels))
    else:
        spikes = tuple(np.asarray(ch, dtype=np.float64) for ch in spikes)
    return Trial(
        trial_id=trial_id, object_id=object_id, t_start=t_start, t_end=t_end,
        phases=phases, spikes=spikes,
    )


def make_session(trials, channel_count: int = 2, catalog=None) -> Session:
    if catalog is None:
        ids = sorted({t.object_id for t in trials}) or [0]
        catalog = {obj: CatalogEntry(shape_group=obj, size_index=0) for obj in ids}
    return Session(
        session_id="fixture", channel_count=channel_count,
        trials=tuple(trials), catalog=catalog,
    )


def small_synth_config(seed: int = 0, **overrides) -> SynthConfig:
    """A fast 4-class, 12-channel session for unit tests."""
    channels, groups, sizes = 12, 2, 2
    block = channels // groups
    ramp_down = np.linspace(1.6, 0.4, block)
    ramp_up = np.linspace(0.4, 1.6, block)
    modulation = np.zeros((groups * sizes, channels))
    for g in range(groups):
        cols = slice(g * block, (g + 1) * block)
        modulation[sizes * g + 0, cols] = ramp_down
        modulation[sizes * g + 1, cols] = 1.15 * ramp_up
    base = dict(
        channels=channels,
        n_shape_groups=groups,
        sizes_per_group=sizes,
        trials_per_class=6,
        baseline_rate=5.0,
        modulation=modulation,
        phase_means={"fixation": 0.5, "cue": 0.4, "planning": 0.5,
                     "movement": 0.5, "hold": 0.4},
        phase_jitters={name: 0.1 for name in PHASE_NAMES},
        lead_in=0.2,
        tail=0.3,
        seed=seed,
        session_id=f"small-{seed}",
    )
    base.update(overrides)
    return SynthConfig(**base)


@pytest.fixture(scope="session")
def small_session():
    return generate_session(small_synth_config(seed=11))
