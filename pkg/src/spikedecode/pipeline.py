"""Pre-processing: binning, class mapping, trial-level split, window extraction.

The chain is bin -> class map -> stratified split -> sliding windows, producing
two datasets per session: a binary grasping-phase dataset over every window,
and a grasped-object classification dataset over hold-region windows only.
Splitting happens at trial level; sequences inherit their trial's partition,
so overlapping windows can never leak across partitions.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, SessionFormatError
from .session import Session, Trial

PARTITIONS = ("train", "val", "test")
TASKS = ("phase_detection", "classification")

# Phase-detection labels. Classification samples carry class indices instead.
REST = 0
GRASP = 1

DEFAULT_BIN_WIDTH = 0.040  # seconds
DEFAULT_WINDOW = 15  # bins (600 ms at the default bin width)
DEFAULT_FRACTIONS = (0.64, 0.16, 0.20)
DEFAULT_MIN_TRIALS = 3

_BUNDLE_MAGIC = b"SPKD"
_BUNDLE_VERSION = 1
_BUNDLE_HEADER = struct.Struct("<4sIII")  # magic, version, channels, window


@dataclass(frozen=True, eq=False)
class BinnedTrial:
    """Spike counts on a fixed grid: one row per channel, one column per bin."""

    trial_id: int
    object_id: int
    counts: np.ndarray  # (channels, n_bins) int64
    phase_bins: dict[str, int]
    bin_width: float

    @property
    def channels(self) -> int:
        return self.counts.shape[0]

    @property
    def n_bins(self) -> int:
        return self.counts.shape[1]

    def hold_region(self) -> tuple[int, int]:
        """Half-open bin range of the hold phase; open end falls back to n_bins."""
        if "hold" not in self.phase_bins:
            raise DataError(f"trial {self.trial_id} has no hold mark")
        return self.phase_bins["hold"], self.phase_bins.get("end", self.n_bins)


def bin_trial(trial: Trial, bin_width: float = DEFAULT_BIN_WIDTH) -> BinnedTrial:
    """Discretise one trial's spikes into half-open bins of ``bin_width`` seconds.

    The last partial bin is kept (ceil), so the total spike count is preserved.
    Phase marks map to the bin containing them.
    """
    if bin_width <= 0:
        raise ConfigError("bin_width must be positive")
    duration = trial.t_end - trial.t_start
    # Tolerate float noise so an exact multiple does not gain a phantom bin.
    n_bins = max(1, int(np.ceil(duration / bin_width - 1e-9)))

    counts = np.zeros((len(trial.spikes), n_bins), dtype=np.int64)
    for ch, times in enumerate(trial.spikes):
        arr = np.asarray(times, dtype=np.float64)
        if arr.size == 0:
            continue
        idx = np.floor((arr - trial.t_start) / bin_width).astype(np.int64)
        np.clip(idx, 0, n_bins - 1, out=idx)
        counts[ch] = np.bincount(idx, minlength=n_bins)

    phase_bins = {
        mark.name: min(int((mark.time - trial.t_start) / bin_width), n_bins - 1)
        for mark in trial.phases
    }
    return BinnedTrial(
        trial_id=trial.trial_id,
        object_id=trial.object_id,
        counts=counts,
        phase_bins=phase_bins,
        bin_width=bin_width,
    )


DROPPED = None  # class_of() result for pruned objects


@dataclass(frozen=True)
class ClassMap:
    """Raw object ids mapped onto merged, pruned, ordered class indices.

    Indices are ordered by (shape_group, size_index), so index-adjacent
    classes inside a shape group differ only in size.
    """

    index_of: dict[int, Optional[int]]
    class_keys: tuple[tuple[int, int], ...]  # class index -> (shape_group, size_index)

    @property
    def n_classes(self) -> int:
        return len(self.class_keys)

    def class_of(self, object_id: int) -> Optional[int]:
        return self.index_of.get(object_id, DROPPED)

    def shape_group_of(self, class_index: int) -> int:
        return self.class_keys[class_index][0]

    def retained_ids(self) -> set[int]:
        return {obj for obj, idx in self.index_of.items() if idx is not DROPPED}

    def label_names(self) -> list[str]:
        return [f"g{g}s{s}" for g, s in self.class_keys]

    def to_json_dict(self) -> dict:
        return {
            "index_of": {str(k): v for k, v in sorted(self.index_of.items())},
            "class_keys": [list(k) for k in self.class_keys],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ClassMap":
        return cls(
            index_of={int(k): v for k, v in data["index_of"].items()},
            class_keys=tuple((int(g), int(s)) for g, s in data["class_keys"]),
        )


def _merged_key(session: Session, object_id: int) -> tuple[int, int]:
    """Resolve duplicate_of links, then identify the object by its geometry.

    A duplicate cycle collapses onto its smallest member id, so every object
    in the cycle resolves to the same key.
    """
    seen = set()
    current = object_id
    while True:
        entry = session.catalog[current]
        if entry.duplicate_of is None:
            return (entry.shape_group, entry.size_index)
        if entry.duplicate_of in seen or entry.duplicate_of == current:
            root = min(seen | {current, entry.duplicate_of})
            root_entry = session.catalog[root]
            return (root_entry.shape_group, root_entry.size_index)
        seen.add(current)
        current = entry.duplicate_of


def build_class_map(session: Session, min_trials: int = DEFAULT_MIN_TRIALS) -> ClassMap:
    """Merge duplicate objects, drop under-represented classes, order the rest."""
    if min_trials < 1:
        raise ConfigError("min_trials must be >= 1")
    if not session.catalog:
        raise DataError("empty object catalog")

    key_of = {obj: _merged_key(session, obj) for obj in session.catalog}
    trials_per_key: dict[tuple[int, int], int] = {}
    for trial in session.trials:
        if trial.object_id not in key_of:
            raise DataError(f"trial {trial.trial_id} references unknown object {trial.object_id}")
        key = key_of[trial.object_id]
        trials_per_key[key] = trials_per_key.get(key, 0) + 1

    retained_keys = sorted(k for k, n in trials_per_key.items() if n >= min_trials)
    key_index = {k: i for i, k in enumerate(retained_keys)}
    index_of = {obj: key_index.get(key_of[obj], DROPPED) for obj in session.catalog}
    return ClassMap(index_of=index_of, class_keys=tuple(retained_keys))


@dataclass(frozen=True)
class SplitAssignment:
    """Trial-level partition assignment, deterministic under its seed."""

    assignment: dict[int, str]  # trial_id -> partition name
    seed: int
    fractions: tuple[float, float, float]

    def partition_of(self, trial_id: int) -> str:
        return self.assignment[trial_id]

    def trial_ids(self, partition: str) -> list[int]:
        return [t for t, p in self.assignment.items() if p == partition]


def largest_remainder(n: int, fractions: tuple[float, ...]) -> list[int]:
    """Apportion ``n`` items by fractions: floors first, leftovers by remainder."""
    quotas = [n * f for f in fractions]
    base = [int(np.floor(q)) for q in quotas]
    leftover = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def stratified_split(
    session: Session,
    class_map: ClassMap,
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> SplitAssignment:
    """Per-class shuffle + largest-remainder apportionment over retained trials.

    A post-pass moves one trial into any empty partition from that class's
    largest partition, so every retained class reaches all three partitions.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError("fractions must be three positive values")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")

    by_class: dict[int, list[int]] = {}
    for trial in session.trials:
        idx = class_map.class_of(trial.object_id)
        if idx is not DROPPED:
            by_class.setdefault(idx, []).append(trial.trial_id)

    rng = np.random.default_rng(seed)
    assignment: dict[int, str] = {}
    for idx in sorted(by_class):
        ids = by_class[idx]
        if len(ids) < 3:
            raise DataError(
                f"class {idx} has {len(ids)} trials; build_class_map should have dropped it"
            )
        ids = [ids[i] for i in rng.permutation(len(ids))]
        counts = largest_remainder(len(ids), fractions)

        # Guarantee >=1 per partition: steal from the largest bucket.
        for p in range(3):
            if counts[p] == 0:
                donor = max(range(3), key=lambda q: (counts[q], -q))
                counts[donor] -= 1
                counts[p] += 1

        cursor = 0
        for part, count in zip(PARTITIONS, counts):
            for tid in ids[cursor:cursor + count]:
                assignment[tid] = part
            cursor += count

    return SplitAssignment(assignment=assignment, seed=seed, fractions=tuple(fractions))


@dataclass(frozen=True, eq=False)
class SequenceSample:
    """One sliding-window sample; ``window`` is a view into the source counts."""

    window: np.ndarray  # (channels, W)
    label: int
    trial_id: int
    end_bin: int


def make_sequences(
    binned: BinnedTrial,
    window: int,
    class_map: ClassMap,
    task: str,
) -> list[SequenceSample]:
    """Slide a stride-1 window over one trial and label each position.

    Phase-detection emits every window, labelled GRASP when its last bin falls
    in the hold region and REST otherwise. Classification emits only in-region
    windows, labelled with the trial's class index; trials whose object was
    dropped yield nothing.
    """
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    if window < 1:
        raise ConfigError("window must be >= 1")
    if binned.n_bins < window:
        raise DataError(
            f"window {window} exceeds trial {binned.trial_id} length {binned.n_bins}"
        )

    hold_start, hold_end = binned.hold_region()
    samples: list[SequenceSample] = []
    if task == "phase_detection":
        for end_bin in range(window - 1, binned.n_bins):
            label = GRASP if hold_start <= end_bin < hold_end else REST
            samples.append(
                SequenceSample(
                    window=binned.counts[:, end_bin - window + 1:end_bin + 1],
                    label=label,
                    trial_id=binned.trial_id,
                    end_bin=end_bin,
                )
            )
    else:
        class_index = class_map.class_of(binned.object_id)
        if class_index is DROPPED:
            return []
        for end_bin in range(max(window - 1, hold_start), min(binned.n_bins, hold_end)):
            samples.append(
                SequenceSample(
                    window=binned.counts[:, end_bin - window + 1:end_bin + 1],
                    label=class_index,
                    trial_id=binned.trial_id,
                    end_bin=end_bin,
                )
            )
    return samples


@dataclass(frozen=True)
class PipelineConfig:
    bin_width: float = DEFAULT_BIN_WIDTH
    window: int = DEFAULT_WINDOW
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    min_trials: int = DEFAULT_MIN_TRIALS
    seed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "window": self.window,
            "fractions": list(self.fractions),
            "min_trials": self.min_trials,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PipelineConfig":
        return cls(
            bin_width=float(data.get("bin_width", DEFAULT_BIN_WIDTH)),
            window=int(data.get("window", DEFAULT_WINDOW)),
            fractions=tuple(float(f) for f in data.get("fractions", DEFAULT_FRACTIONS)),
            min_trials=int(data.get("min_trials", DEFAULT_MIN_TRIALS)),
            seed=int(data.get("seed", 0)),
        )


@dataclass(eq=False)
class SampleSet:
    """Dense arrays for one (task, partition) cell."""

    x: np.ndarray  # (n, channels, window) uint32 counts
    y: np.ndarray  # (n,) int64 labels
    trial_ids: np.ndarray  # (n,) int64
    end_bins: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return len(self.y)


def _empty_sampleset(channels: int, window: int) -> SampleSet:
    return SampleSet(
        x=np.zeros((0, channels, window), dtype=np.uint32),
        y=np.zeros(0, dtype=np.int64),
        trial_ids=np.zeros(0, dtype=np.int64),
        end_bins=np.zeros(0, dtype=np.int64),
    )


def _stack(samples: list[SequenceSample], channels: int, window: int) -> SampleSet:
    if not samples:
        return _empty_sampleset(channels, window)
    return SampleSet(
        x=np.stack([s.window for s in samples]).astype(np.uint32),
        y=np.array([s.label for s in samples], dtype=np.int64),
        trial_ids=np.array([s.trial_id for s in samples], dtype=np.int64),
        end_bins=np.array([s.end_bin for s in samples], dtype=np.int64),
    )


@dataclass(eq=False)
class DatasetBundle:
    """Everything downstream training and evaluation needs, plus its manifest."""

    sets: dict[str, dict[str, SampleSet]]  # task -> partition -> samples
    class_map: ClassMap
    split: SplitAssignment
    config: PipelineConfig
    channels: int
    manifest: dict = field(default_factory=dict)

    def get(self, task: str, partition: str) -> SampleSet:
        return self.sets[task][partition]


def _bundle_manifest(bundle: "DatasetBundle") -> dict:
    per_class: dict[str, dict[str, int]] = {}
    for part in PARTITIONS:
        y = bundle.sets["classification"][part].y
        for idx in range(bundle.class_map.n_classes):
            per_class.setdefault(str(idx), {})[part] = int(np.sum(y == idx))
    phase_counts = {
        part: {
            "rest": int(np.sum(bundle.sets["phase_detection"][part].y == REST)),
            "grasp": int(np.sum(bundle.sets["phase_detection"][part].y == GRASP)),
        }
        for part in PARTITIONS
    }
    return {
        "config": bundle.config.to_json_dict(),
        "channels": bundle.channels,
        "window": bundle.config.window,
        "class_map": bundle.class_map.to_json_dict(),
        "split": {str(k): v for k, v in sorted(bundle.split.assignment.items())},
        "split_seed": bundle.split.seed,
        "classification_counts": per_class,
        "phase_counts": phase_counts,
    }


def assemble_datasets(session: Session, config: PipelineConfig) -> DatasetBundle:
    """Run the full chain; sequences inherit their trial's partition."""
    class_map = build_class_map(session, config.min_trials)
    if class_map.n_classes == 0:
        raise DataError("no class survives pruning")
    split = stratified_split(session, class_map, config.fractions, config.seed)

    grouped: dict[str, dict[str, list[SequenceSample]]] = {
        task: {part: [] for part in PARTITIONS} for task in TASKS
    }
    for trial in session.trials:
        if trial.trial_id not in split.assignment:
            continue  # dropped class
        part = split.assignment[trial.trial_id]
        binned = bin_trial(trial, config.bin_width)
        for task in TASKS:
            grouped[task][part].extend(make_sequences(binned, config.window, class_map, task))

    sets = {
        task: {
            part: _stack(grouped[task][part], session.channel_count, config.window)
            for part in PARTITIONS
        }
        for task in TASKS
    }
    bundle = DatasetBundle(
        sets=sets,
        class_map=class_map,
        split=split,
        config=config,
        channels=session.channel_count,
    )
    bundle.manifest = _bundle_manifest(bundle)
    return bundle


def write_dataset_bundle(bundle: DatasetBundle, path: str | Path) -> None:
    """Write samples.bin (uint32 rows), index.csv and manifest.json."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    header = _BUNDLE_HEADER.pack(
        _BUNDLE_MAGIC, _BUNDLE_VERSION, bundle.channels, bundle.config.window
    )
    sample_id = 0
    with open(root / "samples.bin", "wb") as bin_fh, \
            open(root / "index.csv", "w", encoding="utf-8", newline="") as idx_fh:
        bin_fh.write(header)
        writer = csv.writer(idx_fh)
        writer.writerow(["sample_id", "partition", "task", "label", "trial_id", "end_bin"])
        for task in TASKS:
            for part in PARTITIONS:
                ss = bundle.sets[task][part]
                if len(ss):
                    bin_fh.write(np.ascontiguousarray(ss.x, dtype="<u4").tobytes())
                for i in range(len(ss)):
                    writer.writerow(
                        [sample_id, part, task, int(ss.y[i]),
                         int(ss.trial_ids[i]), int(ss.end_bins[i])]
                    )
                    sample_id += 1

    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(bundle.manifest, fh, indent=2)
        fh.write("\n")


def load_dataset_bundle(path: str | Path) -> DatasetBundle:
    """Inverse of :func:`write_dataset_bundle`."""
    root = Path(path)
    for name in ("samples.bin", "index.csv", "manifest.json"):
        if not (root / name).is_file():
            raise SessionFormatError(f"missing file: {root / name}")

    with open(root / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    config = PipelineConfig.from_json_dict(manifest["config"])
    class_map = ClassMap.from_json_dict(manifest["class_map"])
    split = SplitAssignment(
        assignment={int(k): v for k, v in manifest["split"].items()},
        seed=int(manifest["split_seed"]),
        fractions=config.fractions,
    )

    raw = (root / "samples.bin").read_bytes()
    if len(raw) < _BUNDLE_HEADER.size:
        raise SessionFormatError("samples.bin truncated")
    magic, version, channels, window = _BUNDLE_HEADER.unpack_from(raw)
    if magic != _BUNDLE_MAGIC:
        raise SessionFormatError("samples.bin: bad magic")
    if version != _BUNDLE_VERSION:
        raise SessionFormatError(f"samples.bin: unsupported version {version}")
    row_len = channels * window
    body = np.frombuffer(raw, dtype="<u4", offset=_BUNDLE_HEADER.size)
    if body.size % row_len:
        raise SessionFormatError("samples.bin: size not a whole number of rows")
    rows = body.reshape(-1, channels, window)

    index: dict[str, dict[str, list[int]]] = {
        task: {part: [] for part in PARTITIONS} for task in TASKS
    }
    labels: dict[str, dict[str, list[list[int]]]] = {
        task: {part: [] for part in PARTITIONS} for task in TASKS
    }
    with open(root / "index.csv", "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header_row = next(reader, None)
        if header_row != ["sample_id", "partition", "task", "label", "trial_id", "end_bin"]:
            raise SessionFormatError("index.csv: bad header")
        for row in reader:
            sid, part, task, label, trial_id, end_bin = row
            if task not in TASKS or part not in PARTITIONS:
                raise SessionFormatError(f"index.csv: bad row {row}")
            index[task][part].append(int(sid))
            labels[task][part].append([int(label), int(trial_id), int(end_bin)])
    if sum(len(v) for t in index.values() for v in t.values()) != len(rows):
        raise SessionFormatError("index.csv row count does not match samples.bin")

    sets = {}
    for task in TASKS:
        sets[task] = {}
        for part in PARTITIONS:
            ids = index[task][part]
            meta = np.array(labels[task][part], dtype=np.int64).reshape(-1, 3)
            sets[task][part] = SampleSet(
                x=rows[ids].copy(),
                y=meta[:, 0].copy(),
                trial_ids=meta[:, 1].copy(),
                end_bins=meta[:, 2].copy(),
            )

    bundle = DatasetBundle(
        sets=sets, class_map=class_map, split=split, config=config, channels=channels,
        manifest=manifest,
    )
    return bundle
