"""Recording-session data model and its plain-text disk format.

A session directory holds two files:

* ``session.json`` -- session id, channel count, object catalog and per-trial
  metadata (bounds, phase marks, grasped object id).
* ``spikes.csv`` -- one spike per row (``trial_id,channel,time_s``), sorted by
  (trial_id, channel, time_s). All times are decimal seconds from the start of
  the recording session.

Loading is strict: malformed or inconsistent data is rejected, never repaired.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import SessionFormatError

PHASE_ORDER = ("fixation", "cue", "planning", "movement", "hold", "end")
_PHASE_RANK = {name: i for i, name in enumerate(PHASE_ORDER)}


@dataclass(frozen=True)
class PhaseMark:
    """A named experiment phase onset, in seconds from session start."""

    name: str
    time: float


@dataclass(frozen=True, eq=False)
class Trial:
    """One grasp episode: bounds, phase marks and per-channel spike times.

    ``spikes`` holds one sorted float64 array per channel; arrays are treated
    as read-only after construction.
    """

    trial_id: int
    object_id: int
    t_start: float
    t_end: float
    phases: tuple[PhaseMark, ...]
    spikes: tuple[np.ndarray, ...]

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def phase_time(self, name: str) -> Optional[float]:
        for mark in self.phases:
            if mark.name == name:
                return mark.time
        return None

    def total_spikes(self) -> int:
        return sum(len(ch) for ch in self.spikes)


@dataclass(frozen=True)
class CatalogEntry:
    """Physical geometry of one catalog object, plus optional duplicate link."""

    shape_group: int
    size_index: int
    duplicate_of: Optional[int] = None


@dataclass(frozen=True, eq=False)
class Session:
    """One recording session: trials plus the object catalog."""

    session_id: str
    channel_count: int
    trials: tuple[Trial, ...]
    catalog: dict[int, CatalogEntry] = field(default_factory=dict)

    @property
    def n_trials(self) -> int:
        return len(self.trials)


@dataclass(frozen=True)
class Violation:
    """One broken invariant, naming the rule and where it was found."""

    rule: str
    trial_id: Optional[int] = None
    channel: Optional[int] = None
    detail: str = ""

    def __str__(self) -> str:
        where = []
        if self.trial_id is not None:
            where.append(f"trial {self.trial_id}")
        if self.channel is not None:
            where.append(f"channel {self.channel}")
        loc = " @ " + ", ".join(where) if where else ""
        return f"{self.rule}{loc}: {self.detail}"


def _validate_trial(trial: Trial, channel_count: int) -> list[Violation]:
    out: list[Violation] = []
    tid = trial.trial_id
    if not trial.t_end > trial.t_start:
        out.append(Violation("trial-bounds", tid, detail="t_end must exceed t_start"))

    names = [m.name for m in trial.phases]
    for name in names:
        if name not in _PHASE_RANK:
            out.append(Violation("unknown-phase", tid, detail=f"unknown phase name {name!r}"))
    known = [m for m in trial.phases if m.name in _PHASE_RANK]
    if len(set(names)) != len(names):
        out.append(Violation("phase-order", tid, detail="duplicate phase name"))
    ranks = [_PHASE_RANK[m.name] for m in known]
    if ranks != sorted(ranks):
        out.append(Violation("phase-order", tid, detail="phases out of canonical order"))
    times = [m.time for m in known]
    if any(b < a for a, b in zip(times, times[1:])):
        out.append(Violation("phase-order", tid, detail="phase times decrease"))
    for mark in known:
        if not (trial.t_start < mark.time < trial.t_end):
            out.append(
                Violation(
                    "phase-bounds", tid,
                    detail=f"{mark.name} at {mark.time} outside ({trial.t_start}, {trial.t_end})",
                )
            )
    by_name = {m.name: m.time for m in known}
    if "hold" not in by_name:
        out.append(Violation("missing-hold", tid, detail="hold phase mark is required"))
    elif "end" in by_name and not by_name["end"] > by_name["hold"]:
        out.append(Violation("phase-order", tid, detail="end mark must come after hold"))

    if len(trial.spikes) != channel_count:
        out.append(
            Violation(
                "channel-count", tid,
                detail=f"trial has {len(trial.spikes)} channels, session declares {channel_count}",
            )
        )
    for ch, spikes in enumerate(trial.spikes):
        arr = np.asarray(spikes)
        if arr.size == 0:
            continue
        if np.any(np.diff(arr) < 0):
            out.append(Violation("unsorted-spikes", tid, ch, "spike times not ascending"))
        if arr[0] < trial.t_start or arr[-1] >= trial.t_end:
            out.append(
                Violation(
                    "spike-bounds", tid, ch,
                    f"spike outside trial bounds [{trial.t_start}, {trial.t_end})",
                )
            )
    return out


def validate_session(session: Session) -> list[Violation]:
    """Check every session invariant; returns [] iff the session is valid.

    Violations are data, not errors: callers decide whether to raise.
    """
    out: list[Violation] = []
    ids = [t.trial_id for t in session.trials]
    if len(set(ids)) != len(ids):
        out.append(Violation("duplicate-trial-id", detail="trial ids are not unique"))
    if session.channel_count <= 0:
        out.append(Violation("channel-count", detail="channel_count must be positive"))

    spans = sorted((t.t_start, t.t_end, t.trial_id) for t in session.trials)
    for (s0, e0, id0), (s1, e1, id1) in zip(spans, spans[1:]):
        if s1 < e0:
            out.append(
                Violation("trial-overlap", id1, detail=f"trial {id1} overlaps trial {id0}")
            )

    for obj_id, entry in session.catalog.items():
        if entry.duplicate_of is not None and entry.duplicate_of not in session.catalog:
            out.append(
                Violation(
                    "dangling-duplicate",
                    detail=f"object {obj_id} duplicates unknown object {entry.duplicate_of}",
                )
            )

    for trial in session.trials:
        if trial.object_id not in session.catalog:
            out.append(
                Violation(
                    "unknown-object", trial.trial_id,
                    detail=f"object {trial.object_id} not in catalog",
                )
            )
        out.extend(_validate_trial(trial, session.channel_count))
    return out


def sessions_equal(a: Session, b: Session) -> bool:
    """Field-by-field equality, comparing spike arrays exactly."""
    if (a.session_id, a.channel_count, a.catalog) != (b.session_id, b.channel_count, b.catalog):
        return False
    if len(a.trials) != len(b.trials):
        return False
    for ta, tb in zip(a.trials, b.trials):
        if (ta.trial_id, ta.object_id, ta.t_start, ta.t_end, ta.phases) != (
            tb.trial_id, tb.object_id, tb.t_start, tb.t_end, tb.phases,
        ):
            return False
        if len(ta.spikes) != len(tb.spikes):
            return False
        for ca, cb in zip(ta.spikes, tb.spikes):
            if not np.array_equal(ca, cb):
                return False
    return True


def save_session(session: Session, path: str | Path) -> None:
    """Write the session directory such that :func:`load_session` inverts it.

    Numeric values are serialized with full decimal precision (shortest
    round-trip repr), so save -> load -> save is byte-identical.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    manifest = {
        "session_id": session.session_id,
        "channel_count": session.channel_count,
        "catalog": [
            {
                "object_id": obj_id,
                "shape_group": entry.shape_group,
                "size_index": entry.size_index,
                "duplicate_of": entry.duplicate_of,
            }
            for obj_id, entry in sorted(session.catalog.items())
        ],
        "trials": [
            {
                "trial_id": t.trial_id,
                "object_id": t.object_id,
                "t_start": t.t_start,
                "t_end": t.t_end,
                "phases": [{"name": m.name, "time": m.time} for m in t.phases],
            }
            for t in session.trials
        ],
    }
    with open(root / "session.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")

    with open(root / "spikes.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "channel", "time_s"])
        for trial in sorted(session.trials, key=lambda t: t.trial_id):
            for ch, spikes in enumerate(trial.spikes):
                for t in spikes:
                    writer.writerow([trial.trial_id, ch, repr(float(t))])


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise SessionFormatError(message)


def _as_int(value: object, what: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), f"{what} must be an integer")
    return value  # type: ignore[return-value]


def _as_float(value: object, what: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{what} must be a number")
    return float(value)  # type: ignore[arg-type]


def load_session(path: str | Path) -> Session:
    """Load and validate a session directory.

    Raises :class:`SessionFormatError` for missing files, malformed records,
    spikes outside trial bounds, unsorted spikes or unknown phase names.
    """
    root = Path(path)
    manifest_path = root / "session.json"
    spikes_path = root / "spikes.csv"
    _require(manifest_path.is_file(), f"missing file: {manifest_path}")
    _require(spikes_path.is_file(), f"missing file: {spikes_path}")

    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SessionFormatError(f"malformed record in session.json: {exc}") from exc

    _require(isinstance(manifest, dict), "session.json must hold an object")
    for key in ("session_id", "channel_count", "catalog", "trials"):
        _require(key in manifest, f"session.json missing key {key!r}")

    channel_count = _as_int(manifest["channel_count"], "channel_count")
    catalog: dict[int, CatalogEntry] = {}
    for rec in manifest["catalog"]:
        obj_id = _as_int(rec.get("object_id"), "object_id")
        _require(obj_id not in catalog, f"malformed record: duplicate catalog object {obj_id}")
        dup = rec.get("duplicate_of")
        catalog[obj_id] = CatalogEntry(
            shape_group=_as_int(rec.get("shape_group"), "shape_group"),
            size_index=_as_int(rec.get("size_index"), "size_index"),
            duplicate_of=None if dup is None else _as_int(dup, "duplicate_of"),
        )

    spikes_by_trial: dict[int, dict[int, list[float]]] = {}
    with open(spikes_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        _require(header == ["trial_id", "channel", "time_s"],
                 "malformed record: bad spikes.csv header")
        prev_key: tuple[int, int, float] | None = None
        for lineno, row in enumerate(reader, start=2):
            _require(len(row) == 3, f"malformed record at spikes.csv line {lineno}")
            try:
                tid, ch, t = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise SessionFormatError(
                    f"malformed record at spikes.csv line {lineno}: {exc}"
                ) from exc
            key = (tid, ch, t)
            if prev_key is not None:
                _require(key >= prev_key,
                         f"unsorted spikes at spikes.csv line {lineno}")
            prev_key = key
            _require(0 <= ch < channel_count,
                     f"malformed record at spikes.csv line {lineno}: channel {ch} out of range")
            spikes_by_trial.setdefault(tid, {}).setdefault(ch, []).append(t)

    trials: list[Trial] = []
    seen_ids: set[int] = set()
    for rec in manifest["trials"]:
        tid = _as_int(rec.get("trial_id"), "trial_id")
        phases = []
        for mark in rec.get("phases", []):
            name = mark.get("name")
            _require(name in _PHASE_RANK, f"unknown phase name {name!r} in trial {tid}")
            phases.append(PhaseMark(name=name, time=_as_float(mark.get("time"), "phase time")))
        per_channel = spikes_by_trial.pop(tid, {})
        trials.append(
            Trial(
                trial_id=tid,
                object_id=_as_int(rec.get("object_id"), "object_id"),
                t_start=_as_float(rec.get("t_start"), "t_start"),
                t_end=_as_float(rec.get("t_end"), "t_end"),
                phases=tuple(phases),
                spikes=tuple(
                    np.asarray(per_channel.get(ch, []), dtype=np.float64)
                    for ch in range(channel_count)
                ),
            )
        )
        seen_ids.add(tid)

    _require(not spikes_by_trial,
             f"malformed record: spikes for unknown trial ids {sorted(spikes_by_trial)}")

    session = Session(
        session_id=str(manifest["session_id"]),
        channel_count=channel_count,
        trials=tuple(trials),
        catalog=catalog,
    )
    violations = validate_session(session)
    if violations:
        summary = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        raise SessionFormatError(f"invalid session: {summary}{more}")
    return session
