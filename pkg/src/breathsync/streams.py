"""Time-series data model, block slicing, resampling and the JSONL session format.

Session files hold one JSON object per line::

    {"t": 12.5, "ch": "breathing", "v": 0.731}
    {"t": 100.0, "marker": "BlockStart", "cond": "FT"}

A sidecar manifest (``<participant>.manifest.json``) carries the participant
id, condition order, channel units/rates and the EDA clock offset.
"""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

RATE_TOLERANCE = 0.20
DEFAULT_EEG_RATE_HZ = 500.0
EEG_CHANNELS = tuple(f"eeg_ch{i:02d}" for i in range(1, 17))


class IngestError(ValueError):
    """Malformed or non-finite input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(ValueError):
    """A structurally valid recording violates a session invariant."""


class BlockNotFoundError(KeyError):
    pass


class IngestWarning(UserWarning):
    pass


class Unit(str, Enum):
    NU = "nu"
    MICROSIEMENS = "microsiemens"
    MICROVOLT = "microvolt"
    MILLIVOLT = "millivolt"
    UNITLESS = "unitless"


class Condition(str, Enum):
    BASELINE = "Baseline"
    FT = "FT"
    PT = "PT"
    PE = "PE"


INTERVENTIONS = (Condition.FT, Condition.PT, Condition.PE)


class MarkerKind(str, Enum):
    BLOCK_START = "BlockStart"
    WARNING = "WarningStimulus"
    IMPERATIVE = "ImperativeStimulus"
    KEY_PRESS = "KeyPress"
    BLOCK_END = "BlockEnd"


# Defaults used when a manifest does not describe a channel.
CHANNEL_DEFAULTS: dict[str, tuple[Unit, float]] = {
    "breathing": (Unit.NU, 17.0),
    "ecg": (Unit.MILLIVOLT, 250.0),
    "eda_left": (Unit.MICROSIEMENS, 4.0),
    "eda_right": (Unit.MICROSIEMENS, 4.0),
    **{ch: (Unit.MICROVOLT, DEFAULT_EEG_RATE_HZ) for ch in EEG_CHANNELS},
}


@dataclass(frozen=True)
class Sample:
    t: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValueError(f"sample time must be finite and >= 0, got {self.t}")
        if not math.isfinite(self.v):
            raise ValueError(f"sample value must be finite, got {self.v}")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SignalTrack:
    """One channel: strictly increasing times ``t`` (s) and values ``v``."""

    channel_id: str
    unit: Unit
    nominal_rate_hz: float
    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "unit", Unit(self.unit))
        object.__setattr__(self, "t", _frozen(self.t))
        object.__setattr__(self, "v", _frozen(self.v))
        if self.t.ndim != 1 or self.t.shape != self.v.shape:
            raise ValueError(f"{self.channel_id}: t and v must be 1-D of equal length")
        if not (self.nominal_rate_hz > 0 and math.isfinite(self.nominal_rate_hz)):
            raise ValueError(f"{self.channel_id}: nominal rate must be > 0")
        if self.t.size:
            if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.v))):
                raise ValueError(f"{self.channel_id}: non-finite time or value")
            if self.t[0] < 0:
                raise ValueError(f"{self.channel_id}: negative timestamp {self.t[0]}")
            if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
                raise ValueError(f"{self.channel_id}: timestamps must be strictly increasing")
        emp = self.empirical_rate_hz()
        if emp is not None and abs(emp - self.nominal_rate_hz) > RATE_TOLERANCE * self.nominal_rate_hz:
            warnings.warn(
                f"{self.channel_id}: nominal rate {self.nominal_rate_hz} Hz differs from "
                f"empirical median rate {emp:.4g} Hz by more than 20%",
                IngestWarning, stacklevel=3)

    def __len__(self) -> int:
        return int(self.t.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignalTrack):
            return NotImplemented
        return (self.channel_id == other.channel_id and self.unit == other.unit
                and self.nominal_rate_hz == other.nominal_rate_hz
                and np.array_equal(self.t, other.t) and np.array_equal(self.v, other.v))

    __hash__ = None  # type: ignore[assignment]

    @property
    def samples(self) -> list[Sample]:
        return [Sample(float(t), float(v)) for t, v in zip(self.t, self.v)]

    @property
    def span(self) -> tuple[float, float] | None:
        if not self.t.size:
            return None
        return float(self.t[0]), float(self.t[-1])

    def empirical_rate_hz(self) -> float | None:
        if self.t.size < 2:
            return None
        return float(1.0 / np.median(np.diff(self.t)))

    def between(self, t0: float, t1: float, closed: str = "both") -> SignalTrack:
        """Samples with ``t0 <= t <= t1``; ``closed="neither"`` excludes both ends."""
        if closed == "both":
            lo, hi = np.searchsorted(self.t, t0, "left"), np.searchsorted(self.t, t1, "right")
        elif closed == "neither":
            lo, hi = np.searchsorted(self.t, t0, "right"), np.searchsorted(self.t, t1, "left")
        else:
            raise ValueError(f"closed must be 'both' or 'neither', got {closed!r}")
        return self._sub(lo, max(lo, hi))

    def _sub(self, lo: int, hi: int) -> SignalTrack:
        # Subsets of a valid track are valid; skip the rate warning on short slices.
        new = object.__new__(SignalTrack)
        for name, val in (("channel_id", self.channel_id), ("unit", self.unit),
                          ("nominal_rate_hz", self.nominal_rate_hz),
                          ("t", self.t[lo:hi]), ("v", self.v[lo:hi])):
            object.__setattr__(new, name, val)
        return new

    def with_values(self, v) -> SignalTrack:
        return SignalTrack(self.channel_id, self.unit, self.nominal_rate_hz, self.t, v)


@dataclass(frozen=True)
class EventMarker:
    t: float
    kind: MarkerKind
    condition: Condition | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MarkerKind(self.kind))
        if self.condition is not None:
            object.__setattr__(self, "condition", Condition(self.condition))
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValueError(f"marker time must be finite and >= 0, got {self.t}")
        if self.kind is MarkerKind.BLOCK_START and self.condition is None:
            raise ValueError("BlockStart marker needs a condition")


@dataclass(frozen=True)
class SessionRecording:
    participant_id: str
    tracks: Mapping[str, SignalTrack]
    markers: tuple[EventMarker, ...]
    condition_order: tuple[Condition, ...]
    dominant_hand: str = "right"
    cz_channel: str = "eeg_ch01"

    def __post_init__(self):
        object.__setattr__(self, "tracks", dict(self.tracks))
        object.__setattr__(self, "markers", tuple(sorted(self.markers, key=lambda m: m.t)))
        object.__setattr__(self, "condition_order", tuple(Condition(c) for c in self.condition_order))
        self.validate()

    def validate(self) -> None:
        order = self.condition_order
        if not order or order[0] is not Condition.BASELINE or order.count(Condition.BASELINE) != 1:
            raise ValidationError(f"condition order must start with a single Baseline, got "
                                  f"{[c.value for c in order]}")
        for cond in INTERVENTIONS:
            if order.count(cond) != 1:
                raise ValidationError(f"condition {cond.value} must appear exactly once "
                                      f"(found {order.count(cond)})")
        blocks = self.block_bounds()
        starts = [c for c, _ in blocks.items()]
        if starts and starts != [c for c in order if c in blocks]:
            raise ValidationError("BlockStart markers disagree with condition_order")
        spans = [tr.span for tr in self.tracks.values() if tr.span is not None]
        for m in self.markers:
            if not any(lo <= m.t <= hi for lo, hi in spans):
                raise ValidationError(f"marker {m.kind.value} at t={m.t} lies outside every track span")

    def block_bounds(self) -> dict[Condition, tuple[float, float]]:
        """``{condition: (start, end)}`` in block order; checks nesting."""
        out: dict[Condition, tuple[float, float]] = {}
        open_cond: Condition | None = None
        open_t = 0.0
        last_end = -math.inf
        for m in self.markers:
            if m.kind is MarkerKind.BLOCK_START:
                if open_cond is not None:
                    raise ValidationError(f"BlockStart at t={m.t} while block {open_cond.value} is open")
                if m.condition in out:
                    raise ValidationError(f"duplicate block for condition {m.condition.value}")
                if m.t <= last_end:
                    raise ValidationError(f"block {m.condition.value} overlaps the previous block")
                open_cond, open_t = m.condition, m.t
            elif m.kind is MarkerKind.BLOCK_END:
                if open_cond is None:
                    raise ValidationError(f"BlockEnd at t={m.t} without an open block")
                out[open_cond] = (open_t, m.t)
                last_end = m.t
                open_cond = None
            elif open_cond is None and m.kind in (MarkerKind.WARNING, MarkerKind.IMPERATIVE):
                raise ValidationError(f"{m.kind.value} at t={m.t} outside any block")
        if open_cond is not None:
            raise ValidationError(f"block {open_cond.value} has no BlockEnd")
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SessionRecording):
            return NotImplemented
        return (self.participant_id == other.participant_id
                and self.condition_order == other.condition_order
                and self.markers == other.markers
                and self.dominant_hand == other.dominant_hand
                and self.cz_channel == other.cz_channel
                and self.tracks.keys() == other.tracks.keys()
                and all(self.tracks[k] == other.tracks[k] for k in self.tracks))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class BlockView:
    condition: Condition
    start: float
    end: float
    tracks: Mapping[str, SignalTrack]
    markers: tuple[EventMarker, ...]

    def relative_markers(self) -> list[tuple[float, EventMarker]]:
        return [(m.t - self.start, m) for m in self.markers]

    @property
    def duration(self) -> float:
        return self.end - self.start


def slice_block(rec: SessionRecording, cond: Condition | str) -> BlockView:
    cond = Condition(cond)
    bounds = rec.block_bounds()
    if cond not in bounds:
        raise BlockNotFoundError(f"session {rec.participant_id} has no {cond.value} block")
    t0, t1 = bounds[cond]
    tracks = {k: tr.between(t0, t1) for k, tr in rec.tracks.items()}
    markers = tuple(m for m in rec.markers if t0 <= m.t <= t1)
    return BlockView(cond, t0, t1, tracks, markers)


def slice_gaps(rec: SessionRecording) -> list[dict[str, SignalTrack]]:
    """Samples outside every block: before the first, between blocks, after the last."""
    edges = sorted(rec.block_bounds().values())
    cuts = [-math.inf] + [x for pair in edges for x in pair] + [math.inf]
    gaps = []
    for lo, hi in zip(cuts[0::2], cuts[1::2]):
        gaps.append({k: tr.between(lo, hi, closed="neither") for k, tr in rec.tracks.items()})
    return gaps


def resample_uniform(track: SignalTrack, fs: float) -> SignalTrack:
    """Linear interpolation onto ``t0 + k/fs`` for every grid point inside the track span."""
    if fs <= 0:
        raise ValueError(f"fs must be > 0, got {fs}")
    if len(track) < 2:
        raise ValueError(f"{track.channel_id}: resampling needs at least 2 samples")
    t0, t1 = float(track.t[0]), float(track.t[-1])
    n = int(math.floor((t1 - t0) * fs + 1e-9)) + 1
    grid = t0 + np.arange(n) / fs
    grid = grid[grid <= t1]
    values = np.interp(grid, track.t, track.v)
    return SignalTrack(track.channel_id, track.unit, float(fs), grid, values)


# --------------------------------------------------------------------------- IO


@dataclass
class SessionManifest:
    participant_id: str
    condition_order: list[str] = field(default_factory=list)
    channels: dict[str, dict] = field(default_factory=dict)
    eda_clock_offset_s: float = 0.0
    dominant_hand: str = "right"
    cz_channel: str = "eeg_ch01"

    @classmethod
    def from_dict(cls, d: Mapping) -> SessionManifest:
        known = {k: d[k] for k in ("participant_id", "condition_order", "channels",
                                   "eda_clock_offset_s", "dominant_hand", "cz_channel") if k in d}
        if "participant_id" not in known:
            raise IngestError("manifest lacks participant_id")
        return cls(**known)

    @classmethod
    def load(cls, path: str | os.PathLike) -> SessionManifest:
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise IngestError(f"invalid manifest JSON: {exc.msg}", exc.lineno, str(path)) from exc

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "condition_order": list(self.condition_order),
            "channels": {k: dict(v) for k, v in sorted(self.channels.items())},
            "eda_clock_offset_s": self.eda_clock_offset_s,
            "dominant_hand": self.dominant_hand,
            "cz_channel": self.cz_channel,
        }

    def channel_info(self, ch: str) -> tuple[Unit, float]:
        info = self.channels.get(ch, {})
        unit, rate = CHANNEL_DEFAULTS.get(ch, (Unit.UNITLESS, None))
        unit = Unit(info.get("unit", unit))
        rate = info.get("nominal_rate_hz", rate)
        return unit, rate


def _finite_number(x, what: str, lineno: int, source: str | None) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise IngestError(f"{what} must be a number, got {x!r}", lineno, source)
    x = float(x)
    if not math.isfinite(x):
        raise IngestError(f"non-finite {what}", lineno, source)
    return x


def _parse_constant(name: str):
    # json accepts NaN/Infinity literals by default; surface them as non-finite values.
    return float(name.replace("Infinity", "inf"))


def ingest(source: Iterable[str], manifest: SessionManifest | Mapping | None = None,
           source_name: str | None = None) -> SessionRecording:
    """Parse a record-per-line stream into a validated :class:`SessionRecording`.

    Duplicate timestamps within a channel keep the last value (with a warning);
    decreasing timestamps are an error.
    """
    if manifest is not None and not isinstance(manifest, SessionManifest):
        manifest = SessionManifest.from_dict(manifest)

    chans: dict[str, tuple[list[float], list[float]]] = {}
    markers: list[EventMarker] = []
    dup_count: dict[str, int] = {}
    loads = json.JSONDecoder(parse_constant=_parse_constant).decode

    lineno = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            rec = loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"malformed JSON ({exc.msg})", lineno, source_name) from exc
        if not isinstance(rec, dict) or "t" not in rec:
            raise IngestError("record must be an object with a 't' field", lineno, source_name)
        t = _finite_number(rec["t"], "timestamp", lineno, source_name)
        if "marker" in rec:
            try:
                markers.append(EventMarker(t, MarkerKind(rec["marker"]),
                                           None if rec.get("cond") is None else Condition(rec["cond"])))
            except ValueError as exc:
                raise IngestError(str(exc), lineno, source_name) from exc
            continue
        if "ch" not in rec or "v" not in rec:
            raise IngestError("sample record needs 'ch' and 'v'", lineno, source_name)
        ch = rec["ch"]
        if not isinstance(ch, str) or not ch:
            raise IngestError("channel id must be a non-empty string", lineno, source_name)
        v = _finite_number(rec["v"], "value", lineno, source_name)
        ts, vs = chans.setdefault(ch, ([], []))
        if ts:
            if t < ts[-1]:
                raise IngestError(f"timestamp {t} decreases on channel {ch}", lineno, source_name)
            if t == ts[-1]:
                vs[-1] = v
                dup_count[ch] = dup_count.get(ch, 0) + 1
                continue
        ts.append(t)
        vs.append(v)

    if not chans and not markers:
        raise IngestError("empty session", None, source_name)
    for ch, n in dup_count.items():
        warnings.warn(f"{ch}: {n} duplicate timestamp(s) collapsed (last value kept)",
                      IngestWarning, stacklevel=2)

    if manifest is None:
        manifest = SessionManifest(participant_id=source_name or "unknown")
    tracks: dict[str, SignalTrack] = {}
    for ch, (ts, vs) in chans.items():
        unit, rate = manifest.channel_info(ch)
        t_arr = np.asarray(ts)
        if ch.startswith("eda_") and manifest.eda_clock_offset_s:
            t_arr = t_arr + manifest.eda_clock_offset_s
        if rate is None:
            rate = float(1 / np.median(np.diff(t_arr))) if t_arr.size > 1 else 1.0
        try:
            tracks[ch] = SignalTrack(ch, unit, float(rate), t_arr, vs)
        except ValueError as exc:
            raise IngestError(str(exc), None, source_name) from exc

    order = manifest.condition_order or [m.condition.value for m in markers
                                         if m.kind is MarkerKind.BLOCK_START]
    return SessionRecording(manifest.participant_id, tracks, tuple(markers), tuple(order),
                            manifest.dominant_hand, manifest.cz_channel)


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize(rec: SessionRecording) -> Iterator[str]:
    """JSONL lines (no trailing newline): markers first, then channels in sorted order."""
    for m in rec.markers:
        cond = "null" if m.condition is None else f'"{m.condition.value}"'
        yield f'{{"t": {_fmt(m.t)}, "marker": "{m.kind.value}", "cond": {cond}}}'
    for ch in sorted(rec.tracks):
        tr = rec.tracks[ch]
        prefix = f', "ch": {json.dumps(ch)}, "v": '
        for t, v in zip(tr.t.tolist(), tr.v.tolist()):
            yield f'{{"t": {t!r}{prefix}{v!r}}}'


def manifest_for(rec: SessionRecording) -> SessionManifest:
    return SessionManifest(
        participant_id=rec.participant_id,
        condition_order=[c.value for c in rec.condition_order],
        channels={k: {"unit": tr.unit.value, "nominal_rate_hz": tr.nominal_rate_hz}
                  for k, tr in rec.tracks.items()},
        eda_clock_offset_s=0.0,
        dominant_hand=rec.dominant_hand,
        cz_channel=rec.cz_channel,
    )


def save_session(rec: SessionRecording, directory: str | os.PathLike) -> tuple[Path, Path]:
    """Write ``<pid>.jsonl`` and ``<pid>.manifest.json`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    data_path = d / f"{rec.participant_id}.jsonl"
    man_path = d / f"{rec.participant_id}.manifest.json"
    with open(data_path, "w", encoding="utf-8", newline="\n") as fh:
        buf: list[str] = []
        for line in serialize(rec):
            buf.append(line)
            if len(buf) >= 65536:
                fh.write("\n".join(buf) + "\n")
                buf.clear()
        if buf:
            fh.write("\n".join(buf) + "\n")
    with open(man_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest_for(rec).to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return data_path, man_path


def load_session(data_path: str | os.PathLike,
                 manifest_path: str | os.PathLike | None = None) -> SessionRecording:
    data_path = Path(data_path)
    if manifest_path is None:
        guess = data_path.with_name(data_path.name.removesuffix(".jsonl") + ".manifest.json")
        manifest_path = guess if guess.exists() else None
    manifest = SessionManifest.load(manifest_path) if manifest_path else None
    with open(data_path, encoding="utf-8") as fh:
        return ingest(fh, manifest, source_name=str(data_path))


def tracks_by_prefix(tracks: Mapping[str, SignalTrack], prefix: str) -> dict[str, SignalTrack]:
    return {k: v for k, v in sorted(tracks.items()) if k.startswith(prefix)}


def concat_values(tracks: Sequence[SignalTrack]) -> np.ndarray:
    return np.concatenate([tr.v for tr in tracks]) if tracks else np.empty(0)
