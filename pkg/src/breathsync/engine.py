"""Amplitude-envelope engine for the three intervention designs.

Loudness swings between 0.5 and 1.0 (linear amplitude), i.e. 6.02 dB, along a
piecewise square-root "panning" curve that peaks at full inhale.
"""

from __future__ import annotations

import math
import threading
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .breath import DepthNormalizer

GAIN_FLOOR = 0.5
GAIN_CEIL = 1.0
FT_RATE_BPM = 6.0
PT_FRACTION = 0.75
PT_CAP_BPM = 15.0
DEFAULT_CONTROL_RATE_HZ = 100.0
MIN_CONTROL_RATE_HZ = 20.0
AUDIO_RATE_HZ = 44100


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class FixedTempo:
    rate_bpm: float = FT_RATE_BPM
    name = "ft"


@dataclass(frozen=True)
class PersonalizedTempo:
    baseline_bpm: float
    name = "pt"

    def __post_init__(self):
        if not (self.baseline_bpm > 0 and math.isfinite(self.baseline_bpm)):
            raise EngineError(f"baseline_bpm must be > 0, got {self.baseline_bpm}")


@dataclass(frozen=True)
class PersonalizedEnvelope:
    window_s: float = 30.0
    eps: float = 0.1
    name = "pe"


EnvelopeMode = Union[FixedTempo, PersonalizedTempo, PersonalizedEnvelope]


def effective_rate_bpm(mode: EnvelopeMode) -> float:
    if isinstance(mode, FixedTempo):
        return float(mode.rate_bpm)
    if isinstance(mode, PersonalizedTempo):
        if mode.baseline_bpm <= 0:
            raise EngineError("baseline_bpm must be > 0")
        return min(PT_FRACTION * mode.baseline_bpm, PT_CAP_BPM)
    raise EngineError("Personalized Envelope has no fixed rate; it follows the breath stream")


def _shape(phase: np.ndarray, peak: float) -> np.ndarray:
    rising = phase < peak
    out = np.empty_like(phase)
    out[rising] = np.sqrt(phase[rising] / peak)
    out[~rising] = np.sqrt((1.0 - phase[~rising]) / (1.0 - peak))
    return out


def envelope_gain(phase, peak: float = 0.5):
    """Gain for a cycle phase in [0, 1): ``0.5 + 0.5*sqrt(phase/peak)`` rising, mirrored falling."""
    if not 0 < peak < 1:
        raise EngineError(f"peak position must be in (0, 1), got {peak}")
    ph = np.asarray(phase, dtype=float)
    if np.any(~np.isfinite(ph)) or np.any(ph < 0) or np.any(ph >= 1):
        raise EngineError("cycle phase must lie in [0, 1)")
    g = GAIN_FLOOR + (GAIN_CEIL - GAIN_FLOOR) * _shape(np.atleast_1d(ph), peak)
    return float(g[0]) if ph.ndim == 0 else g


def depth_gain(depth):
    """Gain for a normalised breath depth in [0, 1]: ``0.5 + 0.5*sqrt(depth)``."""
    d = np.asarray(depth, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d < 0) or np.any(d > 1):
        raise EngineError("breath depth must lie in [0, 1]")
    g = GAIN_FLOOR + (GAIN_CEIL - GAIN_FLOOR) * np.sqrt(d)
    return float(g) if d.ndim == 0 else g


@dataclass(frozen=True)
class GainCurve:
    control_rate_hz: float
    gains: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        g = np.array(self.gains, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)
        if g.size and (g.min() < GAIN_FLOOR - 1e-12 or g.max() > GAIN_CEIL + 1e-12):
            raise EngineError("gains must lie in [0.5, 1.0]")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.gains.size) / self.control_rate_hz

    @property
    def duration(self) -> float:
        return self.gains.size / self.control_rate_hz

    def __len__(self) -> int:
        return int(self.gains.size)


def _check_rate(control_rate: float) -> None:
    if control_rate < MIN_CONTROL_RATE_HZ:
        raise EngineError(f"control rate must be >= {MIN_CONTROL_RATE_HZ} Hz, got {control_rate}")


def tempo_phase(n_ticks: int, rate_bpm: float, control_rate: float) -> np.ndarray:
    """Cycle phase after each tick; advances ``rate/60/control_rate`` per tick from 0."""
    step = rate_bpm / 60.0 / control_rate
    return np.mod(np.arange(n_ticks) * step, 1.0)


def render_gain_curve(mode: EnvelopeMode, duration: float | None = None,
                      breath_t=None, breath_v=None,
                      control_rate: float = DEFAULT_CONTROL_RATE_HZ,
                      peak: float = 0.5, t0: float | None = None) -> GainCurve:
    """Sample-accurate gain curve for a whole block.

    Fixed/Personalized Tempo need ``duration``; Personalized Envelope needs the
    breath stream (``breath_t``, ``breath_v``) and ticks over its span, each
    tick holding the depth of the latest breath sample at or before it.
    """
    _check_rate(control_rate)
    if isinstance(mode, PersonalizedEnvelope):
        if breath_t is None or breath_v is None or len(breath_t) == 0:
            raise EngineError("Personalized Envelope needs a breathing stream")
        eng = EnvelopeEngine(mode, control_rate, peak)
        bt = np.asarray(breath_t, dtype=float)
        bv = np.asarray(breath_v, dtype=float)
        start = float(bt[0]) if t0 is None else t0
        end = bt[-1] if duration is None else start + duration
        n = int(math.floor((end - start) * control_rate + 1e-9)) + 1
        ticks = start + np.arange(n) / control_rate
        gains = np.empty(n)
        j = 0
        for k, tk in enumerate(ticks.tolist()):
            while j < bt.size and bt[j] <= tk + 1e-12:
                eng.push_breath(bt[j], bv[j])
                j += 1
            gains[k] = eng.tick()
        return GainCurve(control_rate, gains, float(start))
    if duration is None or duration < 0:
        raise EngineError("tempo modes need a non-negative duration")
    n = int(round(duration * control_rate))
    phase = tempo_phase(n, effective_rate_bpm(mode), control_rate)
    return GainCurve(control_rate, envelope_gain(phase, peak) if n else np.empty(0),
                     0.0 if t0 is None else t0)


class LatestValue:
    """Single-producer/single-consumer slot with latest-value semantics."""

    def __init__(self, value: float):
        self._lock = threading.Lock()
        self._value = value

    def put(self, value: float) -> None:
        with self._lock:
            self._value = value

    def get(self) -> float:
        with self._lock:
            return self._value


@dataclass
class EnvelopeEngine:
    """Stateful control-rate engine.

    ``tick()`` never waits for breath data: under PE it holds the last depth.
    The latest gain is published to ``output`` for a consumer thread.
    """

    mode: EnvelopeMode
    control_rate_hz: float = DEFAULT_CONTROL_RATE_HZ
    peak: float = 0.5
    phase: float = 0.0
    output: LatestValue = field(default_factory=lambda: LatestValue(GAIN_FLOOR))

    def __post_init__(self):
        _check_rate(self.control_rate_hz)
        self._depth = 0.5
        self._normalizer = (DepthNormalizer(self.mode.window_s, self.mode.eps)
                            if isinstance(self.mode, PersonalizedEnvelope) else None)
        self._ticks = 0
        if self._normalizer is None:
            self._step = effective_rate_bpm(self.mode) / 60.0 / self.control_rate_hz

    def push_breath(self, t: float, v: float) -> float:
        if self._normalizer is None:
            raise EngineError("breath samples only drive the Personalized Envelope mode")
        self._depth = self._normalizer.update(t, v)
        return self._depth

    def tick(self) -> float:
        if self._normalizer is not None:
            g = depth_gain(min(max(self._depth, 0.0), 1.0))
        else:
            # phase from the tick count avoids accumulated rounding drift
            self.phase = (self._ticks * self._step) % 1.0
            g = envelope_gain(self.phase, self.peak)
        self._ticks += 1
        self.output.put(g)
        return g

    @property
    def stimulus_phase(self) -> float:
        """Phase of the most recent tick in radians, 0 at the loudness trough."""
        return 2 * math.pi * self.phase


def apply_gain(audio, curve: GainCurve, sample_rate: int = AUDIO_RATE_HZ) -> np.ndarray:
    """Multiply audio by the gain curve, linearly interpolated between control ticks."""
    x = np.asarray(audio, dtype=float)
    audio_dur = x.size / sample_rate
    if audio_dur > curve.duration + 1.0 / curve.control_rate_hz + 1e-9:
        raise EngineError(f"gain curve ({curve.duration:.3f} s) does not span the audio "
                          f"({audio_dur:.3f} s)")
    if x.size == 0:
        return x.copy()
    t_audio = curve.t0 + np.arange(x.size) / sample_rate
    return x * np.interp(t_audio, curve.times, curve.gains)


def synth_drone(duration: float, sample_rate: int = AUDIO_RATE_HZ,
                freqs=(110.0, 164.81, 220.0, 329.63), seed: int = 0) -> np.ndarray:
    """Soft additive drone peaking at 0.8 full scale."""
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    rng = np.random.default_rng(seed)
    out = np.zeros(n)
    for i, f in enumerate(freqs):
        detune = 1 + 0.002 * rng.standard_normal()
        out += np.sin(2 * np.pi * f * detune * t + rng.uniform(0, 2 * np.pi)) / (i + 1)
    if n:
        out *= 0.8 / np.max(np.abs(out))
    return out


def write_wav(path: str | Path, audio, sample_rate: int = AUDIO_RATE_HZ) -> None:
    """16-bit PCM mono."""
    pcm = np.clip(np.round(np.asarray(audio) * 32767), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())
