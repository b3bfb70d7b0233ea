"""Respiration analysis: peaks, inter-respiration intervals, block metrics."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import dsp
from .streams import Condition, SignalTrack

logger = logging.getLogger(__name__)

DEFAULT_PROMINENCE_NU = 2.0
BREATH_CUTOFF_HZ = 1.0
BREATH_FILTER_ORDER = 4
MIN_IRI_MS = 1000.0


class InsufficientPeaksError(ValueError):
    pass


@dataclass(frozen=True)
class BreathPeaks:
    peak_times: np.ndarray
    peak_values: np.ndarray

    def __len__(self) -> int:
        return int(self.peak_times.size)


@dataclass(frozen=True)
class IriSeries:
    intervals_ms: np.ndarray
    interval_end_times: np.ndarray

    def __post_init__(self):
        if np.any(self.intervals_ms <= MIN_IRI_MS):
            raise ValueError(f"IRIs must exceed {MIN_IRI_MS:.0f} ms; got min "
                             f"{self.intervals_ms.min():.1f} ms (was the signal lowpassed?)")

    def __len__(self) -> int:
        return int(self.intervals_ms.size)


@dataclass(frozen=True)
class BlockBreathMetrics:
    mean_z_iri: float
    var_z_iri: float
    n_intervals: int

    @property
    def defined(self) -> bool:
        return self.n_intervals > 0


def lowpass_breathing(track: SignalTrack, order: int = BREATH_FILTER_ORDER,
                      cutoff_hz: float = BREATH_CUTOFF_HZ) -> SignalTrack:
    """Zero-phase Butterworth lowpass at the fastest plausible breathing rate."""
    f = dsp.butter("lowpass", order, cutoff_hz, track.nominal_rate_hz)
    return track.with_values(dsp.filter_zero_phase(track.v, f))


def _local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima; a flat top is reported at its first sample."""
    if x.size < 3:
        return np.empty(0, dtype=int)
    dx = np.sign(np.diff(x))
    # Drop flat steps so a plateau reads as a single rise -> fall.
    nz = np.flatnonzero(dx)
    if nz.size < 2:
        return np.empty(0, dtype=int)
    s = dx[nz]
    turns = np.flatnonzero((s[:-1] > 0) & (s[1:] < 0))
    # peak sits just after the rising step
    return nz[turns] + 1


def _prev_ge(vals: list[float]) -> list[int]:
    """For each entry, nearest position to the left holding a value >= it (-1 if none)."""
    out = []
    stack: list[int] = []
    for i, v in enumerate(vals):
        while stack and vals[stack[-1]] < v:
            stack.pop()
        out.append(stack[-1] if stack else -1)
        stack.append(i)
    return out


def _next_gt(vals: list[float]) -> list[int]:
    """For each entry, nearest position to the right holding a value > it (len if none)."""
    n = len(vals)
    out = [n] * n
    stack: list[int] = []
    for i in range(n - 1, -1, -1):
        v = vals[i]
        while stack and vals[stack[-1]] <= v:
            stack.pop()
        out[i] = stack[-1] if stack else n
        stack.append(i)
    return out


def detect_breath_peaks(filtered: SignalTrack, min_prominence: float = DEFAULT_PROMINENCE_NU
                        ) -> BreathPeaks:
    """Local maxima that drop by ``min_prominence`` on both sides before a higher value.

    The walk to the right stops at the first strictly higher sample, the walk
    to the left at the first sample at least as high, so of two equal peaks
    with a shallow dip between them only the earlier survives.
    """
    x = filtered.v
    cand = _local_maxima(x)
    if cand.size == 0:
        return BreathPeaks(np.empty(0), np.empty(0))
    # The first higher sample on either side always lies on the flank of a
    # higher local maximum, and everything between that flank and the maximum
    # is at least as high, so the walks only need to visit local maxima.
    idx = cand.tolist()
    vals = x[cand].tolist()
    left = [idx[j] if j >= 0 else 0 for j in _prev_ge(vals)]
    right = [idx[j] if j < len(idx) else x.size for j in _next_gt(vals)]
    keep = []
    for i, lo, hi in zip(idx, left, right):
        left_min = x[lo:i].min() if i > lo else x[i]
        right_min = x[i + 1:hi].min() if hi > i + 1 else x[i]
        if x[i] - left_min >= min_prominence and x[i] - right_min >= min_prominence:
            keep.append(i)
    keep_idx = np.asarray(keep, dtype=int)
    return BreathPeaks(filtered.t[keep_idx].copy(), x[keep_idx].copy())


def compute_iri(peaks: BreathPeaks) -> IriSeries:
    if len(peaks) < 2:
        raise InsufficientPeaksError(f"need at least 2 breath peaks, got {len(peaks)}")
    pt = np.asarray(peaks.peak_times, dtype=float)
    return IriSeries(np.diff(pt) * 1000.0, pt[1:].copy())


def session_z_iri(block_iris: Sequence[IriSeries] | Mapping[object, IriSeries]) -> list[np.ndarray]:
    """z-score IRIs against the mean/std of the whole session, returned per block."""
    series = list(block_iris.values()) if isinstance(block_iris, Mapping) else list(block_iris)
    lengths = [len(s) for s in series]
    z = dsp.zscore(np.concatenate([s.intervals_ms for s in series]) if series else [])
    return np.split(z, np.cumsum(lengths)[:-1])


def block_breath_metrics(z_iri: np.ndarray, interval_end_times: np.ndarray,
                         blocks: Mapping[Condition, tuple[float, float]]
                         ) -> dict[Condition, BlockBreathMetrics]:
    """Per-block mean and population variance of z_IRI.

    Each interval belongs to the block containing its end time. Blocks with no
    intervals report NaN metrics and ``n_intervals == 0``.
    """
    z = np.asarray(z_iri, dtype=float)
    te = np.asarray(interval_end_times, dtype=float)
    out = {}
    for cond, (t0, t1) in blocks.items():
        sel = z[(te >= t0) & (te <= t1)]
        if sel.size == 0:
            logger.warning("block %s has no breath intervals; metrics undefined", cond.value)
            out[cond] = BlockBreathMetrics(math.nan, math.nan, 0)
        else:
            out[cond] = BlockBreathMetrics(float(sel.mean()), float(sel.var()), int(sel.size))
    return out


def baseline_rate_bpm(baseline: BreathPeaks | IriSeries) -> float:
    """Breaths per minute as ``60000 / mean(IRI in ms)``."""
    iri = compute_iri(baseline) if isinstance(baseline, BreathPeaks) else baseline
    if len(iri) == 0:
        raise InsufficientPeaksError("baseline block has no breath intervals")
    return 60000.0 / float(np.mean(iri.intervals_ms))


class DepthNormalizer:
    """Causal min-max normaliser of raw breath tension over a trailing window.

    ``update(t, v)`` returns ``(v - min) / (max - min)`` over samples with
    timestamps in ``(t - window_s, t]``; 0.5 while that range is below ``eps``.
    """

    def __init__(self, window_s: float = 30.0, eps: float = 0.1):
        if window_s <= 0:
            raise ValueError("window_s must be > 0")
        self.window_s = float(window_s)
        self.eps = float(eps)
        self._max: deque[tuple[float, float]] = deque()
        self._min: deque[tuple[float, float]] = deque()
        self.depth = 0.5

    def update(self, t: float, v: float) -> float:
        while self._max and self._max[-1][1] <= v:
            self._max.pop()
        self._max.append((t, v))
        while self._min and self._min[-1][1] >= v:
            self._min.pop()
        self._min.append((t, v))
        cutoff = t - self.window_s
        while self._max[0][0] <= cutoff:
            self._max.popleft()
        while self._min[0][0] <= cutoff:
            self._min.popleft()
        hi, lo = self._max[0][1], self._min[0][1]
        rng = hi - lo
        self.depth = 0.5 if rng < self.eps else (v - lo) / rng
        return self.depth


def realtime_depth(t, v, window_s: float = 30.0, eps: float = 0.1) -> np.ndarray:
    """Run :class:`DepthNormalizer` over a whole stream, one depth per sample."""
    norm = DepthNormalizer(window_s, eps)
    return np.fromiter((norm.update(ti, vi) for ti, vi in zip(np.asarray(t).tolist(),
                                                              np.asarray(v).tolist())),
                       dtype=float, count=len(t))
