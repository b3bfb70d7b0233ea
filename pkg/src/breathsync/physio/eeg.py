"""EEG cleaning, warning-locked epochs and CNV window means."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .. import dsp
from ..streams import EventMarker, MarkerKind, SignalTrack

logger = logging.getLogger(__name__)

HIGHPASS_HZ = 0.05
HIGHPASS_ORDER = 2
KURTOSIS_LIMIT = 5.0
EPOCH_WINDOW_S = (-1.0, 4.0)
BASELINE_WINDOW_S = (-0.5, 0.0)
REJECT_UV = 50.0
CNV_WINDOWS_S = {
    "early": (0.4, 1.4),
    "mid": (1.5, 2.6),
    "late": (2.6, 3.7),
}


class CnvUnavailable(Exception):
    """Cz was rejected or no epoch survived; CNV is flagged rather than estimated."""


@dataclass(frozen=True)
class CleanedEeg:
    fs: float
    t: np.ndarray
    channels: Mapping[str, np.ndarray]
    rejected: tuple[str, ...]
    kurtosis: Mapping[str, float]

    def channel(self, name: str) -> np.ndarray:
        if name not in self.channels:
            raise CnvUnavailable(f"channel {name} was rejected or is absent")
        return self.channels[name]


@dataclass(frozen=True)
class Epochs:
    fs: float
    data: np.ndarray            # (n_accepted, n_samples), baseline-corrected
    onsets: np.ndarray          # stimulus times of accepted epochs
    n_rejected: int

    @property
    def times(self) -> np.ndarray:
        return EPOCH_WINDOW_S[0] + np.arange(self.data.shape[1]) / self.fs

    def __len__(self) -> int:
        return int(self.data.shape[0])


@dataclass(frozen=True)
class CnvAmplitudes:
    early_uv: float
    mid_uv: float
    late_uv: float


def highpass_by_subtraction(x, fs: float, cutoff_hz: float = HIGHPASS_HZ,
                            order: int = HIGHPASS_ORDER) -> np.ndarray:
    """``x - lowpass(x)`` with a zero-phase Butterworth lowpass."""
    arr = np.asarray(x, dtype=float)
    return arr - dsp.filter_zero_phase(arr, dsp.butter("lowpass", order, cutoff_hz, fs))


def average_reference(data: np.ndarray) -> np.ndarray:
    """Subtract the instantaneous mean across channels (rows)."""
    return data - data.mean(axis=0, keepdims=True)


def eeg_preprocess(channels: Mapping[str, SignalTrack] | Iterable[SignalTrack],
                   kurtosis_limit: float = KURTOSIS_LIMIT, excess: bool = True) -> CleanedEeg:
    """High-pass by subtraction, drop channels with kurtosis above the limit, average-reference."""
    tracks = list(channels.values()) if isinstance(channels, Mapping) else list(channels)
    if not tracks:
        raise ValueError("no EEG channels")
    ref = tracks[0]
    for tr in tracks[1:]:
        if len(tr) != len(ref) or not np.array_equal(tr.t, ref.t):
            raise ValueError(f"EEG channel {tr.channel_id} is not on the same time grid as {ref.channel_id}")
    fs = ref.nominal_rate_hz
    hp = {tr.channel_id: highpass_by_subtraction(tr.v, fs) for tr in tracks}
    kurt = {k: dsp.kurtosis_excess(v, excess=excess) if np.ptp(v) > 0 else 0.0 for k, v in hp.items()}
    kept = [k for k in hp if kurt[k] <= kurtosis_limit]
    rejected = tuple(k for k in hp if kurt[k] > kurtosis_limit)
    if rejected:
        logger.info("rejected EEG channels by kurtosis: %s", ", ".join(rejected))
    if len(kept) < 2:
        raise ValueError(f"only {len(kept)} EEG channel(s) survive kurtosis rejection")
    stacked = average_reference(np.vstack([hp[k] for k in kept]))
    return CleanedEeg(fs, ref.t, dict(zip(kept, stacked)), rejected, kurt)


def epoch_and_reject(signal, t: np.ndarray, fs: float, markers: Iterable[EventMarker | float],
                     reject_uv: float = REJECT_UV) -> Epochs:
    """Cut ``[-1, 4)`` s epochs around each warning stimulus, subtract the
    ``[-0.5, 0)`` s mean and drop epochs exceeding ``reject_uv`` anywhere."""
    x = np.asarray(signal, dtype=float)
    t = np.asarray(t, dtype=float)
    onsets = []
    for m in markers:
        if isinstance(m, EventMarker):
            if m.kind is MarkerKind.WARNING:
                onsets.append(m.t)
        else:
            onsets.append(float(m))
    pre = int(round(-EPOCH_WINDOW_S[0] * fs))
    n = int(round((EPOCH_WINDOW_S[1] - EPOCH_WINDOW_S[0]) * fs))
    b0 = int(round((BASELINE_WINDOW_S[0] - EPOCH_WINDOW_S[0]) * fs))
    b1 = int(round((BASELINE_WINDOW_S[1] - EPOCH_WINDOW_S[0]) * fs))
    kept, kept_onsets, rejected = [], [], 0
    for onset in onsets:
        i0 = int(np.searchsorted(t, onset - 1e-9)) - pre
        if i0 < 0 or i0 + n > x.size:
            logger.debug("epoch at %.3f s runs off the recording; skipped", onset)
            continue
        ep = x[i0:i0 + n] - x[i0 + b0:i0 + b1].mean()
        if np.max(np.abs(ep)) > reject_uv:
            rejected += 1
            continue
        kept.append(ep)
        kept_onsets.append(onset)
    data = np.vstack(kept) if kept else np.empty((0, n))
    return Epochs(fs, data, np.asarray(kept_onsets), rejected)


def cnv_mean_amplitudes(epochs: Epochs) -> CnvAmplitudes:
    """Grand-average the accepted epochs, then average each CNV window."""
    if len(epochs) == 0:
        raise CnvUnavailable("no accepted epochs")
    erp = epochs.data.mean(axis=0)
    out = []
    for lo, hi in CNV_WINDOWS_S.values():
        i0 = int(round((lo - EPOCH_WINDOW_S[0]) * epochs.fs))
        i1 = int(round((hi - EPOCH_WINDOW_S[0]) * epochs.fs))
        out.append(float(erp[i0:i1].mean()))
    return CnvAmplitudes(*out)
