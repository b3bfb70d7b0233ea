"""Time-domain, frequency-domain and Poincaré HRV features."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import dsp
from ..streams import SignalTrack, Unit, resample_uniform

MIN_SPAN_S = 120.0
TACHOGRAM_FS = 4.0
LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.40)


class BlockExcluded(Exception):
    """Too little valid IBI data; the block is left out rather than mis-computed."""


@dataclass(frozen=True)
class HrvFeatures:
    sdnn_ms: float
    rmssd_ms: float
    pnn50_fraction: float
    lf_power: float
    hf_power: float
    lf_hf_ratio: float
    sd1_ms: float
    sd2_ms: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def _spectral(ibi: np.ndarray) -> tuple[float, float]:
    t = np.cumsum(ibi) / 1000.0
    tach = SignalTrack("tachogram", Unit.UNITLESS, 1000.0 / float(np.median(ibi)), t - t[0], ibi)
    uniform = resample_uniform(tach, TACHOGRAM_FS).v
    seg = min(256, uniform.size)
    freqs, pxx = dsp.welch_psd(uniform - uniform.mean(), TACHOGRAM_FS, segment_len=seg)
    return dsp.band_power(freqs, pxx, *LF_BAND), dsp.band_power(freqs, pxx, *HF_BAND)


def hrv_features(ibi_ms, min_span_s: float = MIN_SPAN_S) -> HrvFeatures:
    """HRV features of a block's valid inter-beat intervals (ms).

    Raises :class:`BlockExcluded` when the intervals cover less than
    ``min_span_s`` seconds.
    """
    ibi = np.asarray(ibi_ms, dtype=float)
    span = ibi.sum() / 1000.0
    if ibi.size < 3 or span < min_span_s:
        raise BlockExcluded(f"only {span:.1f} s of valid IBIs (< {min_span_s:.0f} s)")
    diffs = np.diff(ibi)
    sdnn = float(np.std(ibi))
    rmssd = float(np.sqrt(np.mean(diffs**2)))
    pnn50 = float(np.mean(np.abs(diffs) > 50.0))
    lf, hf = _spectral(ibi)
    if hf > 0:
        ratio = lf / hf
    else:
        ratio = math.inf if lf > 0 else 0.0
    sd1 = rmssd / math.sqrt(2)
    sd2 = math.sqrt(max(2 * sdnn**2 - sd1**2, 0.0))
    return HrvFeatures(sdnn, rmssd, pnn50, lf, hf, ratio, sd1, sd2)
