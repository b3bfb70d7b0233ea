"""Tonic EDA: lowpass, session z-score, per-block slope."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import dsp
from ..streams import SignalTrack

EDA_CUTOFF_HZ = 1.0
EDA_FILTER_ORDER = 6
MIN_EDA_SECONDS = 30.0


@dataclass(frozen=True)
class EdaBlockMetric:
    slope_metric: float
    side: str


def eda_preprocess(raw: SignalTrack, order: int = EDA_FILTER_ORDER,
                   cutoff_hz: float = EDA_CUTOFF_HZ) -> SignalTrack:
    """Zero-phase Butterworth lowpass, then z-score over the whole recording."""
    if len(raw) < 2 or raw.t[-1] - raw.t[0] < MIN_EDA_SECONDS:
        raise ValueError(f"{raw.channel_id}: need at least {MIN_EDA_SECONDS:.0f} s of EDA")
    f = dsp.butter("lowpass", order, cutoff_hz, raw.nominal_rate_hz)
    return raw.with_values(dsp.zscore(dsp.filter_zero_phase(raw.v, f)))


def eda_block_slope(z_block, fs: float) -> float:
    """Mean of ``fs * diff(z)`` over the block, i.e. ``fs * (z[-1] - z[0]) / (n - 1)``."""
    return float(np.mean(dsp.diff_slope(z_block, fs)))
