"""Pan-Tompkins QRS detection."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .. import dsp
from ..streams import SignalTrack

logger = logging.getLogger(__name__)

REFRACTORY_S = 0.200
T_WAVE_WINDOW_S = 0.360
MWI_WIDTH_S = 0.150
REFINE_HALF_WIDTH_S = 0.040
SEARCH_BACK_FACTOR = 1.66
MIN_ECG_SECONDS = 10.0
VALID_IBI_MS = (300.0, 2000.0)


class NoBeatsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BeatSeries:
    r_times: np.ndarray
    ibi_ms: np.ndarray
    z_ibi: np.ndarray | None = None

    @property
    def ibi_end_times(self) -> np.ndarray:
        return self.r_times[1:]

    def valid_mask(self) -> np.ndarray:
        lo, hi = VALID_IBI_MS
        return (self.ibi_ms >= lo) & (self.ibi_ms <= hi)


def _beat_series(r_times: np.ndarray) -> BeatSeries:
    ibi = np.diff(r_times) * 1000.0
    z = None
    if ibi.size >= 2 and np.std(ibi) > 0:
        z = dsp.zscore(ibi)
    return BeatSeries(r_times, ibi, z)


def qrs_transform(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """Bandpass (5-15 Hz), five-point derivative, squaring, 150 ms moving-window integral.

    Returns ``(bandpassed, integrated)``. All stages are delay-free so integrated
    peaks line up with the QRS centre.
    """
    bp = dsp.filter_zero_phase(x, dsp.butter("bandpass", 2, (5.0, 15.0), fs))
    # y[n] = (2x[n+1] + x[n+2] - x[n-2] - 2x[n-1]) * fs / 8
    kernel = np.array([1.0, 2.0, 0.0, -2.0, -1.0]) * fs / 8.0
    deriv = np.convolve(bp, kernel, mode="same")
    width = max(1, int(round(MWI_WIDTH_S * fs)))
    mwi = np.convolve(deriv**2, np.ones(width) / width, mode="same")
    return bp, mwi


def pan_tompkins(ecg: SignalTrack | np.ndarray, fs: float | None = None,
                 t0: float | None = None) -> BeatSeries:
    """Detect R peaks with dual adaptive thresholds, T-wave rejection and search-back.

    Accepts a :class:`SignalTrack` or a raw array plus ``fs``. R times are the
    raw-signal maximum within 40 ms of each integrated-signal fiducial.
    """
    if isinstance(ecg, SignalTrack):
        x, fs, times = ecg.v, ecg.nominal_rate_hz, ecg.t
    else:
        if fs is None:
            raise ValueError("fs is required for array input")
        x = np.asarray(ecg, dtype=float)
        times = (0.0 if t0 is None else t0) + np.arange(x.size) / fs
    if x.size < MIN_ECG_SECONDS * fs:
        raise ValueError(f"need at least {MIN_ECG_SECONDS:.0f} s of ECG, got {x.size / fs:.1f} s")

    bp, mwi = qrs_transform(x, fs)
    refractory = int(round(REFRACTORY_S * fs))
    t_window = int(round(T_WAVE_WINDOW_S * fs))
    half = int(round(REFINE_HALF_WIDTH_S * fs))
    slope = np.abs(np.gradient(bp))

    train = mwi[: int(2 * fs)]
    spki = train.max() / 3.0
    npki = train.mean() / 2.0
    if spki <= 0:
        warnings.warn("flat ECG: no beats detected", NoBeatsWarning, stacklevel=2)
        return _beat_series(np.empty(0))

    # The integrated QRS energy often has several humps; keep only the tallest
    # within each refractory span so the fiducial lands on the main one.
    cands, _ = find_peaks(mwi, distance=refractory)
    beats: list[int] = []
    beat_slopes: list[float] = []
    noise_cands: list[int] = []
    rr_hist: list[int] = []

    def thresholds() -> tuple[float, float]:
        thr1 = npki + 0.25 * (spki - npki)
        return thr1, 0.5 * thr1

    def qrs_slope(i: int) -> float:
        lo, hi = max(0, i - half * 2), min(x.size, i + half * 2 + 1)
        return float(slope[lo:hi].max())

    def accept(i: int, weight: float) -> None:
        nonlocal spki
        if beats:
            rr_hist.append(i - beats[-1])
        beats.append(i)
        beat_slopes.append(qrs_slope(i))
        spki = weight * mwi[i] + (1 - weight) * spki

    for c in cands.tolist():
        pk = mwi[c]
        thr1, thr2 = thresholds()
        if beats and rr_hist:
            rr_avg = float(np.mean(rr_hist[-8:]))
            if c - beats[-1] > SEARCH_BACK_FACTOR * rr_avg:
                missed = [n for n in noise_cands if n > beats[-1] + refractory
                          and c - n >= refractory and mwi[n] > thr2]
                if missed:
                    accept(max(missed, key=lambda n: mwi[n]), 0.25)
                    noise_cands.clear()
                    thr1, thr2 = thresholds()
        if beats and c - beats[-1] < refractory:
            npki = 0.125 * pk + 0.875 * npki
            continue
        if pk > thr1:
            if beats and c - beats[-1] < t_window and qrs_slope(c) < 0.5 * beat_slopes[-1]:
                npki = 0.125 * pk + 0.875 * npki
                continue
            accept(c, 0.125)
            noise_cands.clear()
        else:
            npki = 0.125 * pk + 0.875 * npki
            noise_cands.append(c)

    if not beats:
        warnings.warn("no QRS complexes detected", NoBeatsWarning, stacklevel=2)
        return _beat_series(np.empty(0))

    refined = []
    for b in beats:
        lo, hi = max(0, b - half), min(x.size, b + half + 1)
        refined.append(lo + int(np.argmax(x[lo:hi])))
    kept: list[int] = []
    for r in sorted(refined):
        if kept and r - kept[-1] < refractory:
            if x[r] > x[kept[-1]]:
                kept[-1] = r
            continue
        kept.append(r)
    return _beat_series(times[np.asarray(kept, dtype=int)].copy())
