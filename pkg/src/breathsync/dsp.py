"""Shared numerical kernels.

Butterworth design is done here (analog prototype -> prewarped bilinear
transform -> second-order sections); running the sections over long arrays
is delegated to :mod:`scipy.signal`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import signal as _sig


class FilterDesignError(ValueError):
    """Raised when a filter specification cannot be realised."""


class DegenerateInputError(ValueError):
    """Raised for zero-variance or too-short inputs."""


class FilterKind(str, Enum):
    LOWPASS = "lowpass"
    HIGHPASS = "highpass"
    BANDPASS = "bandpass"


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind
    order: int
    cutoff_hz: tuple[float, ...]
    fs_hz: float

    def __init__(self, kind: FilterKind | str, order: int,
                 cutoff_hz: float | Sequence[float], fs_hz: float):
        kind = FilterKind(kind)
        cut = (float(cutoff_hz),) if np.isscalar(cutoff_hz) else tuple(float(c) for c in cutoff_hz)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "order", int(order))
        object.__setattr__(self, "cutoff_hz", cut)
        object.__setattr__(self, "fs_hz", float(fs_hz))
        self._validate()

    def _validate(self) -> None:
        if self.order < 1:
            raise FilterDesignError(f"order must be >= 1, got {self.order}")
        if not (self.fs_hz > 0 and math.isfinite(self.fs_hz)):
            raise FilterDesignError(f"fs must be positive, got {self.fs_hz}")
        expected = 2 if self.kind is FilterKind.BANDPASS else 1
        if len(self.cutoff_hz) != expected:
            raise FilterDesignError(
                f"{self.kind.value} needs {expected} cutoff(s), got {len(self.cutoff_hz)}")
        nyq = self.fs_hz / 2
        for c in self.cutoff_hz:
            if not (0 < c < nyq):
                raise FilterDesignError(
                    f"cutoff {c} Hz must lie strictly inside (0, {nyq}) Hz for fs={self.fs_hz}")
        if expected == 2 and not self.cutoff_hz[0] < self.cutoff_hz[1]:
            raise FilterDesignError(f"bandpass needs low < high, got {self.cutoff_hz}")


@dataclass(frozen=True)
class BiquadCascade:
    """Cascade of normalised biquads ``(b0, b1, b2, a1, a2)`` times ``overall_gain``.

    Each section computes ``y = b0 x + b1 x[-1] + b2 x[-2] - a1 y[-1] - a2 y[-2]``.
    First-order sections are stored with ``b2 = a2 = 0``.
    """

    sections: tuple[tuple[float, float, float, float, float], ...]
    overall_gain: float
    fs_hz: float

    def __post_init__(self):
        for i, sec in enumerate(self.sections):
            radius = np.abs(np.roots([1.0, sec[3], sec[4]])) if sec[4] != 0 else np.abs([sec[3]])
            if np.any(radius >= 1.0):
                raise FilterDesignError(f"section {i} is unstable (pole radius {radius.max():.6f})")

    def sos(self) -> np.ndarray:
        """scipy-style ``(n_sections, 6)`` array, gain folded into the first section."""
        out = np.array([[b0, b1, b2, 1.0, a1, a2] for b0, b1, b2, a1, a2 in self.sections])
        out[0, :3] *= self.overall_gain
        return out

    def pole_radii(self) -> np.ndarray:
        radii = []
        for _, _, _, a1, a2 in self.sections:
            radii.extend(np.abs(np.roots([1.0, a1, a2] if a2 != 0 else [1.0, a1])))
        return np.asarray(radii)

    def frequency_response(self, freqs_hz: np.ndarray | float) -> np.ndarray:
        w = 2 * np.pi * np.asarray(freqs_hz, dtype=float) / self.fs_hz
        zinv = np.exp(-1j * w)
        h = np.full(np.shape(w), self.overall_gain, dtype=complex)
        for b0, b1, b2, a1, a2 in self.sections:
            h *= (b0 + b1 * zinv + b2 * zinv**2) / (1 + a1 * zinv + a2 * zinv**2)
        return h

    def magnitude_db(self, freqs_hz: np.ndarray | float) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20 * np.log10(np.abs(self.frequency_response(freqs_hz)))


def _prewarp(f_hz: float, fs: float) -> float:
    return 2 * fs * math.tan(math.pi * f_hz / fs)


def _bilinear(s: np.ndarray, fs: float) -> np.ndarray:
    return (2 * fs + s) / (2 * fs - s)


def _pair_poles(zp: np.ndarray) -> list[tuple[float, float]]:
    """Group digital poles into (a1, a2) denominators; conjugates share a section."""
    tol = 1e-12
    complex_up = sorted((p for p in zp if p.imag > tol), key=lambda p: abs(p))
    reals = sorted((p.real for p in zp if abs(p.imag) <= tol), key=abs)
    dens = [(-2 * p.real, abs(p) ** 2) for p in complex_up]
    while len(reals) >= 2:
        r1, r2 = reals.pop(), reals.pop()
        dens.append((-(r1 + r2), r1 * r2))
    if reals:
        dens.append((-reals[0], 0.0))
    return dens


def design_butterworth(spec: FilterSpec) -> BiquadCascade:
    """Digital Butterworth filter as cascaded biquads.

    Band edges are prewarped so the -3.01 dB points land exactly on the
    requested cutoffs. A bandpass of order ``n`` has ``2n`` poles.
    """
    fs, n = spec.fs_hz, spec.order
    k = np.arange(n)
    proto = np.exp(1j * np.pi * (2 * k + n + 1) / (2 * n))

    if spec.kind is FilterKind.LOWPASS:
        wc = _prewarp(spec.cutoff_hz[0], fs)
        s_poles = wc * proto
        numer_2, numer_1 = (1.0, 2.0, 1.0), (1.0, 1.0, 0.0)
        z_ref = 1.0
    elif spec.kind is FilterKind.HIGHPASS:
        wc = _prewarp(spec.cutoff_hz[0], fs)
        s_poles = wc / proto
        numer_2, numer_1 = (1.0, -2.0, 1.0), (1.0, -1.0, 0.0)
        z_ref = -1.0
    else:
        w1, w2 = (_prewarp(c, fs) for c in spec.cutoff_hz)
        w0sq, bw = w1 * w2, w2 - w1
        disc = np.sqrt((proto * bw) ** 2 - 4 * w0sq + 0j)
        s_poles = np.concatenate([(proto * bw + disc) / 2, (proto * bw - disc) / 2])
        numer_2 = numer_1 = (1.0, 0.0, -1.0)
        z_ref = np.exp(1j * 2 * math.atan(math.sqrt(w0sq) / (2 * fs)))

    dens = _pair_poles(_bilinear(s_poles, fs))
    sections = []
    for a1, a2 in dens:
        b = numer_1 if (a2 == 0.0 and spec.kind is not FilterKind.BANDPASS) else numer_2
        sections.append((b[0], b[1], b[2], float(a1), float(a2)))

    zinv = 1 / z_ref
    h_ref = 1.0 + 0j
    for b0, b1, b2, a1, a2 in sections:
        h_ref *= (b0 + b1 * zinv + b2 * zinv**2) / (1 + a1 * zinv + a2 * zinv**2)
    return BiquadCascade(tuple(sections), float(1 / abs(h_ref)), fs)


def butter(kind: FilterKind | str, order: int, cutoff_hz, fs_hz: float) -> BiquadCascade:
    """Shorthand for ``design_butterworth(FilterSpec(...))``."""
    return design_butterworth(FilterSpec(kind, order, cutoff_hz, fs_hz))


def _as_finite(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("input contains NaN or Inf")
    return arr


def filter_causal(x, f: BiquadCascade) -> np.ndarray:
    """Single forward pass from rest (zero initial state)."""
    arr = _as_finite(x)
    if arr.size == 0:
        return arr.copy()
    return _sig.sosfilt(f.sos(), arr)


def filter_zero_phase(x, f: BiquadCascade) -> np.ndarray:
    """Forward-backward application; squared magnitude, zero phase."""
    arr = _as_finite(x)
    if arr.size < 2:
        return arr.copy()
    sos = f.sos()
    padlen = min(3 * (2 * len(sos) + 1), arr.size - 1)
    return _sig.sosfiltfilt(sos, arr, padlen=padlen)


def zscore(x) -> np.ndarray:
    """Standardise with the population (divide-by-N) standard deviation."""
    arr = _as_finite(x)
    if arr.size < 2:
        raise DegenerateInputError(f"zscore needs at least 2 values, got {arr.size}")
    mu = arr.mean()
    sigma = arr.std()
    if sigma == 0 or sigma <= 1e-12 * max(1.0, abs(mu)):
        raise DegenerateInputError("zscore of a constant series (zero variance)")
    return (arr - mu) / sigma


def diff_slope(z, fs: float) -> np.ndarray:
    """``fs * (z[1:] - z[:-1])``."""
    arr = _as_finite(z)
    if arr.size < 2:
        raise DegenerateInputError(f"diff_slope needs at least 2 samples, got {arr.size}")
    return fs * np.diff(arr)


def kurtosis_excess(x, excess: bool = True) -> float:
    """Population-moment kurtosis ``m4 / m2**2``, minus 3 when ``excess``."""
    arr = _as_finite(x)
    if arr.size < 4:
        raise DegenerateInputError(f"kurtosis needs at least 4 values, got {arr.size}")
    d = arr - arr.mean()
    m2 = np.mean(d**2)
    if m2 == 0:
        raise DegenerateInputError("kurtosis of a constant series")
    k = float(np.mean(d**4) / m2**2)
    return k - 3.0 if excess else k


def welch_psd(x, fs: float, segment_len: int = 256, overlap: float = 0.5
              ) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Welch PSD with a Hann window (density scaling, mean removed per segment)."""
    arr = _as_finite(x)
    segment_len = int(segment_len)
    if segment_len < 2:
        raise ValueError("segment_len must be >= 2")
    if segment_len > arr.size:
        raise ValueError(f"segment_len {segment_len} exceeds series length {arr.size}")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    noverlap = int(round(segment_len * overlap))
    freqs, pxx = _sig.welch(arr, fs=fs, window="hann", nperseg=segment_len,
                            noverlap=noverlap, detrend="constant", scaling="density")
    return freqs, pxx


def band_power(freqs: np.ndarray, pxx: np.ndarray, lo: float, hi: float) -> float:
    """Rectangle-rule integral of the PSD over ``lo <= f < hi``."""
    if len(freqs) < 2:
        return 0.0
    df = freqs[1] - freqs[0]
    mask = (freqs >= lo) & (freqs < hi)
    return float(np.sum(pxx[mask]) * df)
