"""Synthetic EDA, ECG and EEG driven by a shared relaxation signal.

The relaxation drive is the fractional slowing of breathing relative to the
participant's natural rate. EDA tonic level falls, heart intervals lengthen and
the late CNV deepens in proportion to it. The magnitudes below are free
parameters chosen so the analysis pipeline has something to find; they are not
physiological claims.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import lfilter

R_SIGMA_S = 0.010
R_AMP_MV = 1.0
# (offset from R in s, amplitude in mV, width sigma in s)
P_WAVE = (-0.16, 0.15, 0.025)
T_WAVE = (0.25, 0.30, 0.040)

CNV_ONSET_S = 0.2
CNV_PEAK_S = 4.5
CNV_RETURN_S = 5.0


@dataclass(frozen=True)
class RelaxationGains:
    eda_drift_us_per_s: float = 0.0015     # tonic rise with no relaxation (task arousal)
    eda_decay_us_per_s: float = 0.04       # tonic fall per unit drive
    ibi_gain: float = 0.25                 # fractional IBI lengthening per unit drive
    cnv_late_uv: float = -8.0              # late CNV amplitude at zero drive
    cnv_gain: float = 1.5                  # fractional CNV deepening per unit drive


def relaxation_drive(phase: np.ndarray, dt: float, natural_rate_bpm: float,
                     smooth_s: float = 20.0) -> np.ndarray:
    """``(natural - current) / natural`` breathing rate, smoothed over ``smooth_s``."""
    rate = np.gradient(np.asarray(phase, dtype=float), dt) * 60.0 / (2 * np.pi)
    width = max(1, int(round(smooth_s / dt)))
    smoothed = uniform_filter1d(rate, width, mode="nearest")
    return np.clip((natural_rate_bpm - smoothed) / natural_rate_bpm, -1.0, 1.0)


# ---------------------------------------------------------------- ECG


def beat_times_from_ibi(duration_s: float, ibi_at, t_start: float = 0.3) -> np.ndarray:
    """Integrate a time-varying IBI function ``ibi_at(t) -> seconds``."""
    times = []
    t = t_start
    while t < duration_s - 0.3:
        times.append(t)
        t += float(ibi_at(t))
    return np.asarray(times)


def synth_ecg(beat_times, fs: float, duration_s: float, rng: np.random.Generator | None = None,
              snr_db: float | None = None, noise_sd_mv: float = 0.0,
              wander_mv: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian R waves (sigma 10 ms, 1 mV) plus P and T bumps, on a uniform grid.

    With ``snr_db`` the white-noise level is set from the clean signal power;
    otherwise ``noise_sd_mv`` is used directly. Returns ``(t, v)``.
    """
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    v = np.zeros(n)
    half = int(0.5 * fs)
    for bt in np.asarray(beat_times, dtype=float).tolist():
        c = int(round(bt * fs))
        lo, hi = max(0, c - half), min(n, c + half + 1)
        if lo >= hi:
            continue
        tau = t[lo:hi] - bt
        seg = R_AMP_MV * np.exp(-0.5 * (tau / R_SIGMA_S) ** 2)
        for off, amp, sig in (P_WAVE, T_WAVE):
            seg += amp * np.exp(-0.5 * ((tau - off) / sig) ** 2)
        v[lo:hi] += seg
    if rng is None:
        rng = np.random.default_rng(0)
    if snr_db is not None:
        power = float(np.mean(v**2))
        noise_sd_mv = float(np.sqrt(power / 10 ** (snr_db / 10.0)))
    if noise_sd_mv > 0:
        v = v + noise_sd_mv * rng.standard_normal(n)
    if wander_mv > 0:
        v = v + wander_mv * np.sin(2 * np.pi * 0.25 * t + rng.uniform(0, 2 * np.pi))
    return t, v


# ---------------------------------------------------------------- EDA


def synth_eda(t: np.ndarray, drive: np.ndarray, level0_us: float, gains: RelaxationGains,
              rng: np.random.Generator, scr_times=(), noise_us: float = 0.003
              ) -> np.ndarray:
    """Tonic level integrating ``drift - decay * drive`` plus small phasic responses."""
    dt = np.diff(t, prepend=t[0])
    rate = gains.eda_drift_us_per_s - gains.eda_decay_us_per_s * np.asarray(drive)
    walk = np.cumsum(noise_us * np.sqrt(np.maximum(dt, 0)) * rng.standard_normal(t.size))
    level = level0_us + np.cumsum(rate * dt) + walk
    for st in scr_times:
        tau = t - st
        m = tau > 0
        amp = rng.uniform(0.02, 0.08)
        level[m] += amp * (np.exp(-tau[m] / 4.0) - np.exp(-tau[m] / 0.75))
    return np.maximum(level, 0.05)


# ---------------------------------------------------------------- EEG


def cnv_template(tau: np.ndarray, late_uv: float) -> np.ndarray:
    """Slow ramp from 0 at 0.2 s to ``late_uv`` at 4.5 s, back to 0 by 5.0 s."""
    tau = np.asarray(tau, dtype=float)
    up = np.clip((tau - CNV_ONSET_S) / (CNV_PEAK_S - CNV_ONSET_S), 0.0, 1.0)
    down = np.clip((CNV_RETURN_S - tau) / (CNV_RETURN_S - CNV_PEAK_S), 0.0, 1.0)
    return late_uv * np.where(tau < CNV_PEAK_S, up, down) * (tau >= 0)


def synth_eeg(n_samples: int, fs: float, n_channels: int, cz_index: int,
              warnings_and_drive, gains: RelaxationGains, rng: np.random.Generator,
              noise_uv: float = 6.0, blink_rate_hz: float = 0.05,
              spiky_channel: int | None = None) -> np.ndarray:
    """``(n_channels, n_samples)`` microvolts.

    Background is AR(1) noise per channel plus a shared component and slow
    drift. Each ``(warning_t, drive)`` pair adds a CNV at Cz (half strength on
    the neighbouring channels). Blinks load mostly on channels 2 and 3.
    """
    t = np.arange(n_samples) / fs
    a = np.exp(-2 * np.pi * 8.0 / fs)        # ~8 Hz corner
    scale = noise_uv * np.sqrt(1 - a * a)
    data = lfilter([1.0], [1.0, -a], scale * rng.standard_normal((n_channels, n_samples)), axis=1)
    common = lfilter([1.0], [1.0, -a], 0.5 * scale * rng.standard_normal(n_samples))
    data += common
    drift = np.cumsum(rng.standard_normal((n_channels, n_samples)), axis=1) * (2.0 / np.sqrt(fs))
    data += drift

    cnv = np.zeros(n_samples)
    span = int(CNV_RETURN_S * fs) + 1
    for wt, d in warnings_and_drive:
        i0 = int(round(wt * fs))
        i1 = min(n_samples, i0 + span)
        if i0 >= n_samples:
            continue
        amp = gains.cnv_late_uv * (1.0 + gains.cnv_gain * d)
        cnv[i0:i1] += cnv_template(t[i0:i1] - wt, amp)
    data[cz_index] += cnv
    for nb in (cz_index - 1, cz_index + 1):
        if 0 <= nb < n_channels:
            data[nb] += 0.5 * cnv

    n_blinks = rng.poisson(blink_rate_hz * n_samples / fs)
    weights = np.full(n_channels, 0.12)
    weights[[i for i in (1, 2) if i < n_channels]] = 1.0
    weights[cz_index] = 0.2
    half = int(0.2 * fs)
    kernel = np.hanning(2 * half + 1)
    for c in rng.integers(half, max(half + 1, n_samples - half), size=n_blinks).tolist():
        amp = rng.uniform(100.0, 160.0)
        lo, hi = c - half, c + half + 1
        data[:, lo:hi] += np.outer(weights * amp, kernel[: hi - lo])

    if spiky_channel is not None:
        spikes = rng.random(n_samples) < 0.002
        data[spiky_channel, spikes] += rng.choice([-1.0, 1.0], spikes.sum()) * 200.0
    return data
