"""Entrainable breather: a noisy phase oscillator with sinusoidal coupling.

Breath value is ``amplitude * sin(phase)``, so the inhalation peak sits at
phase pi/2. A stimulus phase in the same coordinates pulls the breather with
strength ``coupling_k`` (rad/s); with ``|omega_n - omega_s| < K`` it locks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_DT_S = 0.1


@dataclass(frozen=True)
class BreatherParams:
    natural_rate_bpm: float
    coupling_k: float = 0.0
    phase_noise_sigma: float = 0.0
    amplitude_nu: float = 5.0
    seed: int = 0

    def __post_init__(self):
        for name in ("natural_rate_bpm", "coupling_k", "phase_noise_sigma", "amplitude_nu"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 6.0 <= self.natural_rate_bpm <= 30.0:
            raise ValueError(f"natural_rate_bpm must be in [6, 30], got {self.natural_rate_bpm}")
        if self.coupling_k < 0 or self.phase_noise_sigma < 0:
            raise ValueError("coupling_k and phase_noise_sigma must be >= 0")
        if self.amplitude_nu <= 0:
            raise ValueError("amplitude_nu must be > 0")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.natural_rate_bpm / 60.0


def stimulus_phase_from_cycle(cycle_phase):
    """Map an envelope cycle phase in [0, 1) to breather coordinates.

    The envelope is loudest at cycle phase 0.5 and the breath peaks at pi/2,
    so loudness peaks pull toward inhalation peaks.
    """
    return 2.0 * math.pi * cycle_phase - 0.5 * math.pi


@dataclass(frozen=True)
class BreatherBank:
    """Several breathers advanced together; same field names as :class:`BreatherParams`."""

    omega: np.ndarray
    coupling_k: np.ndarray
    phase_noise_sigma: np.ndarray
    amplitude_nu: np.ndarray

    @classmethod
    def of(cls, params: Sequence[BreatherParams]) -> BreatherBank:
        return cls(*(np.array([getattr(p, f) for p in params], dtype=float)
                     for f in ("omega", "coupling_k", "phase_noise_sigma", "amplitude_nu")))


def breather_step(phase, params: BreatherParams | BreatherBank, stimulus_phase, dt: float,
                  noise=0.0):
    """Advance one Euler-Maruyama step.

    Returns ``(new_phase, value)`` where ``value`` is the breath output at the
    *current* phase. ``noise`` is a standard-normal draw supplied by the caller
    so the step itself is pure. Phase is left unwrapped.

    With a :class:`BreatherBank`, ``phase``, ``noise`` and ``stimulus_phase``
    are arrays and a NaN stimulus leaves that breather uncoupled.
    """
    if dt <= 0 or dt > MAX_DT_S:
        raise ValueError(f"dt must be in (0, {MAX_DT_S}], got {dt}")
    if isinstance(params, BreatherBank):
        pull = params.coupling_k * np.sin(stimulus_phase - phase)
        drift = params.omega + np.where(np.isnan(pull), 0.0, pull)
        new_phase = phase + drift * dt + params.phase_noise_sigma * math.sqrt(dt) * noise
        return new_phase, params.amplitude_nu * np.sin(phase)
    drift = params.omega
    if stimulus_phase is not None and params.coupling_k > 0:
        drift += params.coupling_k * math.sin(stimulus_phase - phase)
    new_phase = phase + drift * dt + params.phase_noise_sigma * math.sqrt(dt) * noise
    return new_phase, params.amplitude_nu * math.sin(phase)


def simulate_rate_bpm(params: BreatherParams, stimulus_rate_bpm: float | None,
                      duration_s: float, dt: float = 0.01, settle_s: float = 0.0) -> float:
    """Noise-free realized rate after ``settle_s``, from total phase advance.

    Convenience for checking entrainment behaviour without a full session.
    """
    n = int(round(duration_s / dt))
    n0 = int(round(settle_s / dt))
    ws = 2 * math.pi * stimulus_rate_bpm / 60.0 if stimulus_rate_bpm is not None else None
    noiseless = BreatherParams(params.natural_rate_bpm, params.coupling_k, 0.0,
                               params.amplitude_nu, params.seed)
    phase = 0.0
    start = 0.0
    for k in range(n):
        if k == n0:
            start = phase
        stim = None if ws is None else ws * k * dt
        phase, _ = breather_step(phase, noiseless, stim, dt)
    return (phase - start) / (2 * math.pi) / ((n - n0) * dt) * 60.0
