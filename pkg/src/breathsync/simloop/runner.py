"""Closed-loop cohort simulation: breather <-> envelope engine, plus physiology."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import breath, engine
from ..streams import (EEG_CHANNELS, Condition, SessionRecording, SignalTrack, Unit)
from .breather import BreatherBank, BreatherParams, breather_step, stimulus_phase_from_cycle
from .protocol import (BlockPlan, assign_conditions, block_markers, layout_session,
                       schedule_block, N_TRIALS)
from .signals import (RelaxationGains, beat_times_from_ibi, relaxation_drive, synth_ecg,
                      synth_eda, synth_eeg)

logger = logging.getLogger(__name__)

BREATH_FS = 17.0
ECG_FS = 250.0
EDA_FS = 4.0
ALL_MODALITIES = ("breathing", "ecg", "eda", "eeg")
CZ_CHANNEL = "eeg_ch01"


@dataclass(frozen=True)
class CohortSpec:
    n_participants: int = 19
    rate_range_bpm: tuple[float, float] = (10.0, 22.0)
    coupling_range: tuple[float, float] = (0.3, 0.3)
    master_seed: int = 0
    phase_noise_sigma: float = 0.3
    amplitude_range_nu: tuple[float, float] = (4.0, 6.0)
    n_trials: int = N_TRIALS
    modalities: tuple[str, ...] = ALL_MODALITIES
    eeg_rate_hz: float = 500.0
    pe_bias_rad: float = 0.3
    # PE sees the breather one breath sample plus one control tick late
    pe_lag_s: float = 1.0 / BREATH_FS + 1.0 / engine.DEFAULT_CONTROL_RATE_HZ
    control_rate_hz: float = engine.DEFAULT_CONTROL_RATE_HZ
    gains: RelaxationGains = field(default_factory=RelaxationGains)

    def __post_init__(self):
        if self.n_participants < 2:
            raise ValueError("a cohort needs at least 2 participants")
        lo, hi = self.rate_range_bpm
        if not 6.0 <= lo <= hi <= 30.0:
            raise ValueError(f"rate range must lie within [6, 30] bpm, got {self.rate_range_bpm}")
        klo, khi = self.coupling_range
        if not 0.0 <= klo <= khi:
            raise ValueError(f"invalid coupling range {self.coupling_range}")
        unknown = set(self.modalities) - set(ALL_MODALITIES)
        if unknown or "breathing" not in self.modalities:
            raise ValueError(f"modalities must include breathing and come from {ALL_MODALITIES}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")


@dataclass(frozen=True)
class SimTrace:
    """Ground truth kept alongside a simulated recording."""

    params: BreatherParams
    t: np.ndarray
    phase: np.ndarray
    stimulus_phase: np.ndarray          # NaN where nothing drives the breather
    drive: np.ndarray
    baseline_bpm: float
    pt_rate_bpm: float
    gain_curves: dict[Condition, engine.GainCurve]
    blocks: tuple[BlockPlan, ...]


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return lo if hi == lo else float(rng.uniform(lo, hi))


def _block_index_range(plan: BlockPlan, fs: float) -> tuple[int, int]:
    return int(math.ceil(plan.start * fs - 1e-9)), int(math.floor(plan.end * fs + 1e-9)) + 1


def _tempo_stimulus(t: np.ndarray, start: float, rate_bpm: float, control_rate: float) -> np.ndarray:
    """Stimulus phase the engine holds at each breath sample (latest tick at or before it)."""
    ticks = np.floor((t - start) * control_rate + 1e-9).astype(np.int64)
    cycle = engine.tempo_phase(int(ticks.max()) + 1, rate_bpm, control_rate)[ticks]
    return stimulus_phase_from_cycle(cycle)


def _measure_baseline_bpm(t: np.ndarray, v: np.ndarray) -> float:
    track = SignalTrack("breathing", Unit.NU, BREATH_FS, t, v)
    peaks = breath.detect_breath_peaks(breath.lowpass_breathing(track))
    return breath.baseline_rate_bpm(peaks)


@dataclass(frozen=True)
class ParticipantPlan:
    index: int
    params: BreatherParams
    order: tuple[Condition, ...]
    blocks: tuple[BlockPlan, ...]
    total_s: float
    breath_seed: np.random.SeedSequence
    physio_seed: np.random.SeedSequence

    def block(self, cond: Condition) -> BlockPlan:
        return next(b for b in self.blocks if b.condition is cond)


def plan_participant(cohort: CohortSpec, index: int) -> ParticipantPlan:
    """Draw parameters, condition order and trial schedules from the participant's seed stream."""
    pseed = np.random.SeedSequence(cohort.master_seed).spawn(cohort.n_participants)[index]
    s_params, s_order, s_sched, s_breath, s_physio = pseed.spawn(5)
    prng = np.random.default_rng(s_params)
    params = BreatherParams(
        natural_rate_bpm=_uniform(prng, *cohort.rate_range_bpm),
        coupling_k=_uniform(prng, *cohort.coupling_range),
        phase_noise_sigma=cohort.phase_noise_sigma,
        amplitude_nu=_uniform(prng, *cohort.amplitude_range_nu),
        seed=int(pseed.generate_state(1)[0]),
    )
    order = assign_conditions(s_order)
    schedules = [schedule_block(s, cohort.n_trials) for s in s_sched.spawn(4)]
    blocks, total = layout_session(order, schedules)
    return ParticipantPlan(index, params, order, tuple(blocks), total, s_breath, s_physio)


@dataclass
class _Breathing:
    t: np.ndarray
    phase: np.ndarray
    value: np.ndarray               # breather output plus measurement noise and drift
    stimulus: np.ndarray
    baseline_bpm: float
    pt_rate_bpm: float


def _run_breathers(cohort: CohortSpec, plans: list[ParticipantPlan]) -> list[_Breathing]:
    """Integrate every breather in lockstep at the breath sampling rate.

    Tempo blocks read the engine's held stimulus phase; the PT rate is fixed
    from the simulated Baseline block the moment the PT block begins; PE
    couples to a lagged copy of the breather's own phase minus a bias.
    """
    fs, dt = BREATH_FS, 1.0 / BREATH_FS
    n_each = [int(math.floor(p.total_s * fs)) + 1 for p in plans]
    n_max = max(n_each)
    n_p = len(plans)
    t = np.arange(n_max) / fs
    stim = np.full((n_max, n_p), np.nan)
    pe_mask = np.zeros((n_max, n_p), dtype=bool)
    noise = np.zeros((n_max, n_p))
    meas = np.zeros((n_max, n_p))
    phase = np.empty(n_p)
    pt_starts: dict[int, list[int]] = {}
    for j, p in enumerate(plans):
        rng = np.random.default_rng(p.breath_seed)
        n = n_each[j]
        noise[:n, j] = rng.standard_normal(n)
        meas[:n, j] = 0.05 * rng.standard_normal(n) + 0.3 * np.sin(2 * np.pi * t[:n] / 180.0
                                                                     + rng.uniform(0, 2 * np.pi))
        phase[j] = rng.uniform(0, 2 * np.pi)
        for b in p.blocks:
            i0, i1 = _block_index_range(b, fs)
            if b.condition is Condition.FT:
                stim[i0:i1, j] = _tempo_stimulus(t[i0:i1], b.start, engine.FT_RATE_BPM,
                                                 cohort.control_rate_hz)
            elif b.condition is Condition.PT:
                pt_starts.setdefault(i0, []).append(j)
            elif b.condition is Condition.PE:
                pe_mask[i0:i1, j] = True

    bank = BreatherBank.of([p.params for p in plans])
    lag = max(1, int(round(cohort.pe_lag_s / dt)))
    bias = cohort.pe_bias_rad
    phases = np.empty((n_max, n_p))
    values = np.empty((n_max, n_p))
    baseline = np.full(n_p, math.nan)
    pt_rate = np.full(n_p, math.nan)
    pe_any = pe_mask.any(axis=1)
    for k in range(n_max):
        for j in pt_starts.get(k, ()):
            p = plans[j]
            b0, b1 = _block_index_range(p.block(Condition.BASELINE), fs)
            baseline[j] = _measure_baseline_bpm(t[b0:b1], values[b0:b1, j] + meas[b0:b1, j])
            pt_rate[j] = engine.effective_rate_bpm(engine.PersonalizedTempo(baseline[j]))
            pt = p.block(Condition.PT)
            i0, i1 = _block_index_range(pt, fs)
            stim[i0:i1, j] = _tempo_stimulus(t[i0:i1], pt.start, pt_rate[j], cohort.control_rate_hz)
        s = stim[k]
        if pe_any[k]:
            m = pe_mask[k]
            s[m] = phases[k - lag, m] - bias
        phases[k] = phase
        phase, values[k] = breather_step(phase, bank, s, dt, noise[k])

    out = []
    for j, n in enumerate(n_each):
        out.append(_Breathing(t[:n], phases[:n, j].copy(), values[:n, j] + meas[:n, j],
                              stim[:n, j].copy(), float(baseline[j]), float(pt_rate[j])))
    return out


def _finish(cohort: CohortSpec, plan: ParticipantPlan, br: _Breathing, with_curves: bool
            ) -> tuple[SessionRecording, SimTrace]:
    fs, dt = BREATH_FS, 1.0 / BREATH_FS
    t, phases, breath_v = br.t, br.phase, br.value
    n, total = t.size, plan.total_s
    drive = relaxation_drive(phases, dt, plan.params.natural_rate_bpm)
    tracks = {"breathing": SignalTrack("breathing", Unit.NU, fs, t, breath_v)}

    curves = {}
    for b in plan.blocks if with_curves else ():
        if b.condition is Condition.FT:
            curves[b.condition] = engine.render_gain_curve(engine.FixedTempo(), b.schedule.duration,
                                                           control_rate=cohort.control_rate_hz, t0=b.start)
        elif b.condition is Condition.PT:
            curves[b.condition] = engine.render_gain_curve(engine.PersonalizedTempo(br.baseline_bpm),
                                                           b.schedule.duration,
                                                           control_rate=cohort.control_rate_hz, t0=b.start)
        elif b.condition is Condition.PE:
            i0, i1 = _block_index_range(b, fs)
            curves[b.condition] = engine.render_gain_curve(engine.PersonalizedEnvelope(),
                                                           breath_t=t[i0:i1], breath_v=breath_v[i0:i1],
                                                           control_rate=cohort.control_rate_hz)

    markers = [m for b in plan.blocks for m in block_markers(b)]
    phys = np.random.default_rng(plan.physio_seed)
    gains = cohort.gains

    def drive_at(tt):
        return np.interp(tt, t, drive)

    if "ecg" in cohort.modalities:
        ibi0 = 60.0 / phys.uniform(62.0, 78.0)
        jitter = phys.standard_normal(int(total * 2.5) + 10).tolist()
        counter = iter(range(len(jitter)))

        def ibi_at(tt: float) -> float:
            k = min(int(tt * fs), n - 1)
            rsa = 1.0 - 0.04 * math.sin(phases[k])
            return ibi0 * (1.0 + gains.ibi_gain * drive[k]) * rsa + 0.01 * jitter[next(counter)]

        beats = beat_times_from_ibi(total, ibi_at)
        et, ev = synth_ecg(beats, ECG_FS, total, phys, noise_sd_mv=0.03, wander_mv=0.05)
        tracks["ecg"] = SignalTrack("ecg", Unit.MILLIVOLT, ECG_FS, et, ev)
    if "eda" in cohort.modalities:
        ta = np.arange(int(math.floor(total * EDA_FS)) + 1) / EDA_FS
        level0 = phys.uniform(3.0, 8.0)
        scr = [m.t for m in markers if m.kind.value == "ImperativeStimulus"]
        left = synth_eda(ta, drive_at(ta), level0, gains, phys, scr)
        right = 0.9 * left + 0.004 * np.cumsum(phys.standard_normal(ta.size)) / np.sqrt(EDA_FS)
        tracks["eda_left"] = SignalTrack("eda_left", Unit.MICROSIEMENS, EDA_FS, ta, left)
        tracks["eda_right"] = SignalTrack("eda_right", Unit.MICROSIEMENS, EDA_FS, ta, np.maximum(right, 0.05))
    if "eeg" in cohort.modalities:
        efs = cohort.eeg_rate_hz
        ne = int(math.floor(total * efs)) + 1
        te = np.arange(ne) / efs
        cz = EEG_CHANNELS.index(CZ_CHANNEL)
        warns = [(m.t, float(drive_at(m.t))) for m in markers if m.kind.value == "WarningStimulus"]
        spiky = int(phys.integers(3, len(EEG_CHANNELS))) if phys.random() < 0.3 else None
        data = synth_eeg(ne, efs, len(EEG_CHANNELS), cz, warns, gains, phys, spiky_channel=spiky)
        for ch, row in zip(EEG_CHANNELS, data):
            tracks[ch] = SignalTrack(ch, Unit.MICROVOLT, efs, te, row)

    rec = SessionRecording(f"P{plan.index + 1:02d}", tracks, tuple(markers), plan.order,
                           "right", CZ_CHANNEL)
    trace = SimTrace(plan.params, t, phases, br.stimulus, drive,
                     br.baseline_bpm, br.pt_rate_bpm, curves, plan.blocks)
    return rec, trace



def simulate_participant(cohort: CohortSpec, index: int, with_curves: bool = True
                         ) -> tuple[SessionRecording, SimTrace]:
    """One participant, fully determined by ``(master_seed, index)``.

    ``with_curves`` also renders each block's gain curve into the trace; the
    PE curve ticks in Python, so bulk runs skip it.
    """
    plan = plan_participant(cohort, index)
    return _finish(cohort, plan, _run_breathers(cohort, [plan])[0], with_curves)


def run_closed_loop(cohort: CohortSpec) -> list[SessionRecording]:
    """Simulate the whole cohort, ordered by participant.

    Breathers are integrated side by side in one vectorised loop; each keeps
    its own random streams, so no state is shared between participants.
    """
    plans = [plan_participant(cohort, i) for i in range(cohort.n_participants)]
    breathing = _run_breathers(cohort, plans)
    return [_finish(cohort, p, br, with_curves=False)[0] for p, br in zip(plans, breathing)]
