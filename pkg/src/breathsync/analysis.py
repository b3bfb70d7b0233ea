"""Per-session feature extraction: one value per (condition, metric).

Modalities missing from a recording are skipped; a metric that cannot be
computed for a block (too few breaths, excluded HRV block, rejected Cz) is
reported as NaN so the gap stays visible downstream.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import breath
from .physio import ecg, eda, eeg, hrv
from .streams import EEG_CHANNELS, INTERVENTIONS, Condition, MarkerKind, SessionRecording

logger = logging.getLogger(__name__)

BREATH_METRICS = ("mean_z_iri", "var_z_iri")
EDA_METRICS = ("eda_slope_left", "eda_slope_right")
ECG_METRICS = ("mean_z_ibi",) + tuple(f"hrv_{f}" for f in (
    "sdnn_ms", "rmssd_ms", "pnn50_fraction", "lf_power", "hf_power", "lf_hf_ratio", "sd1_ms", "sd2_ms"))
EEG_METRICS = ("cnv_early_uv", "cnv_mid_uv", "cnv_late_uv")
METRIC_ORDER = BREATH_METRICS + EDA_METRICS + ECG_METRICS + EEG_METRICS
CONDITION_ORDER = (Condition.BASELINE,) + INTERVENTIONS


@dataclass(frozen=True)
class MetricRow:
    participant: str
    condition: Condition
    metric: str
    value: float


def _check_blocks(rec: SessionRecording) -> dict[Condition, tuple[float, float]]:
    bounds = rec.block_bounds()
    missing = [c.value for c in CONDITION_ORDER if c not in bounds]
    if missing:
        raise ValueError(f"session {rec.participant_id} is missing block(s): {', '.join(missing)}")
    return bounds


def breath_metrics(rec: SessionRecording, bounds) -> dict[Condition, dict[str, float]]:
    filtered = breath.lowpass_breathing(rec.tracks["breathing"])
    peaks = breath.detect_breath_peaks(filtered)
    series = {}
    for cond, (t0, t1) in bounds.items():
        sel = (peaks.peak_times >= t0) & (peaks.peak_times <= t1)
        pt = peaks.peak_times[sel]
        iri = np.diff(pt) * 1000.0
        ok = iri > breath.MIN_IRI_MS
        if not ok.all():
            logger.warning("%s/%s: dropped %d IRIs at or below %.0f ms", rec.participant_id,
                           cond.value, int((~ok).sum()), breath.MIN_IRI_MS)
        series[cond] = breath.IriSeries(iri[ok], pt[1:][ok])
    z = breath.session_z_iri(series)
    ends = np.concatenate([s.interval_end_times for s in series.values()])
    per_block = breath.block_breath_metrics(np.concatenate(z), ends, bounds)
    return {c: {"mean_z_iri": m.mean_z_iri, "var_z_iri": m.var_z_iri} for c, m in per_block.items()}


def eda_metrics(rec: SessionRecording, bounds) -> dict[Condition, dict[str, float]]:
    out: dict[Condition, dict[str, float]] = {c: {} for c in bounds}
    for side in ("left", "right"):
        ch = f"eda_{side}"
        if ch not in rec.tracks:
            continue
        z = eda.eda_preprocess(rec.tracks[ch])
        for cond, (t0, t1) in bounds.items():
            blk = z.between(t0, t1)
            out[cond][f"eda_slope_{side}"] = (eda.eda_block_slope(blk.v, z.nominal_rate_hz)
                                              if len(blk) >= 2 else math.nan)
    return out


def ecg_metrics(rec: SessionRecording, bounds) -> dict[Condition, dict[str, float]]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ecg.NoBeatsWarning)
        beats = ecg.pan_tompkins(rec.tracks["ecg"])
    valid = beats.valid_mask()
    ibi = beats.ibi_ms[valid]
    ends = beats.ibi_end_times[valid]
    z = np.full(ibi.size, math.nan)
    if ibi.size >= 2 and np.std(ibi) > 0:
        z = (ibi - ibi.mean()) / ibi.std()
    out = {}
    for cond, (t0, t1) in bounds.items():
        sel = (ends >= t0) & (ends <= t1)
        row = {"mean_z_ibi": float(z[sel].mean()) if sel.any() else math.nan}
        try:
            feats = hrv.hrv_features(ibi[sel]).as_dict()
        except hrv.BlockExcluded as exc:
            logger.info("%s/%s: HRV block excluded (%s)", rec.participant_id, cond.value, exc)
            feats = {k: math.nan for k in hrv.HrvFeatures.__dataclass_fields__}
        row.update({f"hrv_{k}": float(v) for k, v in feats.items()})
        out[cond] = row
    return out


def eeg_metrics(rec: SessionRecording, bounds) -> dict[Condition, dict[str, float]]:
    chans = {ch: rec.tracks[ch] for ch in EEG_CHANNELS if ch in rec.tracks}
    nan_row = {m: math.nan for m in EEG_METRICS}
    cleaned = eeg.eeg_preprocess(chans)
    try:
        cz = cleaned.channel(rec.cz_channel)
    except eeg.CnvUnavailable as exc:
        logger.warning("%s: CNV unavailable (%s)", rec.participant_id, exc)
        return {c: dict(nan_row) for c in bounds}
    out = {}
    for cond, (t0, t1) in bounds.items():
        onsets = [m.t for m in rec.markers if m.kind is MarkerKind.WARNING and t0 <= m.t <= t1]
        epochs = eeg.epoch_and_reject(cz, cleaned.t, cleaned.fs, onsets)
        try:
            amp = eeg.cnv_mean_amplitudes(epochs)
            out[cond] = {"cnv_early_uv": amp.early_uv, "cnv_mid_uv": amp.mid_uv,
                         "cnv_late_uv": amp.late_uv}
        except eeg.CnvUnavailable as exc:
            logger.warning("%s/%s: CNV unavailable (%s)", rec.participant_id, cond.value, exc)
            out[cond] = dict(nan_row)
    return out


def analyze_session(rec: SessionRecording) -> list[MetricRow]:
    """All available metrics for one session, ordered by condition then metric."""
    bounds = _check_blocks(rec)
    values: dict[Condition, dict[str, float]] = {c: {} for c in CONDITION_ORDER}
    stages = [("breathing" in rec.tracks, breath_metrics),
              (any(k.startswith("eda_") for k in rec.tracks), eda_metrics),
              ("ecg" in rec.tracks, ecg_metrics),
              (any(k in rec.tracks for k in EEG_CHANNELS), eeg_metrics)]
    for present, stage in stages:
        if not present:
            continue
        for cond, row in stage(rec, bounds).items():
            values[cond].update(row)
    rows = []
    for cond in CONDITION_ORDER:
        for metric in METRIC_ORDER:
            if metric in values[cond]:
                rows.append(MetricRow(rec.participant_id, cond, metric, float(values[cond][metric])))
    return rows
