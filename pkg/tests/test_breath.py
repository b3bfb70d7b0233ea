import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from breathsync import breath, dsp
from breathsync.streams import Condition, SignalTrack, Unit

FS = 17.0


def track(v, fs=FS, t0=0.0):
    v = np.asarray(v, dtype=float)
    return SignalTrack("breathing", Unit.NU, fs, t0 + np.arange(v.size) / fs, v)


def sine(freq, amp, seconds=60.0, fs=FS):
    t = np.arange(int(seconds * fs)) / fs
    return track(amp * np.sin(2 * np.pi * freq * t), fs)


def brute_force_peaks(x, prom):
    """Direct transcription of the rule: walk each side to the next higher value."""
    x = list(x)
    n = len(x)
    out = []
    for i in range(1, n - 1):
        if not x[i] > x[i - 1]:
            continue
        j = i + 1
        while j < n and x[j] == x[i]:
            j += 1
        if j == n or x[j] > x[i]:
            continue
        left = [x[k] for k in range(i - 1, -1, -1)]
        lmin = x[i]
        for v in left:
            if v >= x[i]:
                break
            lmin = min(lmin, v)
        rmin = x[i]
        for v in x[i + 1:]:
            if v > x[i]:
                break
            rmin = min(rmin, v)
        if x[i] - lmin >= prom and x[i] - rmin >= prom:
            out.append(i)
    return out


@given(st.lists(st.integers(-6, 6), min_size=0, max_size=80))
def test_peaks_match_brute_force_integers(values):
    got = breath.detect_breath_peaks(track(values) if values else track([]), 2.0)
    idx = np.rint(got.peak_times * FS).astype(int).tolist()
    assert idx == brute_force_peaks(values, 2.0)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=120),
       st.floats(0.0, 5.0))
def test_peaks_match_brute_force_floats(values, prom):
    got = breath.detect_breath_peaks(track(values), prom)
    idx = np.rint(got.peak_times * FS).astype(int).tolist()
    assert idx == brute_force_peaks(values, prom)


def test_sinusoid_fixture_twelve_peaks_five_seconds():
    peaks = breath.detect_breath_peaks(sine(0.2, 3.0))
    assert len(peaks) == 12
    iri = breath.compute_iri(peaks).intervals_ms
    assert np.all(np.abs(iri - 5000.0) <= 1000.0 / FS + 1e-9)


def test_small_sinusoid_and_constant_have_no_peaks():
    assert len(breath.detect_breath_peaks(sine(0.2, 0.5))) == 0
    assert len(breath.detect_breath_peaks(track(np.full(500, 2.0)))) == 0
    assert len(breath.detect_breath_peaks(track([]))) == 0


def test_equal_peaks_with_shallow_dip_keep_earlier():
    x = [0, 5, 4, 5, 0]
    peaks = breath.detect_breath_peaks(track(x), 2.0)
    assert np.rint(peaks.peak_times * FS).astype(int).tolist() == [1]


@given(shift=st.integers(0, 200))
def test_time_shift_invariance(shift):
    base = sine(0.15, 3.0, 90.0)
    moved = SignalTrack("breathing", Unit.NU, FS, base.t + shift / FS, base.v)
    a = breath.detect_breath_peaks(base)
    b = breath.detect_breath_peaks(moved)
    np.testing.assert_allclose(b.peak_times - a.peak_times, shift / FS, atol=1e-9)
    np.testing.assert_allclose(breath.compute_iri(a).intervals_ms,
                               breath.compute_iri(b).intervals_ms, atol=1e-6)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=120),
       st.floats(1.0, 5.0))
def test_scaling_up_keeps_peaks(values, k):
    a = set(breath.detect_breath_peaks(track(values)).peak_times.tolist())
    b = set(breath.detect_breath_peaks(track(np.asarray(values) * k)).peak_times.tolist())
    assert a <= b


@given(st.floats(0.1, 0.3), st.floats(0.01, 0.05))
def test_slower_breathing_longer_mean_iri(f, df):
    fast = breath.compute_iri(breath.detect_breath_peaks(sine(f, 3.0, 120.0)))
    slow = breath.compute_iri(breath.detect_breath_peaks(sine(f - df, 3.0, 120.0)))
    assert slow.intervals_ms.mean() > fast.intervals_ms.mean()


def test_compute_iri_arithmetic_and_errors():
    p = breath.BreathPeaks(np.array([10.0, 15.0, 20.5]), np.zeros(3))
    np.testing.assert_allclose(breath.compute_iri(p).intervals_ms, [5000.0, 5500.0])
    two = breath.BreathPeaks(np.array([1.0, 4.0]), np.zeros(2))
    assert len(breath.compute_iri(two)) == 1
    with pytest.raises(breath.InsufficientPeaksError):
        breath.compute_iri(breath.BreathPeaks(np.array([1.0]), np.zeros(1)))
    with pytest.raises(ValueError):
        breath.IriSeries(np.array([900.0]), np.array([1.0]))


def _iri(ms, end0=0.0):
    ms = np.asarray(ms, dtype=float)
    return breath.IriSeries(ms, end0 + np.cumsum(ms) / 1000.0)


def test_session_z_fixture_and_degenerate():
    z = breath.session_z_iri([_iri([4000.0, 5000.0, 6000.0])])
    np.testing.assert_allclose(z[0], [-1.2247, 0.0, 1.2247], atol=1e-4)
    with pytest.raises(dsp.DegenerateInputError):
        breath.session_z_iri([_iri([5000.0, 5000.0])])


@given(st.lists(st.lists(st.floats(1001, 20000), min_size=1, max_size=15), min_size=1, max_size=4),
       st.floats(1.5, 4.0))
def test_session_z_moments_and_scale_invariance(blocks, k):
    all_ms = np.concatenate(blocks)
    if np.std(all_ms) < 1e-3:
        return
    z = np.concatenate(breath.session_z_iri([_iri(b) for b in blocks]))
    assert abs(z.mean()) < 1e-9 and abs(z.var() - 1.0) < 1e-9
    z2 = np.concatenate(breath.session_z_iri([_iri(np.asarray(b) * k) for b in blocks]))
    np.testing.assert_allclose(z, z2, atol=1e-9)


def test_block_metrics_constructed_fixture():
    bounds = {Condition.BASELINE: (0.0, 10.0), Condition.FT: (20.0, 30.0),
              Condition.PT: (40.0, 50.0), Condition.PE: (60.0, 70.0)}
    targets = [-1.0, 0.0, 0.0, 1.0]
    z, ends = [], []
    for (t0, _), m in zip(bounds.values(), targets):
        z += [m - 0.5, m + 0.5]
        ends += [t0 + 1.0, t0 + 2.0]
    out = breath.block_breath_metrics(np.array(z), np.array(ends), bounds)
    for cond, m in zip(bounds, targets):
        assert abs(out[cond].mean_z_iri - m) < 1e-9
        assert abs(out[cond].var_z_iri - 0.25) < 1e-9


def test_block_without_intervals_is_flagged():
    bounds = {Condition.BASELINE: (0.0, 10.0), Condition.FT: (20.0, 30.0)}
    out = breath.block_breath_metrics(np.array([0.5, -0.5]), np.array([1.0, 2.0]), bounds)
    assert not out[Condition.FT].defined and math.isnan(out[Condition.FT].mean_z_iri)


def test_longer_block_iris_rank_highest():
    rng = np.random.default_rng(2)
    blocks = [_iri(rng.uniform(4000, 5000, 20), 100 * i) for i in range(3)]
    blocks.append(_iri(rng.uniform(6000, 7000, 20), 300))
    zs = breath.session_z_iri(blocks)
    assert np.argmax([z.mean() for z in zs]) == 3


def test_baseline_rate():
    assert breath.baseline_rate_bpm(_iri([5000.0] * 4)) == pytest.approx(12.0, abs=1e-12)
    assert breath.baseline_rate_bpm(_iri([10000.0] * 4)) == pytest.approx(6.0, abs=1e-12)
    with pytest.raises(breath.InsufficientPeaksError):
        breath.baseline_rate_bpm(breath.BreathPeaks(np.array([3.0]), np.array([1.0])))


def test_realtime_depth_sweeps_unit_interval_after_warmup():
    t = np.arange(int(120 * FS)) / FS
    v = 3.0 * np.sin(2 * np.pi * 0.2 * t)
    d = breath.realtime_depth(t, v)
    after = d[t >= 30.0]
    assert after.min() < 0.01 and after.max() > 0.99
    assert np.all((d >= 0) & (d <= 1))
    # once the window has seen a full cycle, depth is the closed form (v + 3) / 6
    np.testing.assert_allclose(after, (v[t >= 30.0] + 3.0) / 6.0, atol=0.01)


def test_realtime_depth_constant_and_step():
    t = np.arange(600) / FS
    assert np.all(breath.realtime_depth(t, np.full(t.size, 4.0)) == 0.5)
    tt = np.arange(int(100 * FS)) / FS
    v = np.where(tt < 40, 0.5 + 0.5 * np.sin(2 * np.pi * 0.25 * tt), 5 + 5 * np.sin(2 * np.pi * 0.25 * tt))
    d = breath.realtime_depth(tt, v)
    late = tt >= 40 + 30
    np.testing.assert_allclose(d[late], (v[late] - v[late].min()) / 10.0, atol=0.01)


def test_depth_normalizer_is_causal():
    rng = np.random.default_rng(5)
    t = np.arange(400) / FS
    v = rng.standard_normal(400)
    full = breath.realtime_depth(t, v)
    part = breath.realtime_depth(t[:250], v[:250])
    np.testing.assert_array_equal(full[:250], part)


def test_lowpass_removes_fast_ripple():
    t = np.arange(int(120 * FS)) / FS
    slow = 3.0 * np.sin(2 * np.pi * 0.2 * t)
    noisy = track(slow + 1.0 * np.sin(2 * np.pi * 4.0 * t))
    out = breath.lowpass_breathing(noisy)
    assert np.max(np.abs(out.v[200:-200] - slow[200:-200])) < 0.05
    assert len(breath.detect_breath_peaks(out)) == 24
