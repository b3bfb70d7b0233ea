"""Small fixture builders shared by the test modules."""

import numpy as np

from breathsync.streams import Condition, EventMarker, MarkerKind, SessionRecording, SignalTrack, Unit

ORDER = (Condition.BASELINE, Condition.FT, Condition.PT, Condition.PE)


def block_markers(spans, order=ORDER, warnings_every=None):
    out = []
    for cond, (t0, t1) in zip(order, spans):
        out.append(EventMarker(t0, MarkerKind.BLOCK_START, cond))
        if warnings_every:
            for w in np.arange(t0 + 1.0, t1 - 5.0, warnings_every):
                out.append(EventMarker(float(w), MarkerKind.WARNING))
                out.append(EventMarker(float(w) + 4.5, MarkerKind.IMPERATIVE))
        out.append(EventMarker(t1, MarkerKind.BLOCK_END))
    return out


def breathing_session(spans, fs=17.0, signal=None, pid="T01", order=ORDER, extra=None):
    total = spans[-1][1] + 5.0
    t = np.arange(int(total * fs) + 1) / fs
    v = np.zeros_like(t) if signal is None else signal(t)
    tracks = {"breathing": SignalTrack("breathing", Unit.NU, fs, t, v)}
    tracks.update(extra or {})
    return SessionRecording(pid, tracks, tuple(block_markers(spans, order)), order)


FOUR_BLOCKS = ((10.0, 110.0), (120.0, 220.0), (230.0, 330.0), (340.0, 440.0))
