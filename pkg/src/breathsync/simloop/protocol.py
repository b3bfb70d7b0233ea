"""Forewarned reaction-time protocol: trial schedules, block order, session layout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..streams import Condition, EventMarker, MarkerKind

N_TRIALS = 40
FOREPERIOD_S = 4.5          # warning onset -> imperative onset
ITI_RANGE_S = (2.0, 5.0)
WARNING_DURATION_S = 0.5
IMPERATIVE_DURATION_S = 0.3
BLOCK_LEAD_IN_S = 2.0       # block start -> first warning (room for the -1 s epoch edge)
SESSION_LEAD_S = 20.0       # recording start -> first block
INTER_BLOCK_GAP_S = 30.0
SESSION_TAIL_S = 10.0


@dataclass(frozen=True)
class Trial:
    warning_t: float        # relative to block start
    imperative_t: float
    iti_s: float
    reaction_s: float


@dataclass(frozen=True)
class TrialSchedule:
    trials: tuple[Trial, ...]

    def __post_init__(self):
        for tr in self.trials:
            if abs(tr.imperative_t - tr.warning_t - FOREPERIOD_S) > 1e-9:
                raise ValueError("imperative must follow warning by exactly 4.5 s")
            if not ITI_RANGE_S[0] <= tr.iti_s <= ITI_RANGE_S[1]:
                raise ValueError(f"ITI {tr.iti_s} outside {ITI_RANGE_S}")

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def duration(self) -> float:
        """Block length: lead-in, every trial, and the ITI after the last trial."""
        last = self.trials[-1]
        return last.imperative_t + IMPERATIVE_DURATION_S + last.iti_s


def expected_block_duration(n_trials: int = N_TRIALS) -> float:
    mean_iti = sum(ITI_RANGE_S) / 2
    return BLOCK_LEAD_IN_S + n_trials * (FOREPERIOD_S + IMPERATIVE_DURATION_S + mean_iti)


def schedule_block(seed, n_trials: int = N_TRIALS) -> TrialSchedule:
    """Deterministic trial schedule for one block.

    Each trial: warning at ``w``, imperative at ``w + 4.5``, next warning after
    the imperative's 0.3 s plus a uniform 2-5 s inter-trial interval.
    """
    rng = np.random.default_rng(seed)
    itis = rng.uniform(*ITI_RANGE_S, size=n_trials)
    rts = 0.22 + 0.08 * np.abs(rng.standard_normal(n_trials))
    trials = []
    w = BLOCK_LEAD_IN_S
    for iti, rt in zip(itis.tolist(), rts.tolist()):
        imp = w + FOREPERIOD_S
        trials.append(Trial(w, imp, iti, rt))
        w = imp + IMPERATIVE_DURATION_S + iti
    return TrialSchedule(tuple(trials))


def assign_conditions(seed) -> tuple[Condition, ...]:
    """Baseline first, then FT/PT/PE in a seeded random order."""
    rng = np.random.default_rng(seed)
    rest = [Condition.FT, Condition.PT, Condition.PE]
    return (Condition.BASELINE, *[rest[i] for i in rng.permutation(3)])


@dataclass(frozen=True)
class BlockPlan:
    condition: Condition
    start: float
    schedule: TrialSchedule

    @property
    def end(self) -> float:
        return self.start + self.schedule.duration


def layout_session(order: tuple[Condition, ...], schedules: list[TrialSchedule]
                   ) -> tuple[list[BlockPlan], float]:
    """Absolute block placement and the total recording length."""
    plans = []
    t = SESSION_LEAD_S
    for cond, sched in zip(order, schedules):
        plans.append(BlockPlan(cond, t, sched))
        t = plans[-1].end + INTER_BLOCK_GAP_S
    return plans, plans[-1].end + SESSION_TAIL_S


def block_markers(plan: BlockPlan) -> list[EventMarker]:
    out = [EventMarker(plan.start, MarkerKind.BLOCK_START, plan.condition)]
    for tr in plan.schedule.trials:
        out.append(EventMarker(plan.start + tr.warning_t, MarkerKind.WARNING))
        out.append(EventMarker(plan.start + tr.imperative_t, MarkerKind.IMPERATIVE))
        out.append(EventMarker(plan.start + tr.imperative_t + tr.reaction_s, MarkerKind.KEY_PRESS))
    out.append(EventMarker(plan.end, MarkerKind.BLOCK_END))
    return out
