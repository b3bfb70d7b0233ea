"""Simulated participants, the trial protocol and the closed-loop runner."""

from .breather import BreatherParams, breather_step, simulate_rate_bpm, stimulus_phase_from_cycle
from .protocol import (BlockPlan, Trial, TrialSchedule, assign_conditions, expected_block_duration,
                       layout_session, schedule_block)
from .runner import ALL_MODALITIES, CohortSpec, SimTrace, run_closed_loop, simulate_participant
from .signals import RelaxationGains, cnv_template, relaxation_drive, synth_ecg

__all__ = [
    "ALL_MODALITIES", "BlockPlan", "BreatherParams", "CohortSpec", "RelaxationGains", "SimTrace",
    "Trial", "TrialSchedule", "assign_conditions", "breather_step", "cnv_template",
    "expected_block_duration", "layout_session", "relaxation_drive", "run_closed_loop",
    "schedule_block", "simulate_participant", "simulate_rate_bpm", "stimulus_phase_from_cycle",
    "synth_ecg",
]
