"""EDA, ECG/HRV and EEG feature extraction."""

from .ecg import BeatSeries, NoBeatsWarning, pan_tompkins, qrs_transform
from .eda import EdaBlockMetric, eda_block_slope, eda_preprocess
from .eeg import (CleanedEeg, CnvAmplitudes, CnvUnavailable, Epochs, average_reference,
                  cnv_mean_amplitudes, eeg_preprocess, epoch_and_reject, highpass_by_subtraction)
from .hrv import BlockExcluded, HrvFeatures, hrv_features

__all__ = [
    "BeatSeries", "NoBeatsWarning", "pan_tompkins", "qrs_transform",
    "EdaBlockMetric", "eda_block_slope", "eda_preprocess",
    "CleanedEeg", "CnvAmplitudes", "CnvUnavailable", "Epochs", "average_reference",
    "cnv_mean_amplitudes", "eeg_preprocess", "epoch_and_reject", "highpass_by_subtraction",
    "BlockExcluded", "HrvFeatures", "hrv_features",
]
