"""Raw HD-sEMG preprocessing: rectification, envelope filtering, normalization.

The pipeline turns a raw multi-channel recording into a smoothed, companded
envelope in [0, 1]:

    rectify -> first-order Butterworth low-pass -> peak normalize -> mu-law

Each channel is filtered independently; nothing here mixes channels. All
transforms are pure functions returning new recordings.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as sps

from .errors import DegenerateInputError, DomainError, FilterError, ParameterError, ShapeError

DEFAULT_CUTOFF_HZ = 1.0
DEFAULT_MU = 255.0


@dataclass(frozen=True)
class EmgRecording:
    """One gesture trial: (num_samples, num_channels) float64 in normalized volts."""

    samples: np.ndarray
    sample_rate_hz: float
    subject_id: int
    gesture_id: int
    repetition_id: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 2:
            raise ShapeError(f"samples must be 2-D (time, channels), got {samples.shape}")
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ShapeError("recording needs at least one sample and one channel")
        if not self.sample_rate_hz > 0:
            raise ParameterError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise DomainError("recording contains non-finite samples")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]

    def with_samples(self, samples: np.ndarray) -> "EmgRecording":
        return replace(self, samples=samples)


@dataclass(frozen=True)
class FilterSpec:
    """First-order low-pass envelope filter; cutoff must stay below Nyquist."""

    cutoff_hz: float = DEFAULT_CUTOFF_HZ
    order: int = 1

    def __post_init__(self):
        if not self.cutoff_hz > 0:
            raise FilterError(f"cutoff_hz must be positive, got {self.cutoff_hz}")
        if self.order != 1:
            raise FilterError(f"only first-order filters are supported, got order {self.order}")

    def validate_against(self, sample_rate_hz: float) -> None:
        if self.cutoff_hz >= sample_rate_hz / 2.0:
            raise FilterError(
                f"cutoff {self.cutoff_hz} Hz must be below Nyquist ({sample_rate_hz / 2.0} Hz)"
            )


def rectify(recording: EmgRecording) -> EmgRecording:
    """Full-wave rectification: absolute value of every sample."""
    return recording.with_samples(np.abs(recording.samples))


def butterworth_lowpass(recording: EmgRecording, spec: FilterSpec) -> EmgRecording:
    """Filter each channel with a discrete first-order Butterworth low-pass.

    Coefficients come from the bilinear transform of the analog prototype with
    cutoff prewarping, so the -3 dB point lands exactly on cutoff_hz and the DC
    gain is 1. Zero initial filter state; output length equals input length.
    """
    spec.validate_against(recording.sample_rate_hz)
    b, a = sps.butter(1, spec.cutoff_hz / (recording.sample_rate_hz / 2.0), btype="low")
    filtered = sps.lfilter(b, a, recording.samples, axis=0)
    return recording.with_samples(filtered)


def scale_to_unit(recording: EmgRecording) -> EmgRecording:
    """Divide all channels by the recording's global max absolute value."""
    peak = np.max(np.abs(recording.samples))
    if peak == 0.0:
        raise DegenerateInputError("all-zero recording cannot be peak-normalized")
    return recording.with_samples(recording.samples / peak)


def mu_law(x: np.ndarray, mu: float) -> np.ndarray:
    """sign(x) * ln(1 + mu|x|) / ln(1 + mu) on values in [-1, 1]."""
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0):
        raise DomainError("mu-law input must lie in [-1, 1]; peak-normalize first")
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def mu_law_normalize(recording: EmgRecording, mu: float = DEFAULT_MU) -> EmgRecording:
    """Apply mu-law companding to every sample of the recording."""
    return recording.with_samples(mu_law(recording.samples, mu))


def preprocess(
    recording: EmgRecording,
    spec: FilterSpec | None = None,
    mu: float = DEFAULT_MU,
) -> EmgRecording:
    """rectify -> butterworth_lowpass -> scale_to_unit -> mu_law_normalize."""
    if spec is None:
        spec = FilterSpec()
    return mu_law_normalize(scale_to_unit(butterworth_lowpass(rectify(recording), spec)), mu)
