"""Walk through the signal pipeline on one synthetic recording.

Stages: full-wave rectification, first-order Butterworth envelope,
peak normalization, mu-law companding.
"""
import numpy as np

from emgvit import EmgRecording, FilterSpec, mu_law_normalize, rectify, scale_to_unit
from emgvit.signals import butterworth_lowpass, mu_law

rng = np.random.default_rng(0)

# two channels of amplitude-modulated noise, like a short muscle burst
fs = 2048.0
t = np.arange(4096) / fs
burst = np.exp(-0.5 * ((t - 1.0) / 0.3) ** 2)
samples = np.stack(
    [0.8 * burst * rng.standard_normal(t.size), 0.3 * burst * rng.standard_normal(t.size)],
    axis=1,
)
raw = EmgRecording(samples, fs, subject_id=0, gesture_id=0, repetition_id=0)
print(f"raw:        min {raw.samples.min():+.3f}  max {raw.samples.max():+.3f}")

rect = rectify(raw)
print(f"rectified:  min {rect.samples.min():+.3f}  max {rect.samples.max():+.3f}")

smooth = butterworth_lowpass(rect, FilterSpec(cutoff_hz=4.0))
peak_at = np.argmax(smooth.samples[:, 0]) / fs
print(f"envelope:   peaks near t={peak_at:.2f}s (burst center is 1.00s)")

unit = scale_to_unit(smooth)
print(f"normalized: global max |x| = {np.abs(unit.samples).max():.6f}")

companded = mu_law_normalize(unit, mu=255.0)
print(f"mu-law:     channel means {companded.samples.mean(axis=0).round(3)}")

# the companding curve expands small amplitudes
for x in (0.01, 0.1, 0.5, 1.0):
    print(f"  mu-law({x:4.2f}) = {mu_law(np.array([x]), 255.0)[0]:.4f}")
