"""Cut a recording into overlapping windows and square patches."""
import numpy as np

from emgvit import EmgRecording, WindowingSpec, patchify, slide_windows, unpatchify

rng = np.random.default_rng(1)
rec = EmgRecording(
    rng.uniform(0, 1, (256, 64)), 2048.0, subject_id=0, gesture_id=2, repetition_id=1
)

spec = WindowingSpec(window_size=64, skip_step=32)
windows = slide_windows(rec, grid_rows=8, grid_cols=8, spec=spec)
print(f"{rec.num_samples} samples -> {len(windows)} windows "
      f"(formula: (256 - 64) // 32 + 1 = {(256 - 64) // 32 + 1})")
print(f"window shape: {windows[0].data.shape}, labels gesture={windows[0].gesture_id} "
      f"rep={windows[0].repetition_id}")

overlap = 64 - 32
same = np.array_equal(windows[0].data[32:], windows[1].data[:overlap])
print(f"consecutive windows share {overlap} samples: {same}")

seq = patchify(windows[0], patch_side=4)
print(f"patches: {seq.num_patches} x {seq.patch_dim} "
      f"(the 64x64 time-by-channels plane cut into 4x4 squares)")

restored = unpatchify(seq, 64, 8, 8, 4)
print(f"unpatchify restores the window exactly: {np.array_equal(restored, windows[0].data)}")

alt = patchify(windows[0], patch_side=4, layout="grid_depth")
print(f"alternative grid_depth layout: {alt.num_patches} patches of dim {alt.patch_dim}")
