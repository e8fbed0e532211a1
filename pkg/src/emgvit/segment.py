"""Window extraction and patch construction.

A preprocessed recording is cut into overlapping fixed-length windows; each
window is a (window_size, grid_rows, grid_cols) block that becomes the model
input. For the transformer, a window is flattened into a 2-D plane and cut
into square patches.

Two plane layouts are supported:

* ``time_by_channels`` (default): the electrode grid is flattened to one
  axis, giving a (window_size, rows*cols) plane. With the standard 64-sample
  window over an 8x8 grid and patch side 4 this yields 256 patches of
  dimension 16.
* ``grid_depth``: patches are cut over the (rows, cols) electrode plane and
  the full time axis is stacked as patch depth, so each patch has dimension
  side * side * window_size.

Patch order is row-major over the patch grid and each patch flattens
row-major, so ``unpatchify`` reconstructs the window exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyResultError, ParameterError, ShapeError
from .signals import EmgRecording

MAX_WINDOW_SECONDS = 0.300

PATCH_LAYOUTS = ("time_by_channels", "grid_depth")


@dataclass(frozen=True)
class WindowingSpec:
    """Sliding-window geometry in samples."""

    window_size: int = 64
    skip_step: int = 32

    def __post_init__(self):
        if self.window_size < 1:
            raise ParameterError(f"window_size must be >= 1, got {self.window_size}")
        if not 1 <= self.skip_step <= self.window_size:
            raise ParameterError(
                f"skip_step must be in [1, window_size], got {self.skip_step}"
            )

    def num_windows(self, num_samples: int) -> int:
        if num_samples < self.window_size:
            return 0
        return (num_samples - self.window_size) // self.skip_step + 1


@dataclass(frozen=True)
class WindowTensor:
    """One model input: (window_size, n_ch, n_cv) block with its labels."""

    data: np.ndarray
    gesture_id: int
    subject_id: int
    repetition_id: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 3:
            raise ShapeError(f"window data must be 3-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ShapeError("window contains non-finite values")

    @property
    def window_size(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class PatchSequence:
    """Row-major sequence of flattened square patches from one window."""

    patches: np.ndarray

    def __post_init__(self):
        patches = np.asarray(self.patches, dtype=np.float64)
        object.__setattr__(self, "patches", patches)
        if patches.ndim != 2:
            raise ShapeError(f"patches must be 2-D, got shape {patches.shape}")

    @property
    def num_patches(self) -> int:
        return self.patches.shape[0]

    @property
    def patch_dim(self) -> int:
        return self.patches.shape[1]


def slide_windows(
    recording: EmgRecording,
    grid_rows: int,
    grid_cols: int,
    spec: WindowingSpec | None = None,
) -> list[WindowTensor]:
    """Cut a recording into overlapping (window, rows, cols) blocks.

    Channel c maps to grid cell (c // grid_cols, c % grid_cols). Returns
    floor((num_samples - window) / skip) + 1 windows; window k starts at
    sample k * skip_step. Labels are copied from the recording.
    """
    if spec is None:
        spec = WindowingSpec()
    if recording.num_channels != grid_rows * grid_cols:
        raise ShapeError(
            f"recording has {recording.num_channels} channels, "
            f"grid {grid_rows}x{grid_cols} needs {grid_rows * grid_cols}"
        )
    if spec.window_size / recording.sample_rate_hz > MAX_WINDOW_SECONDS:
        raise ParameterError(
            f"window of {spec.window_size} samples at {recording.sample_rate_hz} Hz "
            f"exceeds the {MAX_WINDOW_SECONDS * 1000:.0f} ms response budget"
        )
    count = spec.num_windows(recording.num_samples)
    if count == 0:
        raise EmptyResultError(
            f"recording of {recording.num_samples} samples is shorter than "
            f"one window ({spec.window_size})"
        )
    windows = []
    for k in range(count):
        start = k * spec.skip_step
        block = recording.samples[start : start + spec.window_size]
        windows.append(
            WindowTensor(
                data=block.reshape(spec.window_size, grid_rows, grid_cols).copy(),
                gesture_id=recording.gesture_id,
                subject_id=recording.subject_id,
                repetition_id=recording.repetition_id,
            )
        )
    return windows


def _window_plane(data: np.ndarray, layout: str) -> np.ndarray:
    t, rows, cols = data.shape
    if layout == "time_by_channels":
        return data.reshape(t, rows * cols)
    if layout == "grid_depth":
        # (rows, cols) plane with the time axis stacked as depth
        return np.transpose(data, (1, 2, 0))
    raise ParameterError(f"unknown patch layout {layout!r}; expected one of {PATCH_LAYOUTS}")


def patchify(
    window: WindowTensor, patch_side: int, layout: str = "time_by_channels"
) -> PatchSequence:
    """Cut the window's 2-D plane into non-overlapping square patches."""
    if patch_side < 1:
        raise ParameterError(f"patch_side must be >= 1, got {patch_side}")
    plane = _window_plane(window.data, layout)
    h, w = plane.shape[0], plane.shape[1]
    if h % patch_side or w % patch_side:
        raise ShapeError(
            f"plane {h}x{w} is not divisible by patch side {patch_side}"
        )
    gh, gw = h // patch_side, w // patch_side
    depth = 1 if plane.ndim == 2 else plane.shape[2]
    grid = plane.reshape(gh, patch_side, gw, patch_side, depth)
    patches = grid.transpose(0, 2, 1, 3, 4).reshape(gh * gw, patch_side * patch_side * depth)
    return PatchSequence(patches=patches.copy())


def unpatchify(
    seq: PatchSequence,
    window_size: int,
    grid_rows: int,
    grid_cols: int,
    patch_side: int,
    layout: str = "time_by_channels",
) -> np.ndarray:
    """Exact inverse of patchify; returns the (window, rows, cols) data block."""
    if layout == "time_by_channels":
        h, w, depth = window_size, grid_rows * grid_cols, 1
    elif layout == "grid_depth":
        h, w, depth = grid_rows, grid_cols, window_size
    else:
        raise ParameterError(f"unknown patch layout {layout!r}; expected one of {PATCH_LAYOUTS}")
    gh, gw = h // patch_side, w // patch_side
    expected = (gh * gw, patch_side * patch_side * depth)
    if seq.patches.shape != expected:
        raise ShapeError(f"patch array {seq.patches.shape} does not match {expected}")
    grid = seq.patches.reshape(gh, gw, patch_side, patch_side, depth)
    plane = grid.transpose(0, 2, 1, 3, 4).reshape(h, w, depth)
    if layout == "time_by_channels":
        return plane.reshape(window_size, grid_rows, grid_cols)
    return np.transpose(plane, (2, 0, 1)).copy()


def patch_geometry(
    window_size: int, grid_rows: int, grid_cols: int, patch_side: int,
    layout: str = "time_by_channels",
) -> tuple[int, int]:
    """(num_patches, patch_dim) for a window geometry without building arrays."""
    if layout == "time_by_channels":
        h, w, depth = window_size, grid_rows * grid_cols, 1
    elif layout == "grid_depth":
        h, w, depth = grid_rows, grid_cols, window_size
    else:
        raise ParameterError(f"unknown patch layout {layout!r}; expected one of {PATCH_LAYOUTS}")
    if h % patch_side or w % patch_side:
        raise ShapeError(f"plane {h}x{w} is not divisible by patch side {patch_side}")
    return (h // patch_side) * (w // patch_side), patch_side * patch_side * depth


def patch_batch(
    windows: list[WindowTensor], patch_side: int, layout: str = "time_by_channels"
) -> np.ndarray:
    """Stack patchified windows into one (num_windows, N, patch_dim) array."""
    if not windows:
        raise EmptyResultError("no windows to patchify")
    return np.stack([patchify(w, patch_side, layout).patches for w in windows])
