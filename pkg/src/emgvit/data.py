"""Synthetic HD-sEMG generation, the on-disk dataset container, CSV ingestion.

Container layout (magic ``EMGDS1``): 6 magic bytes, an 8-byte little-endian
header length, a JSON header (geometry, exclusion flags, and one entry per
recording with its byte offset relative to the data section), then the
contiguous float64 little-endian sample blocks. Round-trips are bit-exact.

The synthetic generator models post-envelope structure directly: each gesture
owns a spatial activation map over the 8x8 electrode grid (near-bimodal
channel weights, so gestures activate distinct electrode subsets) and a
band-limited sinusoidal amplitude modulation whose rate and depth scale with
``separation`` (fast enough to leave a per-window temporal signature in the
envelope). Repetitions jitter the map and the modulation onset; the carrier
is white noise with additive sensor noise. At separation 0 the map is flat
and the modulation depth is zero, so every gesture is statistically
identical. Everything derives from the seed; identical specs give
byte-identical datasets.
"""
from __future__ import annotations

import csv
import json
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    ParameterError,
    ParseError,
    ShapeError,
)
from .signals import EmgRecording

MAGIC = b"EMGDS1"
GRID_ROWS = 8
GRID_COLS = 8
MIN_SAMPLES = 64  # one default window

_MAP_STREAM = 0x4D41502E
_TRIAL_STREAM = 0x54524C2E


@dataclass(frozen=True)
class RecordingInfo:
    subject_id: int
    gesture_id: int
    repetition_id: int
    offset: int  # bytes from the start of the data section
    num_samples: int


@dataclass(frozen=True)
class DatasetManifest:
    num_subjects: int
    num_gestures: int
    num_repetitions: int
    sample_rate_hz: float
    grid_rows: int
    grid_cols: int
    excluded_subjects: tuple = ()
    recordings: tuple = ()

    def __post_init__(self):
        triples = [(r.subject_id, r.gesture_id, r.repetition_id) for r in self.recordings]
        if len(set(triples)) != len(triples):
            raise FormatError("manifest declares duplicate (subject, gesture, repetition) triples")

    @property
    def num_channels(self) -> int:
        return self.grid_rows * self.grid_cols

    def active_subjects(self) -> list:
        excluded = set(self.excluded_subjects)
        return sorted(
            {r.subject_id for r in self.recordings if r.subject_id not in excluded}
        )


@dataclass
class Dataset:
    manifest: DatasetManifest
    recordings: list = field(default_factory=list)

    def active_recordings(self) -> list:
        excluded = set(self.manifest.excluded_subjects)
        return [r for r in self.recordings if r.subject_id not in excluded]


@dataclass(frozen=True)
class SyntheticSpec:
    num_gestures: int
    num_repetitions: int = 5
    duration_s: float = 0.25
    noise_sigma: float = 0.05
    seed: int = 0
    separation: float = 5.0
    sample_rate_hz: float = 2048.0

    def __post_init__(self):
        if self.num_gestures < 1 or self.num_repetitions < 1:
            raise ParameterError("need at least one gesture and one repetition")
        if self.separation < 0:
            raise ParameterError(f"separation must be >= 0, got {self.separation}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.duration_s * self.sample_rate_hz < MIN_SAMPLES:
            raise ParameterError(
                f"duration of {self.duration_s} s at {self.sample_rate_hz} Hz is "
                f"shorter than one {MIN_SAMPLES}-sample window"
            )


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """One synthetic subject performing every gesture num_repetitions times."""
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    channels = GRID_ROWS * GRID_COLS
    t = np.arange(n) / spec.sample_rate_hz
    mod_depth = min(0.8, 0.16 * spec.separation)
    recordings = []
    infos = []
    offset = 0
    for g in range(spec.num_gestures):
        rng_map = np.random.default_rng([spec.seed, _MAP_STREAM, g])
        activation = 1.0 + spec.separation * rng_map.beta(0.3, 0.3, channels)
        mod_freq = 15.0 + 9.0 * spec.separation * rng_map.uniform(0.0, 1.0)
        mod_phase = rng_map.uniform(0.0, 2.0 * math.pi)
        for r in range(spec.num_repetitions):
            rng = np.random.default_rng([spec.seed, _TRIAL_STREAM, g, r])
            jitter = 1.0 + 0.01 * rng.standard_normal(channels)
            onset = rng.uniform(0.0, 0.5)
            modulation = 1.0 + mod_depth * np.sin(
                2.0 * math.pi * mod_freq * (t + onset) + mod_phase
            )
            amplitude = modulation[:, None] * (activation * jitter)[None, :]
            carrier = rng.standard_normal((n, channels))
            sensor = spec.noise_sigma * rng.standard_normal((n, channels))
            samples = amplitude * carrier + sensor
            recordings.append(
                EmgRecording(
                    samples=samples,
                    sample_rate_hz=spec.sample_rate_hz,
                    subject_id=0,
                    gesture_id=g,
                    repetition_id=r,
                )
            )
            infos.append(RecordingInfo(0, g, r, offset, n))
            offset += n * channels * 8
    manifest = DatasetManifest(
        num_subjects=1,
        num_gestures=spec.num_gestures,
        num_repetitions=spec.num_repetitions,
        sample_rate_hz=spec.sample_rate_hz,
        grid_rows=GRID_ROWS,
        grid_cols=GRID_COLS,
        recordings=tuple(infos),
    )
    return Dataset(manifest=manifest, recordings=recordings)


# ---------------------------------------------------------------------------
# container i/o
# ---------------------------------------------------------------------------

def write_dataset(dataset: Dataset, path: str) -> None:
    """Serialize to the EMGDS1 container (atomic: temp file then rename)."""
    manifest = dataset.manifest
    entries = []
    offset = 0
    for rec in dataset.recordings:
        if rec.num_channels != manifest.num_channels:
            raise ShapeError(
                f"recording ({rec.subject_id},{rec.gesture_id},{rec.repetition_id}) "
                f"has {rec.num_channels} channels, grid needs {manifest.num_channels}"
            )
        entries.append(
            {
                "subject": rec.subject_id,
                "gesture": rec.gesture_id,
                "repetition": rec.repetition_id,
                "offset": offset,
                "num_samples": rec.num_samples,
            }
        )
        offset += rec.num_samples * rec.num_channels * 8
    header = {
        "version": 1,
        "num_subjects": manifest.num_subjects,
        "num_gestures": manifest.num_gestures,
        "num_repetitions": manifest.num_repetitions,
        "sample_rate_hz": manifest.sample_rate_hz,
        "grid_rows": manifest.grid_rows,
        "grid_cols": manifest.grid_cols,
        "excluded_subjects": list(manifest.excluded_subjects),
        "recordings": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for rec in dataset.recordings:
            fh.write(np.ascontiguousarray(rec.samples, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_dataset(path: str) -> Dataset:
    """Parse an EMGDS1 container, validating structure and block bounds."""
    file_size = os.path.getsize(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise FormatError(f"{path}: truncated header length")
        header_len = int.from_bytes(raw_len, "little")
        raw_header = fh.read(header_len)
        if len(raw_header) != header_len:
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(raw_header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: unreadable header ({exc})") from None
        if header.get("version") != 1:
            raise FormatError(f"{path}: unsupported version {header.get('version')}")
        data_start = len(MAGIC) + 8 + header_len
        channels = header["grid_rows"] * header["grid_cols"]
        infos = []
        recordings = []
        for entry in header["recordings"]:
            triple = (entry["subject"], entry["gesture"], entry["repetition"])
            length = entry["num_samples"] * channels * 8
            if data_start + entry["offset"] + length > file_size:
                raise CorruptionError(
                    f"{path}: block for (subject={triple[0]}, gesture={triple[1]}, "
                    f"repetition={triple[2]}) extends past end of file"
                )
            fh.seek(data_start + entry["offset"])
            raw = fh.read(length)
            if len(raw) != length:
                raise CorruptionError(
                    f"{path}: short read for (subject={triple[0]}, gesture={triple[1]}, "
                    f"repetition={triple[2]})"
                )
            samples = (
                np.frombuffer(raw, dtype="<f8")
                .reshape(entry["num_samples"], channels)
                .copy()
            )
            recordings.append(
                EmgRecording(
                    samples=samples,
                    sample_rate_hz=header["sample_rate_hz"],
                    subject_id=entry["subject"],
                    gesture_id=entry["gesture"],
                    repetition_id=entry["repetition"],
                )
            )
            infos.append(RecordingInfo(*triple, entry["offset"], entry["num_samples"]))
    manifest = DatasetManifest(
        num_subjects=header["num_subjects"],
        num_gestures=header["num_gestures"],
        num_repetitions=header["num_repetitions"],
        sample_rate_hz=header["sample_rate_hz"],
        grid_rows=header["grid_rows"],
        grid_cols=header["grid_cols"],
        excluded_subjects=tuple(header["excluded_subjects"]),
        recordings=tuple(infos),
    )
    return Dataset(manifest=manifest, recordings=recordings)


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------

def _parse_mapping(mapping_config) -> dict:
    if isinstance(mapping_config, (str, os.PathLike)):
        with open(mapping_config, "r", encoding="utf-8") as fh:
            mapping_config = json.load(fh)
    required = {"filename_pattern", "grid_rows", "grid_cols", "sample_rate_hz"}
    missing = required - set(mapping_config)
    if missing:
        raise ParseError(f"mapping config is missing keys: {sorted(missing)}")
    pattern = re.compile(mapping_config["filename_pattern"])
    groups = set(pattern.groupindex)
    if not {"gesture", "repetition"} <= groups:
        raise ParseError(
            "filename_pattern needs named groups 'gesture' and 'repetition' "
            "(optional 'subject')"
        )
    return {
        "pattern": pattern,
        "grid_rows": int(mapping_config["grid_rows"]),
        "grid_cols": int(mapping_config["grid_cols"]),
        "sample_rate_hz": float(mapping_config["sample_rate_hz"]),
    }


def _read_csv_recording(path: str) -> np.ndarray:
    """Rows are samples, columns are channels; width fixed by the first row."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not cells:
                continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(
                    f"{path}: ragged row {lineno} has {len(cells)} cells, expected {width}"
                )
            row = []
            for col, cell in enumerate(cells):
                try:
                    row.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: non-numeric cell at row {lineno}, column {col}"
                    ) from None
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def import_csv(directory: str, mapping_config) -> Dataset:
    """Build a canonical dataset from one CSV per recording.

    CSV rows are samples and columns are channels (column order preserved).
    The mapping config supplies the grid geometry, sample rate and a filename
    regex with named groups gesture/repetition (and optionally subject).
    """
    mapping = _parse_mapping(mapping_config)
    channels = mapping["grid_rows"] * mapping["grid_cols"]
    names = sorted(f for f in os.listdir(directory) if f.lower().endswith(".csv"))
    recordings = []
    infos = []
    offset = 0
    for name in names:
        match = mapping["pattern"].match(name)
        if not match:
            continue
        subject = int(match.groupdict().get("subject") or 0)
        gesture = int(match.group("gesture"))
        repetition = int(match.group("repetition"))
        samples = _read_csv_recording(os.path.join(directory, name))
        if samples.shape[1] != channels:
            raise ShapeError(
                f"{name}: {samples.shape[1]} channels do not fill the "
                f"{mapping['grid_rows']}x{mapping['grid_cols']} grid"
            )
        recordings.append(
            EmgRecording(samples, mapping["sample_rate_hz"], subject, gesture, repetition)
        )
        infos.append(RecordingInfo(subject, gesture, repetition, offset, len(samples)))
        offset += samples.size * 8
    if not recordings:
        raise ParseError(f"{directory}: no CSV files matched the filename pattern")
    manifest = DatasetManifest(
        num_subjects=len({r.subject_id for r in recordings}),
        num_gestures=max(r.gesture_id for r in recordings) + 1,
        num_repetitions=max(r.repetition_id for r in recordings) + 1,
        sample_rate_hz=mapping["sample_rate_hz"],
        grid_rows=mapping["grid_rows"],
        grid_cols=mapping["grid_cols"],
        recordings=tuple(infos),
    )
    return Dataset(manifest=manifest, recordings=recordings)


def export_csv(dataset: Dataset, directory: str) -> list:
    """One CSV per recording (17 significant digits; exact float64 round-trip)."""
    os.makedirs(directory, exist_ok=True)
    written = []
    for rec in dataset.recordings:
        name = f"s{rec.subject_id:03d}_g{rec.gesture_id:03d}_r{rec.repetition_id:02d}.csv"
        path = os.path.join(directory, name)
        with open(path, "w", encoding="utf-8") as fh:
            for row in rec.samples:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")
        written.append(path)
    return written
