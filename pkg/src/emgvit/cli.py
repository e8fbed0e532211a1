"""Command-line orchestration.

Subcommands: synth, import, preprocess, train, compare, report. Every run
writes its fully-resolved configuration next to its outputs, so a run
directory is self-describing and reproducible. Exit codes: 0 success,
1 runtime failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import baseline as baseline_mod
from . import data as data_mod
from .errors import EmgVitError, UsageError
from .segment import WindowingSpec, slide_windows
from .signals import FilterSpec, preprocess
from .train import FoldReport, TrainConfig, make_folds, run_cv
from .vit import (
    PARAM_COUNT_REFERENCE,
    PRESETS,
    VitConfig,
    parameter_count,
    preset_config,
    save_checkpoint,
)


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass
class SignalSection:
    cutoff_hz: float = 1.0
    mu: float = 255.0


@dataclass
class SegmentSection:
    window_size: int = 64
    skip_step: int = 32
    patch_side: int = 4
    patch_layout: str = "time_by_channels"


@dataclass
class ModelSection:
    preset: str = "III"
    num_classes: int | None = None  # None: taken from the dataset manifest
    final_layernorm: bool = True
    activation: str = "gelu"


@dataclass
class TrainSection:
    beta1: float = 0.9
    beta2: float = 0.999
    learning_rate: float = 1e-4
    weight_decay: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    adam_eps: float = 1e-8
    decoupled_weight_decay: bool = True


@dataclass
class BaselineSection:
    shrinkage: float = 0.05
    zc_threshold: float = 0.0
    ssc_threshold: float = 0.0
    ar_method: str = "burg"


@dataclass
class RunConfig:
    seed: int = 0
    jobs: int = 1
    signal: SignalSection = field(default_factory=SignalSection)
    segment: SegmentSection = field(default_factory=SegmentSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, tree: dict) -> "RunConfig":
        cfg = cls()
        _apply_section(cfg, tree, path="")
        return cfg


_SECTIONS = {
    "signal": SignalSection,
    "segment": SegmentSection,
    "model": ModelSection,
    "train": TrainSection,
    "baseline": BaselineSection,
}


def _apply_section(target, tree: dict, path: str) -> None:
    if not isinstance(tree, dict):
        raise UsageError(f"config section {path or '<root>'} must be an object")
    known = {f.name for f in fields(target)}
    for key, value in tree.items():
        if key not in known:
            raise UsageError(f"unknown config key {path}{key}")
        if key in _SECTIONS and hasattr(target, key):
            _apply_section(getattr(target, key), value, path=f"{key}.")
        else:
            setattr(target, key, value)


def load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            tree = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(tree)


def resolve_model_config(section: ModelSection, num_classes: int, num_patches: int,
                         patch_dim: int, patch_side: int = 4) -> VitConfig:
    if section.preset not in PRESETS:
        raise UsageError(f"model preset must be one of {sorted(PRESETS)}, got {section.preset!r}")
    classes = section.num_classes if section.num_classes is not None else num_classes
    return preset_config(
        section.preset,
        num_classes=classes,
        num_patches=num_patches,
        patch_dim=patch_dim,
        patch_side=patch_side,
        final_layernorm=section.final_layernorm,
        activation=section.activation,
    )


# ---------------------------------------------------------------------------
# shared pipeline pieces
# ---------------------------------------------------------------------------

def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path: str, payload: dict) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def prepare_windows(dataset: data_mod.Dataset, config: RunConfig):
    """Preprocess every active recording and cut windows, grouped by subject.

    Returns (windows_by_subject, preprocess_seconds).
    """
    manifest = dataset.manifest
    spec = FilterSpec(cutoff_hz=config.signal.cutoff_hz)
    windowing = WindowingSpec(config.segment.window_size, config.segment.skip_step)
    started = time.perf_counter()
    by_subject: dict[int, list] = {}
    for rec in dataset.active_recordings():
        clean = preprocess(rec, spec, mu=config.signal.mu)
        windows = slide_windows(clean, manifest.grid_rows, manifest.grid_cols, windowing)
        by_subject.setdefault(rec.subject_id, []).extend(windows)
    elapsed = time.perf_counter() - started
    if not by_subject:
        raise UsageError("dataset has no active recordings (all subjects excluded?)")
    return by_subject, elapsed


def fold_signature(membership) -> str:
    """Hash of per-fold window identities (subject, gesture, repetition, index)."""
    canon = [sorted(fold) for fold in membership]
    return hashlib.sha256(json.dumps(canon).encode("utf-8")).hexdigest()


def vit_fold_membership(windows) -> list:
    """Test-set identities per fold as consumed by the transformer CV."""
    indexed = {id(w): i for i, w in enumerate(windows)}
    out = []
    for _, test in make_folds(windows):
        out.append(
            [[w.subject_id, w.gesture_id, w.repetition_id, indexed[id(w)]] for w in test]
        )
    return out


def lda_fold_membership(windows) -> list:
    """Test-set identities per fold as consumed by the LDA CV (mask rule)."""
    reps = np.array([w.repetition_id for w in windows])
    out = []
    for k in range(5):
        out.append(
            [
                [w.subject_id, w.gesture_id, w.repetition_id, i]
                for i, w in enumerate(windows)
                if reps[i] == k
            ]
        )
    return out


def aggregate_reports(per_subject: dict[int, FoldReport]) -> dict:
    """Average fold accuracies across subjects; std over the averaged folds."""
    fold_matrix = np.array([r.fold_accuracies for r in per_subject.values()])
    per_fold = fold_matrix.mean(axis=0)
    return {
        "per_fold": [float(v) for v in per_fold],
        "mean": float(per_fold.mean()),
        "std": float(np.std(per_fold, ddof=1)),
        "preprocess_s": float(sum(r.preprocess_seconds for r in per_subject.values())),
        "train_s": float(sum(r.train_seconds for r in per_subject.values())),
    }


def train_config_from(config: RunConfig) -> TrainConfig:
    t = config.train
    return TrainConfig(
        beta1=t.beta1,
        beta2=t.beta2,
        learning_rate=t.learning_rate,
        weight_decay=t.weight_decay,
        batch_size=t.batch_size,
        epochs=t.epochs,
        seed=config.seed,
        adam_eps=t.adam_eps,
        decoupled_weight_decay=t.decoupled_weight_decay,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.gestures < 1:
        raise UsageError(f"--gestures must be >= 1, got {args.gestures}")
    if args.reps < 1:
        raise UsageError(f"--reps must be >= 1, got {args.reps}")
    spec = data_mod.SyntheticSpec(
        num_gestures=args.gestures,
        num_repetitions=args.reps,
        duration_s=args.duration,
        noise_sigma=args.noise,
        seed=args.seed,
        separation=args.separation,
        sample_rate_hz=args.rate,
    )
    dataset = data_mod.generate_synthetic(spec)
    data_mod.write_dataset(dataset, args.output)
    m = dataset.manifest
    print(
        f"wrote {args.output}: {len(dataset.recordings)} recordings "
        f"({m.num_gestures} gestures x {m.num_repetitions} repetitions), "
        f"{m.grid_rows}x{m.grid_cols} grid at {m.sample_rate_hz:g} Hz, "
        f"{os.path.getsize(args.output)} bytes"
    )
    return 0


def cmd_import(args) -> int:
    dataset = data_mod.import_csv(args.dir, args.mapping)
    data_mod.write_dataset(dataset, args.output)
    print(
        f"imported {len(dataset.recordings)} recordings from {args.dir} "
        f"into {args.output}"
    )
    return 0


def cmd_preprocess(args) -> int:
    config = load_run_config(args.config)
    if args.cutoff_hz is not None:
        config.signal.cutoff_hz = args.cutoff_hz
    if args.mu is not None:
        config.signal.mu = args.mu
    dataset = _read_dataset_arg(args.data)
    spec = FilterSpec(cutoff_hz=config.signal.cutoff_hz)
    cleaned = [preprocess(rec, spec, mu=config.signal.mu) for rec in dataset.recordings]
    data_mod.write_dataset(
        data_mod.Dataset(manifest=dataset.manifest, recordings=cleaned), args.output
    )
    print(
        f"preprocessed {len(cleaned)} recordings "
        f"(cutoff {config.signal.cutoff_hz:g} Hz, mu {config.signal.mu:g}) -> {args.output}"
    )
    return 0


def _read_dataset_arg(path: str) -> data_mod.Dataset:
    if not os.path.exists(path):
        raise UsageError(f"dataset not found: {path}")
    return data_mod.read_dataset(path)


def _resolve_run_config(args) -> RunConfig:
    config = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise UsageError(f"--jobs must be >= 1, got {args.jobs}")
        config.jobs = args.jobs
    if getattr(args, "model", None) is not None:
        config.model.preset = args.model
    if getattr(args, "epochs", None) is not None:
        config.train.epochs = args.epochs
    if getattr(args, "batch_size", None) is not None:
        config.train.batch_size = args.batch_size
    if getattr(args, "learning_rate", None) is not None:
        config.train.learning_rate = args.learning_rate
    if getattr(args, "cutoff_hz", None) is not None:
        config.signal.cutoff_hz = args.cutoff_hz
    return config


def _geometry(config: RunConfig, windows):
    from .segment import patch_geometry

    t, rows, cols = windows[0].data.shape
    return patch_geometry(
        t, rows, cols, config.segment.patch_side, config.segment.patch_layout
    )


def _param_audit(vit_config: VitConfig, preset: str) -> dict:
    count = parameter_count(vit_config)
    audit = {
        "param_count": count,
        "param_count_no_qkv_bias": parameter_count(vit_config, include_qkv_bias=False),
    }
    reference = PARAM_COUNT_REFERENCE.get(preset)
    if reference is not None:
        # the reference budgets assume the full 65-gesture task over the
        # default window geometry; the delta compares at that geometry
        full_task = parameter_count(preset_config(preset, num_classes=65))
        audit["param_count_full_task"] = full_task
        audit["param_count_reference"] = reference
        audit["param_count_delta"] = full_task - reference
    return audit


def cmd_train(args) -> int:
    config = _resolve_run_config(args)
    dataset = _read_dataset_arg(args.data)
    os.makedirs(args.output, exist_ok=True)
    write_json(os.path.join(args.output, "run_config.json"), config.to_dict())

    by_subject, preprocess_s = prepare_windows(dataset, config)
    train_config = train_config_from(config)
    per_subject: dict[int, FoldReport] = {}
    vit_config = None
    for subject_id, windows in sorted(by_subject.items()):
        n, pd_ = _geometry(config, windows)
        vit_config = resolve_model_config(
            config.model, dataset.manifest.num_gestures, n, pd_,
            patch_side=config.segment.patch_side,
        )

        def save_fold(fold_index: int, params, _subject=subject_id):
            path = os.path.join(
                args.output, f"checkpoint_s{_subject:03d}_f{fold_index}.vitckpt"
            )
            save_checkpoint(params, path, seed=config.seed)

        per_subject[subject_id] = run_cv(
            windows,
            vit_config,
            train_config,
            patch_layout=config.segment.patch_layout,
            preprocess_seconds=preprocess_s / len(by_subject),
            on_fold=save_fold,
            jobs=config.jobs,
        )

    summary = aggregate_reports(per_subject)
    report = {
        "model_id": config.model.preset,
        "seed": config.seed,
        **summary,
        **_param_audit(vit_config, config.model.preset),
        "subjects": [
            {"subject_id": sid, **r.to_dict()} for sid, r in sorted(per_subject.items())
        ],
    }
    write_json(os.path.join(args.output, "report.json"), report)
    _write_report_csv(os.path.join(args.output, "report.csv"), report)
    _write_boxplot_csv(os.path.join(args.output, "boxplot.csv"), per_subject)
    print(
        f"model {report['model_id']}: mean accuracy {report['mean']:.4f} "
        f"(std {report['std']:.4f}, {report['param_count']} parameters) -> {args.output}"
    )
    return 0


def _write_report_csv(path: str, report: dict) -> None:
    cols = ["model_id"] + [f"fold{i + 1}" for i in range(len(report["per_fold"]))] + [
        "mean", "std", "param_count", "preprocess_s", "train_s",
    ]
    row = (
        [report["model_id"]]
        + [f"{v:.6f}" for v in report["per_fold"]]
        + [
            f"{report['mean']:.6f}",
            f"{report['std']:.6f}",
            str(report["param_count"]),
            f"{report['preprocess_s']:.3f}",
            f"{report['train_s']:.3f}",
        ]
    )
    _atomic_write_text(path, ",".join(cols) + "\n" + ",".join(row) + "\n")


def _write_boxplot_csv(path: str, per_subject: dict[int, FoldReport]) -> None:
    lines = ["subject_id,mean_accuracy"]
    for sid, report in sorted(per_subject.items()):
        lines.append(f"{sid},{report.mean_accuracy:.6f}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_compare(args) -> int:
    config = _resolve_run_config(args)
    dataset = _read_dataset_arg(args.data)
    os.makedirs(args.output, exist_ok=True)
    write_json(os.path.join(args.output, "run_config.json"), config.to_dict())

    by_subject, preprocess_s = prepare_windows(dataset, config)
    train_config = train_config_from(config)
    vit_reports: dict[int, FoldReport] = {}
    lda_reports: dict[int, FoldReport] = {}
    signatures = []
    vit_config = None
    for subject_id, windows in sorted(by_subject.items()):
        n, pd_ = _geometry(config, windows)
        vit_config = resolve_model_config(
            config.model, dataset.manifest.num_gestures, n, pd_,
            patch_side=config.segment.patch_side,
        )
        vit_sig = fold_signature(vit_fold_membership(windows))
        lda_sig = fold_signature(lda_fold_membership(windows))
        signatures.append((vit_sig, lda_sig))
        share = preprocess_s / len(by_subject)
        vit_reports[subject_id] = run_cv(
            windows,
            vit_config,
            train_config,
            patch_layout=config.segment.patch_layout,
            preprocess_seconds=share,
            jobs=config.jobs,
        )
        lda_reports[subject_id] = baseline_mod.run_cv_lda(
            windows,
            shrinkage=config.baseline.shrinkage,
            zc_threshold=config.baseline.zc_threshold,
            ssc_threshold=config.baseline.ssc_threshold,
            ar_method=config.baseline.ar_method,
            preprocess_seconds=share,
        )

    folds_identical = all(v == l for v, l in signatures)
    comparison = {
        "model_id": config.model.preset,
        "seed": config.seed,
        "folds_identical": folds_identical,
        "fold_hash": signatures[0][0] if signatures else "",
        "methods": {
            "vit": {
                **aggregate_reports(vit_reports),
                **_param_audit(vit_config, config.model.preset),
            },
            "lda": aggregate_reports(lda_reports),
        },
    }
    write_json(os.path.join(args.output, "compare.json"), comparison)
    _write_compare_csv(os.path.join(args.output, "compare.csv"), comparison)
    v, l = comparison["methods"]["vit"], comparison["methods"]["lda"]
    print(
        f"vit mean {v['mean']:.4f} (train {v['train_s']:.1f}s) vs "
        f"lda mean {l['mean']:.4f} (train {l['train_s']:.1f}s); "
        f"folds identical: {folds_identical}"
    )
    return 0


def _write_compare_csv(path: str, comparison: dict) -> None:
    folds = len(comparison["methods"]["vit"]["per_fold"])
    cols = ["method"] + [f"fold{i + 1}" for i in range(folds)] + [
        "mean", "std", "preprocess_s", "train_s",
    ]
    lines = [",".join(cols)]
    for name, m in comparison["methods"].items():
        lines.append(
            ",".join(
                [name]
                + [f"{v:.6f}" for v in m["per_fold"]]
                + [f"{m['mean']:.6f}", f"{m['std']:.6f}",
                   f"{m['preprocess_s']:.3f}", f"{m['train_s']:.3f}"]
            )
        )
    _atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_report(args) -> int:
    path = os.path.join(args.run, "report.json")
    if not os.path.exists(path):
        path = os.path.join(args.run, "compare.json")
    if not os.path.exists(path):
        raise UsageError(f"no report.json or compare.json under {args.run}")
    with open(path, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    if "methods" in report:
        for name, m in report["methods"].items():
            _print_table_row(name, m)
    else:
        _print_table_row(report["model_id"], report)
    return 0


def _print_table_row(label: str, m: dict) -> None:
    folds = " ".join(f"{v * 100:6.2f}" for v in m["per_fold"])
    params = f" params={m['param_count']}" if "param_count" in m else ""
    print(
        f"{label:>6}: folds[%] {folds} | avg {m['mean'] * 100:6.2f} "
        f"| std {m['std'] * 100:5.2f}{params}"
    )


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON run-config file")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--jobs", type=int, default=None, help="parallel fold workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emgvit",
        description="HD-sEMG gesture recognition: transformer training and LDA baseline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--gestures", type=int, required=True)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--duration", type=float, default=0.25, help="seconds per recording")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--separation", type=float, default=5.0)
    p.add_argument("--rate", type=float, default=2048.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import", help="build a dataset from CSV recordings")
    p.add_argument("--dir", required=True)
    p.add_argument("--mapping", required=True, help="JSON mapping config")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("preprocess", help="apply the signal pipeline to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--cutoff-hz", type=float, default=None, dest="cutoff_hz")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train and cross-validate the transformer")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=sorted(PRESETS), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--cutoff-hz", type=float, default=None, dest="cutoff_hz")
    p.add_argument("-o", "--output", default="run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="transformer vs LDA on identical folds")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=sorted(PRESETS), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--cutoff-hz", type=float, default=None, dest="cutoff_hz")
    p.add_argument("-o", "--output", default="run")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="print the table for a finished run")
    p.add_argument("--run", required=True, help="run directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EmgVitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
