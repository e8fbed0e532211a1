"""End-to-end CLI tests on tiny datasets (presets are real; epochs are few)."""
import hashlib
import json
from importlib.resources import files as resource_files

import jsonschema
import numpy as np
import pytest

from emgvit.cli import RunConfig, load_run_config, main
from emgvit.data import read_dataset
from emgvit.errors import UsageError
from emgvit.vit import load_checkpoint, parameter_count, preset_config


def run_cli(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage failures
        return exc.code


def schema(name):
    path = resource_files("emgvit").joinpath(f"schemas/{name}")
    return json.loads(path.read_text())


def synth(tmp_path, name="d.emgds", gestures=4, duration=0.03125, seed=7):
    path = tmp_path / name
    code = run_cli(
        "synth", "--gestures", gestures, "--reps", 5, "--duration", duration,
        "--seed", seed, "-o", path,
    )
    assert code == 0
    return path


class TestSynth:
    def test_creates_manifest_with_all_triples(self, tmp_path):
        path = synth(tmp_path)
        ds = read_dataset(str(path))
        assert len(ds.manifest.recordings) == 20

    def test_same_command_same_bytes(self, tmp_path):
        a = synth(tmp_path, "a.emgds")
        b = synth(tmp_path, "b.emgds")
        ha = hashlib.sha256(a.read_bytes()).hexdigest()
        hb = hashlib.sha256(b.read_bytes()).hexdigest()
        assert ha == hb

    def test_zero_gestures_is_usage_error(self, tmp_path):
        assert run_cli("synth", "--gestures", 0, "-o", tmp_path / "x.emgds") == 2


class TestTrain:
    def train_args(self, data, out, epochs=1):
        return [
            "train", "--data", data, "--model", "III", "--seed", 1,
            "--epochs", epochs, "--batch-size", 16, "-o", out,
        ]

    def test_report_written_and_valid(self, tmp_path):
        data = synth(tmp_path)
        out = tmp_path / "run"
        assert run_cli(*self.train_args(data, out)) == 0
        report = json.loads((out / "report.json").read_text())
        jsonschema.validate(report, schema("report.schema.json"))
        assert report["model_id"] == "III"
        assert len(report["per_fold"]) == 5
        expected = parameter_count(preset_config("III", num_classes=4))
        assert report["param_count"] == expected
        full_task = parameter_count(preset_config("III", num_classes=65))
        assert report["param_count_full_task"] == full_task
        assert report["param_count_delta"] == full_task - 25_314
        assert (out / "run_config.json").exists()
        assert (out / "report.csv").exists()

    def test_boxplot_rows_match_subjects(self, tmp_path):
        data = synth(tmp_path)
        out = tmp_path / "run"
        run_cli(*self.train_args(data, out))
        lines = (out / "boxplot.csv").read_text().strip().splitlines()
        assert lines[0] == "subject_id,mean_accuracy"
        ds = read_dataset(str(data))
        assert len(lines) - 1 == ds.manifest.num_subjects

    def test_checkpoints_reloadable(self, tmp_path):
        data = synth(tmp_path)
        out = tmp_path / "run"
        run_cli(*self.train_args(data, out))
        ckpts = sorted(out.glob("checkpoint_s000_f*.vitckpt"))
        assert len(ckpts) == 5
        params = load_checkpoint(str(ckpts[0]))
        assert params.config.num_classes == 4

    def test_missing_dataset_exit_2_no_outputs(self, tmp_path):
        out = tmp_path / "runx"
        code = run_cli(*self.train_args(tmp_path / "absent.emgds", out))
        assert code == 2
        assert not out.exists()

    def test_rerun_from_dumped_config_reproduces_report(self, tmp_path):
        data = synth(tmp_path)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        run_cli(*self.train_args(data, out1))
        # the second run takes everything from the first run's resolved config
        code = run_cli(
            "train", "--data", data, "--config", out1 / "run_config.json", "-o", out2
        )
        assert code == 0
        a = json.loads((out1 / "report.json").read_text())
        b = json.loads((out2 / "report.json").read_text())
        for key in ("per_fold", "mean", "std", "param_count", "model_id", "seed"):
            assert a[key] == b[key]
        for sa, sb in zip(a["subjects"], b["subjects"]):
            assert sa["per_fold"] == sb["per_fold"]
        # CLI std uses the same divisor (n-1) as FoldReport
        assert a["std"] == pytest.approx(np.std(a["per_fold"], ddof=1), abs=1e-12)

    def test_invalid_model_choice(self, tmp_path):
        data = synth(tmp_path)
        assert run_cli("train", "--data", data, "--model", "IV", "-o", tmp_path / "r") == 2


class TestCompare:
    def test_compare_output_valid_and_folds_identical(self, tmp_path):
        data = synth(tmp_path)
        out = tmp_path / "cmp"
        code = run_cli(
            "compare", "--data", data, "--model", "III", "--seed", 2,
            "--epochs", 1, "--batch-size", 16, "-o", out,
        )
        assert code == 0
        comparison = json.loads((out / "compare.json").read_text())
        jsonschema.validate(comparison, schema("compare.schema.json"))
        assert comparison["folds_identical"] is True
        assert len(comparison["methods"]["vit"]["per_fold"]) == 5
        assert len(comparison["methods"]["lda"]["per_fold"]) == 5
        assert (out / "compare.csv").exists()

    def test_report_subcommand_prints(self, tmp_path, capsys):
        data = synth(tmp_path)
        out = tmp_path / "cmp"
        run_cli(
            "compare", "--data", data, "--model", "III", "--epochs", 1,
            "--batch-size", 16, "-o", out,
        )
        assert run_cli("report", "--run", out) == 0
        printed = capsys.readouterr().out
        assert "vit" in printed and "lda" in printed

    def test_report_missing_run(self, tmp_path):
        assert run_cli("report", "--run", tmp_path / "nowhere") == 2


class TestPreprocessAndImport:
    def test_preprocess_subcommand(self, tmp_path):
        data = synth(tmp_path)
        out = tmp_path / "clean.emgds"
        assert run_cli("preprocess", "--data", data, "--cutoff-hz", 150.0, "-o", out) == 0
        ds = read_dataset(str(out))
        for rec in ds.recordings:
            assert np.all(rec.samples >= 0.0)
            assert np.all(rec.samples <= 1.0)

    def test_import_subcommand(self, tmp_path):
        csv_dir = tmp_path / "csvs"
        csv_dir.mkdir()
        (csv_dir / "s0_g0_r0.csv").write_text("1,2\n3,4\n")
        (csv_dir / "s0_g1_r0.csv").write_text("5,6\n7,8\n")
        mapping = tmp_path / "map.json"
        mapping.write_text(
            json.dumps(
                {
                    "filename_pattern": r"s(?P<subject>\d+)_g(?P<gesture>\d+)_r(?P<repetition>\d+)\.csv",
                    "grid_rows": 1,
                    "grid_cols": 2,
                    "sample_rate_hz": 1000.0,
                }
            )
        )
        out = tmp_path / "imported.emgds"
        assert run_cli("import", "--dir", csv_dir, "--mapping", mapping, "-o", out) == 0
        ds = read_dataset(str(out))
        assert len(ds.recordings) == 2

    def test_import_bad_csv_is_runtime_error(self, tmp_path):
        csv_dir = tmp_path / "csvs"
        csv_dir.mkdir()
        (csv_dir / "s0_g0_r0.csv").write_text("1,2\n3,nope\n")
        mapping = tmp_path / "map.json"
        mapping.write_text(
            json.dumps(
                {
                    "filename_pattern": r"s(?P<subject>\d+)_g(?P<gesture>\d+)_r(?P<repetition>\d+)\.csv",
                    "grid_rows": 1,
                    "grid_cols": 2,
                    "sample_rate_hz": 1000.0,
                }
            )
        )
        assert run_cli("import", "--dir", csv_dir, "--mapping", mapping,
                       "-o", tmp_path / "x.emgds") == 1


class TestRunConfig:
    def test_defaults_and_round_trip(self):
        cfg = RunConfig()
        tree = cfg.to_dict()
        assert tree["signal"] == {"cutoff_hz": 1.0, "mu": 255.0}
        assert tree["train"]["batch_size"] == 128
        assert tree["train"]["epochs"] == 30
        assert RunConfig.from_dict(tree).to_dict() == tree

    def test_unknown_key_rejected(self):
        with pytest.raises(UsageError, match="unknown config key"):
            RunConfig.from_dict({"signal": {"cutof_hz": 2.0}})
        with pytest.raises(UsageError, match="unknown config key"):
            RunConfig.from_dict({"optimizer": {}})

    def test_config_file_loading(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 9, "train": {"epochs": 3}}))
        cfg = load_run_config(str(path))
        assert cfg.seed == 9
        assert cfg.train.epochs == 3
        assert cfg.train.batch_size == 128

    def test_missing_config_file(self):
        with pytest.raises(UsageError):
            load_run_config("/no/such/config.json")
