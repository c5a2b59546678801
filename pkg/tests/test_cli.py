import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from stoc.cli import main
from stoc.experiment import REGISTRY, ConfigError, ExperimentConfig, config_hash

FAST = ["--steps", "16", "--n-transforms", "4", "--splits", "1", "--seeds", "2", "--workers", "1"]


@pytest.fixture
def thyroid_dir(tmp_path):
    # stand-in file with the registry name and label convention
    rng = np.random.default_rng(0)
    rows = [f"{a:.4f},{b:.4f},{c:.4f},0" for a, b, c in rng.standard_normal((300, 3))]
    rows += [f"{a:.4f},{b:.4f},{c:.4f},1" for a, b, c in rng.standard_normal((40, 3)) + 4]
    (tmp_path / "thyroid.csv").write_text("f1,f2,f3,label\n" + "\n".join(rows) + "\n")
    return tmp_path


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_all_outputs(tmp_path, thyroid_dir):
    out = tmp_path / "out"
    rc = main(["run", "--dataset", "thyroid", "--data-path", str(thyroid_dir),
               "--ratios", "0,0.025,0.05,0.075,0.1", "--modes", "baseline,stoc-full",
               "--out", str(out), *FAST])
    assert rc == 0
    curves = _read(out / "curves.csv")
    assert len(curves) == 10
    assert {(r["ratio"], r["mode"]) for r in curves} == {
        (str(r), m) for r in (0.0, 0.025, 0.05, 0.075, 0.1) for m in ("baseline", "stoc-full")}
    assert len(_read(out / "runs.csv")) == 20
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["resolved"] == {"steps": 16, "n_transforms": 4}
    assert manifest["config_hash"] and "created" in manifest
    report = json.loads((out / "report.json").read_text())
    assert report["failures"] == 0 and "created" not in json.dumps(report)


def test_run_twice_is_byte_identical(tmp_path):
    args = ["run", "--dataset", "synth", "--ratios", "0,0.05", "--modes", "baseline,stoc-full", *FAST]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    for name in ("runs.csv", "curves.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_validate_names_gamma(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dataset": "synth", "gamma": 1.5}))
    assert main(["validate", "--config", str(bad)]) == 2
    assert "gamma" in capsys.readouterr().err


@pytest.mark.parametrize("flags, field", [
    (["--ratios", "0,0.2"], "ratios"),
    (["--dataset", "kdd-rev", "--ratios", "0.05"], "ratios"),
    (["--k", "0"], "k"),
    (["--modes", "baseline,nope"], "modes"),
    (["--scale-factor", "1.5"], "scale_factor"),
    (["--splits", "0"], "splits"),
    (["--dataset", "mystery"], "dataset"),
    (["--representation", "raw", "--modes", "stoc-full"], "modes"),
])
def test_validate_rejections(flags, field, capsys):
    assert main(["validate", *flags]) == 2
    assert f"{field}:" in capsys.readouterr().err


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": "synth", "gamma": 1.5, "k": 3}))
    assert main(["validate", "--config", str(cfg), "--gamma", "0.2"]) == 0
    assert "ok" in capsys.readouterr().out


def test_unknown_config_field(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"gama": 0.1}))
    assert main(["validate", "--config", str(cfg)]) == 2


def test_missing_dataset_file(tmp_path, capsys):
    assert main(["run", "--dataset", "thyroid", "--data-path", str(tmp_path), "--out",
                 str(tmp_path / "o")]) == 2
    assert "data_path" in capsys.readouterr().err


def test_scale_factor_only_scales_steps():
    c = ExperimentConfig(dataset="thyroid", scale_factor=0.25)
    assert c.resolved_steps() == (1 << 16) // 4 and c.resolved_transforms() == 256
    assert ExperimentConfig(dataset="kdd").resolved_steps() == 1 << 10


def test_registry_defaults():
    assert (REGISTRY["kdd"].n_transforms, REGISTRY["kdd"].steps) == (32, 1024)
    assert (REGISTRY["arrhythmia"].n_transforms, REGISTRY["arrhythmia"].steps) == (256, 65536)
    assert REGISTRY["kdd-rev"].descriptor.reverse_labels


def test_config_hash_ignores_plumbing():
    a = ExperimentConfig(out="x", workers=1)
    b = ExperimentConfig(out="y", workers=4)
    assert config_hash(a) == config_hash(b) != config_hash(ExperimentConfig(seed=1))


def test_config_error_carries_field():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(gamma=-1).validate()
    assert info.value.field == "gamma"


class TestRefineOnly:
    def _run(self, tmp_path, gamma):
        out = tmp_path / f"g{gamma}"
        rc = main(["refine-only", "--dataset", "synth", "--representation", "raw",
                   "--gamma", str(gamma), "--out", str(out)])
        assert rc == 0
        return out

    def test_gamma_zero_rejects_nothing(self, tmp_path):
        out = self._run(tmp_path, 0)
        assert (out / "rejected.txt").read_text() == ""

    def test_every_row_gets_a_verdict(self, tmp_path):
        out = self._run(tmp_path, 0.2)
        rows = _read(out / "refined.csv")
        synth = ExperimentConfig().synth
        assert len(rows) == synth["n_normal"] + synth["n_anomaly"]
        assert {r["verdict"] for r in rows} == {"kept", "rejected"}
        thresholds = json.loads((out / "thresholds.json").read_text())
        assert len(thresholds["thresholds"]) == 5

    def test_rejects_planted_anomalies(self, tmp_path):
        out = self._run(tmp_path, 0.2)
        rejected = {int(x) for x in (out / "rejected.txt").read_text().split()}
        table = ExperimentConfig().load_table()
        anomalies = set(np.flatnonzero(table.labels == 1).tolist())
        assert len(rejected & anomalies) >= 0.8 * len(anomalies)


def test_report_reaggregates(tmp_path):
    out = tmp_path / "o"
    main(["run", "--dataset", "synth", "--ratios", "0", "--modes", "baseline",
          "--representation", "raw", "--out", str(out), *FAST])
    before = (out / "curves.csv").read_bytes()
    (out / "curves.csv").unlink()
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "curves.csv").read_bytes() == before


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stoc", "validate", "--dataset", "synth"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("ok")
