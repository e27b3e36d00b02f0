"""CLI subcommands on a miniature corpus, end to end."""

import json
from pathlib import Path

import numpy as np
import pytest

from tptkit.cli import main

CONFIG = """
[paths]
corpus = "corpus"
artifacts = "artifacts"
reports = "reports"

[synth]
n_stations = 24
count = {count}
step_minutes = 60
seed = 42
sill_k2 = 4.0
range_km = 60.0
phi_range = [0.96, 0.98]
corrupt_fraction = 0.005
corrupt_seed = 7

[grid]
nx = 12
buffer_km = 40.0

[qc]
end_fill_window = 24

[variogram]
bin_width_m = 40000.0
max_lag_m = 400000.0
n_snapshots = 16

[split]
seed = 1

[train]
lr = 1e-3
epochs = 2
batch_size = 32
seed = 0
lead_hours = [3]
max_train_samples = 96
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = base / "tptkit.toml"
    cfg.write_text(CONFIG.format(count=24 * 366))
    return base, cfg


def run(cfg, *argv):
    return main(["--config", str(cfg), *argv])


def test_full_chain(workdir):
    base, cfg = workdir
    assert run(cfg, "synth") == 0
    assert (base / "corpus" / "stations.csv").exists()
    assert (base / "corpus" / "land_mask.csv").exists()

    assert run(cfg, "ingest") == 0
    assert run(cfg, "qc") == 0
    report = json.loads((base / "artifacts" / "qc_report.json").read_text())
    assert report["replaced_fraction"] < 0.01

    assert run(cfg, "climatology") == 0
    assert run(cfg, "transform") == 0
    assert (base / "artifacts" / "theta.bin").exists()
    assert (base / "artifacts" / "height_model.json").exists()

    assert run(cfg, "krige") == 0
    assert (base / "artifacts" / "mesh.bin").exists()
    assert (base / "artifacts" / "variogram.json").exists()

    assert run(cfg, "stats") == 0
    assert (base / "reports" / "its.csv").exists()
    assert (base / "reports" / "spatial_corr.csv").exists()

    assert run(cfg, "train", "--model", "gnn", "--lead", "3") == 0
    model_json = json.loads(
        (base / "artifacts" / "models" / "gnn_h3.bin.json").read_text()
    )
    assert model_json["kind"] == "gnn"
    assert len(model_json["loss_history"]["train"]) == 2

    assert run(cfg, "predict", "--model", "gnn", "--lead", "3") == 0
    assert run(cfg, "predict", "--model", "persistence", "--lead", "3") == 0
    assert run(cfg, "evaluate", "--model", "gnn", "--lead", "3") == 0
    summary = json.loads(
        (base / "reports" / "gnn_h3" / "summary.json").read_text()
    )
    assert summary["lead_hours"] == 3
    assert summary["rmse_k"] > 0
    assert (base / "reports" / "gnn_h3" / "rmse_station.csv").exists()
    assert (base / "reports" / "gnn_h3" / "scatter.csv").exists()

    assert run(cfg, "rollout", "--model", "gnn", "--lead", "3", "--k", "2") == 0
    assert (base / "artifacts" / "pred" / "gnn_h3x2.bin").exists()

    assert run(cfg, "report") == 0
    collected = json.loads((base / "reports" / "report.json").read_text())
    assert "stages" in collected and "evaluations" in collected


def test_rerun_byte_identical(workdir):
    base, cfg = workdir
    mesh = (base / "artifacts" / "mesh.bin").read_bytes()
    theta = (base / "artifacts" / "theta.bin").read_bytes()
    model = (base / "artifacts" / "models" / "gnn_h3.bin").read_bytes()
    history = json.loads((base / "artifacts" / "models" / "gnn_h3.bin.json").read_text())

    assert run(cfg, "transform") == 0
    assert run(cfg, "krige") == 0
    assert run(cfg, "train", "--model", "gnn", "--lead", "3") == 0

    assert (base / "artifacts" / "theta.bin").read_bytes() == theta
    assert (base / "artifacts" / "mesh.bin").read_bytes() == mesh
    assert (base / "artifacts" / "models" / "gnn_h3.bin").read_bytes() == model
    history2 = json.loads((base / "artifacts" / "models" / "gnn_h3.bin.json").read_text())
    assert history2["loss_history"] == history["loss_history"]


def test_cnn_train_predict_evaluate(workdir):
    base, cfg = workdir
    assert run(cfg, "train", "--model", "cnn", "--lead", "3", "--epochs", "1") == 0
    assert run(cfg, "predict", "--model", "cnn", "--lead", "3") == 0
    assert run(cfg, "evaluate", "--model", "cnn", "--lead", "3") == 0
    summary = json.loads((base / "reports" / "cnn_h3" / "summary.json").read_text())
    assert "mesh_rmse_k" in summary


def test_sweep(workdir):
    base, cfg = workdir
    assert run(cfg, "sweep", "--widths", "4,8") == 0
    lines = (base / "reports" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "predictor_width,param_count,val_rmse_k"
    assert len(lines) == 3
    w4 = int(lines[1].split(",")[1])
    w8 = int(lines[2].split(",")[1])
    assert w8 > w4


def test_external_comparison(workdir):
    base, cfg = workdir
    # external forecast = truth temps in Celsius at lead 3
    from tptkit.artifacts import load_dataset

    clean = load_dataset(base / "artifacts" / "clean.bin")
    times = clean.grid.times()
    rows = ["timestamp_utc,station_id,lead_h,temp_c"]
    for s in clean.stations[:5]:
        vals = clean.series[s.id].values - 273.15
        for t in range(0, 200, 5):
            stamp = times[t].strftime("%Y-%m-%dT%H:%M:%SZ")
            rows.append(f"{stamp},{s.id},3,{vals[t]:.6f}")
    ext = base / "external.csv"
    ext.write_text("\n".join(rows) + "\n")
    assert run(cfg, "evaluate", "--model", "gnn", "--lead", "3",
               "--external", str(ext)) == 0
    payload = json.loads((base / "reports" / "gnn_h3" / "external.json").read_text())
    assert payload["aggregate_rmse_k"] == pytest.approx(0.0, abs=1e-4)


def test_missing_artifact_names_producer(tmp_path):
    cfg = tmp_path / "t.toml"
    cfg.write_text(CONFIG.format(count=24 * 366))
    code = main(["--config", str(cfg), "qc"])
    assert code == 1


def test_unknown_flag_usage_error(workdir):
    _, cfg = workdir
    with pytest.raises(SystemExit) as exc:
        main(["--config", str(cfg), "synth", "--bogus-flag"])
    assert exc.value.code != 0


def test_bad_config_path():
    assert main(["--config", "/nonexistent/zzz.toml", "synth"]) == 1


def test_humidity_feature_end_to_end(tmp_path):
    cfg = tmp_path / "h.toml"
    cfg.write_text("""
[synth]
n_stations = 10
count = 8784
seed = 5
emit_humidity = true

[grid]
nx = 8
buffer_km = 60.0

[variogram]
bin_width_m = 60000.0
max_lag_m = 400000.0
n_snapshots = 8

[train]
lr = 1e-3
epochs = 1
batch_size = 32
seed = 0
lead_hours = [3]
max_train_samples = 48
use_humidity = true
""")
    for argv in (["synth"], ["qc"], ["climatology"], ["transform"],
                 ["train", "--model", "gnn", "--lead", "3"],
                 ["predict", "--model", "gnn", "--lead", "3"]):
        assert main(["--config", str(cfg), *argv]) == 0, argv
    manifest = json.loads(
        (tmp_path / "artifacts" / "models" / "gnn_h3.bin.json").read_text()
    )
    assert manifest["config"]["use_humidity"] is True
