"""Command-line front end: synth | ingest | qc | climatology | transform |
krige | stats | train | predict | rollout | evaluate | sweep | report.

Every subcommand reads the same TOML config, consumes artifacts produced by
earlier stages, and writes its own artifacts atomically, so any stage can
be re-run in isolation and reproduces byte-identical outputs for fixed
seeds. ``TPTKIT_THREADS`` caps BLAS parallelism when set before launch.
"""

from __future__ import annotations

import os

if "TPTKIT_THREADS" in os.environ:  # must precede the numpy import chain
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["TPTKIT_THREADS"])

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import artifacts as art
from . import climatology as climo
from . import evaluate as ev
from .baselines import climatology_predict, persistence_predict
from .config import PipelineConfig, load_config
from .core import TEST, Dataset, split_dataset
from .errors import ConfigError, TptkitError
from .gridding import GridSpec, build_masks, sample_bilinear
from .height import HeightAdjustModel, fit_pressure_model, from_potential, to_potential
from .ingest import ingest_extras, write_observations, write_station_meta
from .kriging import krige_fields, roundtrip_report
from .meshio import read_fields, read_land_mask, write_fields, write_land_mask
from .nets import CnnConfig, CnnModel, GnnConfig, GnnModel, build_graph, load_params, save_params
from .qc import run_qc
from .stats import (
    LATITUDINAL,
    LONGITUDINAL,
    integral_time_scale,
    spatial_correlation,
    station_autocorrelation,
)
from .synth import corrupt, generate
from .training import MeshTrainer, StationTrainer, TrainConfig, lead_steps
from .variogram import empirical_variogram, fit_variogram, VariogramModel

STAGE_VERSION = "1"


def _manifest(cfg: PipelineConfig, stage: str, seed=None, extra: dict = None):
    entry = {"config_hash": art.config_hash(cfg.raw), "version": STAGE_VERSION}
    if seed is not None:
        entry["seed"] = seed
    if extra:
        entry.update(extra)
    art.update_manifest(cfg.artifacts_dir, stage, entry)


# ---------------------------------------------------------------------------
# corpus and preprocessing stages

def cmd_synth(cfg: PipelineConfig, args):
    dataset, truth = generate(cfg.synth)
    pressure = truth.pressure_hpa or None
    humidity = truth.rh_pct or None
    if cfg.corrupt_fraction > 0:
        dataset, log = corrupt(dataset, cfg.corrupt_fraction, cfg.corrupt_seed)
        print(f"synth: injected {log.total} corrupted samples")
    out = Path(args.out) if args.out else cfg.corpus_dir
    write_station_meta(dataset.stations, out / "stations.csv")
    write_observations(dataset, out / "observations.csv", pressure=pressure, rh=humidity)
    write_land_mask(truth.land, out / "land_mask.csv")
    spec = truth.grid_spec
    payload = {"nx": spec.nx, "ny": spec.ny, "dx_m": spec.dx_m,
               "origin_e": spec.origin_e, "origin_n": spec.origin_n}
    (out / "grid.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    _manifest(cfg, "synth", seed=cfg.synth.seed)
    print(f"synth: wrote corpus for {len(dataset.stations)} stations x "
          f"{dataset.grid.count} samples under {out}")


def _corpus_grid(cfg: PipelineConfig):
    from datetime import datetime, timezone

    from .core import TimeGrid

    start = datetime.fromisoformat(cfg.synth.start).replace(tzinfo=timezone.utc)
    return TimeGrid(start=start, step_minutes=cfg.synth.step_minutes, count=cfg.synth.count)


def cmd_ingest(cfg: PipelineConfig, args):
    meta = cfg.corpus_dir / "stations.csv"
    obs = cfg.corpus_dir / "observations.csv"
    if not meta.exists() or not obs.exists():
        raise art.missing_artifact(meta, "synth")
    dataset, extras = ingest_extras(meta, obs, _corpus_grid(cfg), bbox=cfg.synth.bbox)
    art.save_dataset(dataset, cfg.artifacts_dir / "raw.bin")
    if extras.pressure_hpa:
        press = np.vstack([extras.pressure_hpa[s] for s in dataset.station_ids])
        art._write_bin(cfg.artifacts_dir / "pressure.bin", press)
    if extras.rh_pct:
        rh = np.vstack([extras.rh_pct[s] for s in dataset.station_ids])
        art._write_bin(cfg.artifacts_dir / "rh.bin", rh)
    (cfg.artifacts_dir / "duplicates.json").write_text(
        json.dumps(extras.duplicate_counts, sort_keys=True) + "\n"
    )
    _manifest(cfg, "ingest")
    print(f"ingest: {len(dataset.stations)} stations aligned to {dataset.grid.count} samples")


def cmd_qc(cfg: PipelineConfig, args):
    # convenience: qc straight after synth ingests the corpus itself
    if not (cfg.artifacts_dir / "raw.bin").exists() and (
        cfg.corpus_dir / "observations.csv"
    ).exists():
        cmd_ingest(cfg, args)
    dataset = art.load_dataset(cfg.artifacts_dir / "raw.bin", producer="ingest")
    dup_path = cfg.artifacts_dir / "duplicates.json"
    dups = json.loads(dup_path.read_text()) if dup_path.exists() else None
    clean, report = run_qc(dataset, cfg.qc, duplicates=dups)
    art.save_dataset(clean, cfg.artifacts_dir / "clean.bin")
    out = Path(args.out) if getattr(args, "out", None) else cfg.artifacts_dir
    report.save(out / "qc_report.json")
    _manifest(cfg, "qc")
    print(f"qc: replaced_fraction={report.replaced_fraction:.5f} "
          f"totals={report.totals()}")


def cmd_climatology(cfg: PipelineConfig, args):
    clean = art.load_dataset(cfg.artifacts_dir / "clean.bin", producer="qc")
    tables = climo.compute_tables(clean, cfg.window_days)
    out = cfg.artifacts_dir / "climatology"
    for table in tables.values():
        climo.save_table(table, out)
    _manifest(cfg, "climatology")
    print(f"climatology: wrote {len(tables)} tables under {out}")


def _load_tables(cfg: PipelineConfig, dataset: Dataset):
    out = cfg.artifacts_dir / "climatology"
    tables = {}
    for sid in dataset.station_ids:
        path = out / f"{sid}.csv"
        if not path.exists():
            raise art.missing_artifact(path, "climatology")
        tables[sid] = climo.load_table(path)
    return tables


def _height_model(cfg: PipelineConfig) -> HeightAdjustModel:
    path = cfg.artifacts_dir / "height_model.json"
    if not path.exists():
        raise art.missing_artifact(path, "transform")
    return HeightAdjustModel.load(path)


def cmd_transform(cfg: PipelineConfig, args):
    clean = art.load_dataset(cfg.artifacts_dir / "clean.bin", producer="qc")
    tables = _load_tables(cfg, clean)

    press_path = cfg.artifacts_dir / "pressure.bin"
    if press_path.exists():
        press = np.fromfile(press_path, dtype="<f8").reshape(
            len(clean.stations), clean.grid.count
        )
        alts = [s.altitude_m for s in clean.stations]
        model = fit_pressure_model(alts, np.nanmean(press, axis=1), kappa=cfg.kappa)
        source = "fitted"
    else:
        model = HeightAdjustModel(kappa=cfg.kappa, scale_height_m=cfg.scale_height_m)
        source = "default"
    model.save(cfg.artifacts_dir / "height_model.json")

    theta_series = {}
    for s in clean.stations:
        prime = climo.decompose(clean.series[s.id], tables[s.id])
        theta = to_potential(prime.values, s.altitude_m, model)
        theta_series[s.id] = prime.with_values(theta)
    theta = clean.with_series(theta_series)
    theta = split_dataset(theta, cfg.split_fractions, cfg.split_seed)
    art.save_dataset(theta, cfg.artifacts_dir / "theta.bin")
    _manifest(cfg, "transform", seed=cfg.split_seed, extra={"height_model": source})
    print(f"transform: theta dataset written ({source} height model, "
          f"H={model.scale_height_m:.0f} m)")


def _grid_spec(cfg: PipelineConfig) -> GridSpec:
    path = cfg.corpus_dir / "grid.json"
    if not path.exists():
        raise art.missing_artifact(path, "synth")
    d = json.loads(path.read_text())
    return GridSpec(nx=d["nx"], ny=d["ny"], dx_m=d["dx_m"],
                    origin_e=d["origin_e"], origin_n=d["origin_n"])


def _masks(cfg: PipelineConfig, spec: GridSpec):
    path = cfg.corpus_dir / "land_mask.csv"
    if not path.exists():
        raise art.missing_artifact(path, "synth")
    return build_masks(read_land_mask(path), spec, cfg.buffer_km)


def cmd_krige(cfg: PipelineConfig, args):
    theta = art.load_dataset(cfg.artifacts_dir / "theta.bin", producer="transform")
    spec = _grid_spec(cfg)
    masks = _masks(cfg, spec)
    coords = np.array([[s.easting, s.northing] for s in theta.stations])
    values = theta.values_matrix().T  # (T, N)

    from .core import TRAIN

    train_rows = theta.split_indices(TRAIN)
    sampled = train_rows[:: max(1, train_rows.size // cfg.variogram_snapshots)][
        : cfg.variogram_snapshots
    ]
    emp = empirical_variogram(coords, values[sampled], cfg.bin_width_m, cfg.max_lag_m)
    vg = fit_variogram(emp, cfg.variogram_kind)
    (cfg.artifacts_dir / "variogram.json").write_text(
        json.dumps({"kind": vg.kind, "nugget": vg.nugget, "sill": vg.sill,
                    "range_m": vg.range_m}, sort_keys=True, indent=2) + "\n"
    )
    times = theta.grid.times()
    fields = krige_fields(values, coords, vg, spec, masks, timestamps=times)
    write_fields(fields, cfg.artifacts_dir / "mesh.bin")
    per_station, mean_rt = roundtrip_report(
        values[sampled], coords, vg, spec, masks
    )
    (cfg.artifacts_dir / "roundtrip.json").write_text(
        json.dumps({"mean_rmse_k": mean_rt,
                    "per_station": dict(zip(theta.station_ids, per_station))},
                   sort_keys=True, indent=2) + "\n"
    )
    _manifest(cfg, "krige")
    print(f"krige: {len(fields)} fields, variogram {vg.kind} "
          f"(nugget {vg.nugget:.3g}, sill {vg.sill:.3g}, range {vg.range_m/1000:.0f} km), "
          f"roundtrip RMSE {mean_rt:.3f} K")


def cmd_stats(cfg: PipelineConfig, args):
    theta = art.load_dataset(cfg.artifacts_dir / "theta.bin", producer="transform")
    dt_hours = theta.grid.step_minutes / 60.0
    max_lag = min(theta.grid.count - 1, int(30 * 24 / dt_hours))
    cfg.reports_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.reports_dir / "its.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", "its_hours"])
        for sid in theta.station_ids:
            res = station_autocorrelation(sid, theta.series[sid].values, dt_hours, max_lag)
            writer.writerow([sid, repr(res.its_hours)])

    fields = read_fields(cfg.artifacts_dir / "mesh.bin") if (
        cfg.artifacts_dir / "mesh.bin"
    ).exists() else None
    if fields:
        spec = fields[0].grid
        masks = _masks(cfg, spec)
        with open(cfg.reports_dir / "spatial_corr.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["direction", "region", "r_m", "corr", "pairs"])
            sample = fields[:: max(1, len(fields) // cfg.variogram_snapshots)]
            for direction in (LONGITUDINAL, LATITUDINAL):
                for region in ("entire", "inland"):
                    res = spatial_correlation(sample, direction, masks, region)
                    for r, c, p in zip(res.r_m, res.corr, res.pair_counts):
                        writer.writerow([direction, region, repr(float(r)),
                                         repr(float(c)), int(p)])
    _manifest(cfg, "stats")
    print(f"stats: wrote its.csv{' and spatial_corr.csv' if fields else ''}")


# ---------------------------------------------------------------------------
# models

def _model_path(cfg: PipelineConfig, model: str, lead: int) -> Path:
    return cfg.artifacts_dir / "models" / f"{model}_h{lead}.bin"


def cmd_train(cfg: PipelineConfig, args):
    model_kind = args.model or cfg.train_model
    leads = [args.lead] if args.lead else cfg.lead_hours
    for lead in leads:
        tc = cfg.train_config(lead, **({"epochs": args.epochs} if args.epochs else {}))
        path = _model_path(cfg, model_kind, lead)
        if model_kind == "persistence":
            path.parent.mkdir(parents=True, exist_ok=True)
            art._write_json(path.with_name(path.name + ".json"),
                            {"kind": "persistence", "lead_hours": lead})
            print(f"train: persistence baseline registered for {lead} h")
            continue
        theta = art.load_dataset(cfg.artifacts_dir / "theta.bin", producer="transform")
        if model_kind == "gnn":
            use_humidity = bool(cfg.train.get("use_humidity", False))
            humidity = None
            if use_humidity:
                rh_path = cfg.artifacts_dir / "rh.bin"
                if not rh_path.exists():
                    raise art.missing_artifact(rh_path, "ingest")
                humidity = np.fromfile(rh_path, dtype="<f8").reshape(
                    len(theta.stations), theta.grid.count
                )
                humidity = np.nan_to_num(humidity, nan=np.nanmean(humidity))
            model = GnnModel(GnnConfig(use_humidity=use_humidity), seed=tc.seed)
            graph = build_graph(theta.stations)
            trainer = StationTrainer(model, theta, graph, tc, humidity=humidity)
            result = trainer.train()
            meta = {
                "kind": "gnn",
                "config": asdict(model.cfg),
                "seed": tc.seed,
                "lead_hours": lead,
                "train_config": asdict(tc),
                "value_mean": result.value_params.mean,
                "value_std": result.value_params.std,
                "loss_history": {"train": result.train_loss, "val": result.val_loss},
                "param_count": model.param_count(),
            }
            save_params(model.store, path, meta)
        elif model_kind == "cnn":
            fields = read_fields(cfg.artifacts_dir / "mesh.bin")
            theta_split = theta.split_assignment
            spec = fields[0].grid
            masks = _masks(cfg, spec)
            stack = np.stack([f.values for f in fields])
            cnn_cfg = CnnConfig(grid=spec.nx)
            model = CnnModel(cnn_cfg, seed=tc.seed)
            trainer = MeshTrainer(model, stack, masks, theta_split, tc, theta.grid)
            result = trainer.train()
            meta = {
                "kind": "cnn",
                "config": asdict(cnn_cfg),
                "seed": tc.seed,
                "lead_hours": lead,
                "train_config": asdict(tc),
                "value_mean": result.value_params.mean,
                "value_std": result.value_params.std,
                "loss_history": {"train": result.train_loss, "val": result.val_loss},
                "param_count": model.param_count(),
            }
            save_params(model.store, path, meta)
        else:
            raise ConfigError(f"unknown model kind {model_kind!r}")
        _manifest(cfg, f"train.{model_kind}.h{lead}", seed=tc.seed,
                  extra={"final_val_loss": result.val_loss[-1] if result.val_loss else None})
        print(f"train: {model_kind} lead {lead} h, {result.param_count} params, "
              f"final val loss {result.val_loss[-1]:.5f}")


def _stamp_list(grid, indices):
    times = grid.times()
    return [times[int(i)].strftime("%Y-%m-%dT%H:%M:%SZ") for i in indices]


def _predict_station(cfg, theta, model_kind, lead, k=1):
    steps = lead_steps(theta.grid, lead)
    total = steps * k
    n = theta.grid.count
    t_idx = np.nonzero(theta.split_assignment[: n - total] == TEST)[0]
    if t_idx.size == 0:
        raise ConfigError("no test samples for this lead")
    values = theta.values_matrix()

    if model_kind == "persistence":
        pred = values[:, t_idx].T  # iterating the identity changes nothing
    elif model_kind == "climatology":
        pred = climatology_predict(values[:, t_idx].T)
    elif model_kind == "gnn":
        path = _model_path(cfg, "gnn", lead)
        if not path.exists():
            raise art.missing_artifact(path, "train")
        probe = json.loads(path.with_name(path.name + ".json").read_text())
        gnn_cfg = GnnConfig(**probe["config"])
        model = GnnModel(gnn_cfg, seed=0)
        manifest = load_params(model.store, path)
        tc = TrainConfig(**manifest["train_config"])
        humidity = None
        if gnn_cfg.use_humidity:
            rh_path = cfg.artifacts_dir / "rh.bin"
            if not rh_path.exists():
                raise art.missing_artifact(rh_path, "ingest")
            humidity = np.fromfile(rh_path, dtype="<f8").reshape(
                len(theta.stations), theta.grid.count
            )
            humidity = np.nan_to_num(humidity, nan=np.nanmean(humidity))
        graph = build_graph(theta.stations)
        trainer = StationTrainer(model, theta, graph, tc, humidity=humidity)
        _check_standardization(trainer.value_params, manifest)
        pred = trainer.predict_rollout(t_idx, k)
    else:
        raise ConfigError(f"unknown station model {model_kind!r}")
    valid_idx = t_idx + total
    return pred, valid_idx


def _check_standardization(params, manifest):
    drift = max(abs(params.mean - manifest["value_mean"]),
                abs(params.std - manifest["value_std"]))
    if drift > 1e-9:
        raise ConfigError(
            "theta artifact differs from the one this model was trained on "
            f"(standardization drift {drift:.3g}); re-run train or transform"
        )


def cmd_predict(cfg: PipelineConfig, args, k: int = 1):
    theta = art.load_dataset(cfg.artifacts_dir / "theta.bin", producer="transform")
    lead = args.lead
    model_kind = args.model or cfg.train_model
    if model_kind == "cnn":
        fields = read_fields(cfg.artifacts_dir / "mesh.bin")
        pred_fields, valid_idx = _predict_mesh(cfg, theta, fields, lead, k)
        name = f"{model_kind}_h{lead}" + (f"x{k}" if k > 1 else "")
        write_fields(pred_fields, cfg.artifacts_dir / "pred" / f"{name}.bin")
        side = Path(cfg.artifacts_dir / "pred" / f"{name}.bin.json")
        payload = json.loads(side.read_text())
        payload.update({"kind": "mesh", "lead_hours": lead * k,
                        "valid_indices": [int(i) for i in valid_idx]})
        art._write_json(side, payload)
    else:
        pred, valid_idx = _predict_station(cfg, theta, model_kind, lead, k)
        name = f"{model_kind}_h{lead}" + (f"x{k}" if k > 1 else "")
        art.save_station_predictions(
            cfg.artifacts_dir / "pred" / f"{name}.bin",
            pred,
            _stamp_list(theta.grid, valid_idx),
            theta.station_ids,
            lead * k,
            extra={"valid_indices": [int(i) for i in valid_idx]},
        )
    _manifest(cfg, f"predict.{model_kind}.h{lead}x{k}")
    print(f"predict: wrote {model_kind} predictions at lead {lead * k} h "
          f"({len(valid_idx)} instances)")


def _predict_mesh(cfg, theta, fields, lead, k=1):
    steps = lead_steps(theta.grid, lead)
    total = steps * k
    n = theta.grid.count
    t_idx = np.nonzero(theta.split_assignment[: n - total] == TEST)[0]
    if t_idx.size == 0:
        raise ConfigError("no test samples for this lead")
    path = _model_path(cfg, "cnn", lead)
    if not path.exists():
        raise art.missing_artifact(path, "train")
    spec = fields[0].grid
    masks = _masks(cfg, spec)
    stack = np.stack([f.values for f in fields])
    manifest_probe = json.loads(path.with_name(path.name + ".json").read_text())
    cnn_cfg = CnnConfig(**manifest_probe["config"])
    model = CnnModel(cnn_cfg, seed=0)
    manifest = load_params(model.store, path)
    tc = TrainConfig(**manifest["train_config"])
    trainer = MeshTrainer(model, stack, masks, theta.split_assignment, tc, theta.grid)
    _check_standardization(trainer.value_params, manifest)
    pred = trainer.predict_rollout(t_idx, k)
    valid_idx = t_idx + total
    times = theta.grid.times()
    from .gridding import MeshField

    out = [MeshField(grid=spec, timestamp=times[int(i)], values=pred[j])
           for j, i in enumerate(valid_idx)]
    return out, valid_idx


def cmd_rollout(cfg: PipelineConfig, args):
    cmd_predict(cfg, args, k=args.k)


# ---------------------------------------------------------------------------
# evaluation and reporting

def _its_by_station(cfg: PipelineConfig, station_ids):
    """ITS values from the stats stage, or None when it has not run."""
    path = cfg.reports_dir / "its.csv"
    if not path.exists():
        return None
    table = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            table[row["station_id"]] = float(row["its_hours"])
    return np.array([table[s] for s in station_ids])


def cmd_evaluate(cfg: PipelineConfig, args):
    clean = art.load_dataset(cfg.artifacts_dir / "clean.bin", producer="qc")
    theta = art.load_dataset(cfg.artifacts_dir / "theta.bin", producer="transform")
    tables = _load_tables(cfg, clean)
    height = _height_model(cfg)

    pred_path = Path(args.pred) if args.pred else None
    if pred_path is None:
        if args.lead is None:
            raise ConfigError("evaluate needs --pred or --model/--lead")
        name = f"{args.model or cfg.train_model}_h{args.lead}"
        pred_path = cfg.artifacts_dir / "pred" / f"{name}.bin"
        if not pred_path.exists():  # evaluate straight after train
            cmd_predict(cfg, args)
    side = json.loads(pred_path.with_name(pred_path.name + ".json").read_text())
    lead = side["lead_hours"]
    valid_idx = np.array(side["valid_indices"], dtype=np.int64)

    alts = np.array([s.altitude_m for s in clean.stations])
    mesh_rmse = None
    if side.get("kind") == "mesh":
        pred_fields = read_fields(pred_path)
        truth_fields = read_fields(cfg.artifacts_dir / "mesh.bin")
        spec = pred_fields[0].grid
        masks = _masks(cfg, spec)
        truth_stack = np.stack([truth_fields[int(i)].values for i in valid_idx])
        pred_stack = np.stack([f.values for f in pred_fields])
        mesh_rmse = ev.rmse_mesh(pred_stack, truth_stack, masks.inland)
        coords = np.array([[s.easting, s.northing] for s in clean.stations])
        theta_hat = np.vstack([
            sample_bilinear(f.values, spec, coords[:, 0], coords[:, 1])
            for f in pred_fields
        ])
    else:
        theta_hat, _ = art.load_station_predictions(pred_path)

    # theta-hat -> turbulent temperature at stations, then Eq. 3 in T space
    pred_tprime = from_potential(theta_hat, alts[None, :], height)
    truth_temp = clean.values_matrix()[:, valid_idx].T
    clim = np.column_stack(
        [climo.clim_values(tables[s.id], clean.grid)[valid_idx] for s in clean.stations]
    )
    per_station = ev.rmse_station_set(pred_tprime, truth_temp, clim)
    aggregate = ev.rmse_aggregate(per_station)

    from .core import calendar_fields

    months = calendar_fields(clean.grid)[1][valid_idx]
    monthly, monthly_counts = ev.slice_monthly(months, pred_tprime, truth_temp, clim)
    its = _its_by_station(cfg, clean.station_ids)
    scatter = (
        ev.scatter_extract(clean.stations, per_station, its) if its is not None else []
    )
    times = clean.grid.times()
    stamps = [times[int(i)] for i in valid_idx]
    if side.get("kind") == "mesh":
        # per-instance inland RMSE on the mesh picks the showcase cases
        bw = ev.best_worst(stamps, pred_stack, truth_stack, mask=masks.inland)
    else:
        resid_truth = truth_temp - clim  # measured fluctuation
        bw = ev.best_worst(stamps, pred_tprime, resid_truth)
    report = ev.EvalReport(
        lead_hours=lead,
        n_t=len(valid_idx),
        n_s=len(clean.stations),
        station_ids=clean.station_ids,
        per_station=per_station,
        aggregate=aggregate,
        mesh_rmse=mesh_rmse,
        monthly=monthly,
        monthly_counts=monthly_counts,
        scatter=scatter,
        best_worst=bw,
    )
    out = Path(args.out) if args.out else cfg.reports_dir / pred_path.stem
    ev.write_report(report, out)

    if args.external:
        comp = ev.compare_external(args.external, clean, lead)
        payload = {
            "lead_hours": lead,
            "aggregate_rmse_k": comp.aggregate,
            "coverage": comp.coverage,
            "per_station": {
                sid: (None if np.isnan(r) else float(r))
                for sid, r in zip(comp.station_ids, comp.per_station)
            },
        }
        (out / "external.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    _manifest(cfg, f"evaluate.{pred_path.stem}")
    print(f"evaluate: RMSE {aggregate:.3f} K over {len(valid_idx)} instances "
          f"-> {out}")


def cmd_sweep(cfg: PipelineConfig, args):
    widths = [int(w) for w in args.widths.split(",")] if args.widths else cfg.sweep_widths
    theta = art.load_dataset(cfg.artifacts_dir / "theta.bin", producer="transform")
    fields = read_fields(cfg.artifacts_dir / "mesh.bin")
    spec = fields[0].grid
    masks = _masks(cfg, spec)
    stack = np.stack([f.values for f in fields])
    rows = []
    for width in widths:
        tc = cfg.train_config(cfg.sweep_lead_hours, epochs=cfg.sweep_epochs)
        cnn_cfg = CnnConfig(grid=spec.nx, predictor_hidden=width)
        model = CnnModel(cnn_cfg, seed=tc.seed)
        trainer = MeshTrainer(model, stack, masks, theta.split_assignment, tc, theta.grid)
        result = trainer.train()
        val_rmse = float(np.sqrt(result.val_loss[-1]) * result.value_params.std)
        rows.append((width, model.param_count(), val_rmse))
        print(f"sweep: width {width} -> {model.param_count()} params, "
              f"val RMSE {val_rmse:.4f} K")
    cfg.reports_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.reports_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["predictor_width", "param_count", "val_rmse_k"])
        for row in rows:
            writer.writerow([row[0], row[1], repr(row[2])])
    _manifest(cfg, "sweep")
    print(f"sweep: wrote {cfg.reports_dir / 'sweep.csv'}")


def cmd_report(cfg: PipelineConfig, args):
    summary = {}
    manifest_path = cfg.artifacts_dir / "manifest.json"
    if manifest_path.exists():
        summary["stages"] = json.loads(manifest_path.read_text())["stages"]
    for item in sorted(cfg.reports_dir.glob("*/summary.json")):
        summary.setdefault("evaluations", {})[item.parent.name] = json.loads(item.read_text())
    for name in ("qc_report.json", "roundtrip.json", "variogram.json"):
        path = cfg.artifacts_dir / name
        if path.exists():
            summary[name.replace(".json", "")] = json.loads(path.read_text())
    sweep_path = cfg.reports_dir / "sweep.csv"
    if sweep_path.exists():
        summary["sweep"] = sweep_path.read_text().splitlines()
    cfg.reports_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.reports_dir / "report.json"
    art._write_json(out, summary)
    print(f"report: {out}")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tptkit",
        description="Station temperature forecasting pipeline "
        "(synthetic corpus, QC, climatology, kriging, neural predictors, evaluation)",
    )
    parser.add_argument("--config", default="tptkit.toml", help="TOML pipeline config")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="parse corpus CSVs onto the time grid")
    sub.add_parser("climatology", help="compute per-station periodic means")
    sub.add_parser("transform", help="decompose, height-adjust, and split")
    sub.add_parser("krige", help="fit variogram and krige theta onto the mesh")
    sub.add_parser("stats", help="ITS and spatial correlation tables")
    sub.add_parser("report", help="collect stage outputs into report.json")

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    p.add_argument("--out", default=None)
    p = sub.add_parser("qc", help="apply range/deviation QC and gap filling")
    p.add_argument("--out", default=None, help="directory for qc_report.json")
    p = sub.add_parser("train", help="train a predictor per lead hour")
    p.add_argument("--model", choices=["gnn", "cnn", "persistence"], default=None)
    p.add_argument("--lead", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p = sub.add_parser("predict", help="run a trained model on the test split")
    p.add_argument("--model", choices=["gnn", "cnn", "persistence", "climatology"],
                   default=None)
    p.add_argument("--lead", type=int, required=True)
    p = sub.add_parser("rollout", help="iterate a short-lead model k times")
    p.add_argument("--model", choices=["gnn", "cnn", "persistence"], default=None)
    p.add_argument("--lead", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p = sub.add_parser("evaluate", help="score predictions and write reports")
    p.add_argument("--pred", default=None, help="prediction artifact path")
    p.add_argument("--model", default=None)
    p.add_argument("--lead", type=int, default=None)
    p.add_argument("--truth", default=None, help="unused; truth comes from artifacts")
    p.add_argument("--external", default=None, help="external forecast CSV to compare")
    p.add_argument("--out", default=None)
    p = sub.add_parser("sweep", help="predictor-width sweep at desk scale")
    p.add_argument("--widths", default=None, help="comma-separated widths")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "qc": cmd_qc,
    "climatology": cmd_climatology,
    "transform": cmd_transform,
    "krige": cmd_krige,
    "stats": cmd_stats,
    "train": cmd_train,
    "predict": cmd_predict,
    "rollout": cmd_rollout,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg.artifacts_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args)
    except TptkitError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
