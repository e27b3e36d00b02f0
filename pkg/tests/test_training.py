"""Adam correctness, loss wrappers, determinism, and a small training run."""

from datetime import datetime

import numpy as np
import pytest

from tptkit import autodiff as ad
from tptkit.core import Dataset, ObservationSeries, StationMeta, TimeGrid, split_dataset
from tptkit.errors import ConfigError
from tptkit.gridding import GridSpec, build_masks
from tptkit.nets import CnnConfig, CnnModel, GnnConfig, GnnModel, build_graph
from tptkit.training import (
    Adam,
    MeshTrainer,
    StationTrainer,
    TrainConfig,
    lead_steps,
    loss_mesh,
    loss_station,
)


def test_adam_first_steps_match_hand_calculation():
    # single parameter, constant gradient 2: m,v known in closed form
    p = ad.parameter(np.array([1.0]))
    opt = Adam([p], lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    for step in range(1, 3):
        p.grad = np.array([2.0])
        opt.step()
    # oracle: hand-iterate the update rule
    theta, m, v = 1.0, 0.0, 0.0
    for t in range(1, 3):
        g = 2.0
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh = m / (1 - 0.9**t)
        vh = v / (1 - 0.999**t)
        theta -= 0.1 * mh / (np.sqrt(vh) + 1e-8)
    assert p.value[0] == pytest.approx(theta, rel=1e-12)


def test_lead_steps():
    grid = TimeGrid(datetime(2020, 1, 1), 60, 100)
    assert lead_steps(grid, 12) == 12
    grid30 = TimeGrid(datetime(2020, 1, 1), 30, 100)
    assert lead_steps(grid30, 1) == 2
    with pytest.raises(ConfigError):
        lead_steps(TimeGrid(datetime(2020, 1, 1), 45, 100), 1)


def test_loss_station_matches_bruteforce():
    rng = np.random.default_rng(0)
    pred = rng.normal(size=(4, 7))
    target = rng.normal(size=(4, 7))
    loss = loss_station(ad.constant(pred), target)
    manual = np.mean((pred - target) ** 2)
    assert loss.value == pytest.approx(manual, rel=1e-12)


def test_loss_mesh_inland_only():
    rng = np.random.default_rng(1)
    grid = GridSpec(nx=6, ny=6, dx_m=1000.0, origin_e=0.0, origin_n=0.0)
    land = rng.uniform(size=(6, 6)) > 0.5
    masks = build_masks(land, grid, buffer_km=1.5)
    pred = rng.normal(size=(2, 6, 6))
    target = rng.normal(size=(2, 6, 6))
    loss = loss_mesh(ad.constant(pred), target, masks)
    manual = np.mean((pred - target)[:, land] ** 2)
    assert loss.value == pytest.approx(manual, rel=1e-12)
    empty = build_masks(np.zeros((6, 6), dtype=bool), grid, buffer_km=0.0)
    with pytest.raises(ConfigError):
        loss_mesh(ad.constant(pred), target, empty)


def _toy_station_dataset(n_stations=6, count=600, seed=0, phi=0.95):
    rng = np.random.default_rng(seed)
    grid = TimeGrid(datetime(2020, 1, 1), 60, count)
    coords = rng.uniform(0, 60_000.0, size=(n_stations, 2))
    stations = [
        StationMeta(f"S{i}", 36.0, 127.0, float(e), float(n), float(rng.uniform(5, 500)))
        for i, (e, n) in enumerate(coords)
    ]
    x = np.empty((n_stations, count))
    x[:, 0] = rng.normal(size=n_stations)
    for t in range(1, count):
        x[:, t] = phi * x[:, t - 1] + np.sqrt(1 - phi**2) * rng.normal(size=n_stations)
    series = {s.id: ObservationSeries(s.id, grid, x[i]) for i, s in enumerate(stations)}
    return split_dataset(Dataset(grid, stations, series), seed=3)


def test_station_training_deterministic_and_learns():
    ds = _toy_station_dataset()
    graph = build_graph(ds.stations, radius_km=50.0)
    tc = TrainConfig(lr=1e-3, epochs=3, batch_size=16, seed=5, lead_hours=2)

    def run():
        model = GnnModel(GnnConfig(n_layers=2, hidden=8, heads=2), seed=1)
        trainer = StationTrainer(model, ds, graph, tc)
        return trainer.train()

    r1, r2 = run(), run()
    assert r1.train_loss == r2.train_loss  # bitwise-identical histories
    assert r1.val_loss == r2.val_loss
    assert r1.train_loss[-1] < r1.train_loss[0]


def test_zero_lr_constant_history():
    ds = _toy_station_dataset()
    graph = build_graph(ds.stations, radius_km=50.0)
    tc = TrainConfig(lr=0.0, epochs=3, batch_size=16, seed=5, lead_hours=2)
    model = GnnModel(GnnConfig(n_layers=2, hidden=8, heads=2), seed=1)
    result = StationTrainer(model, ds, graph, tc).train()
    assert result.val_loss[0] == result.val_loss[1] == result.val_loss[2]


def test_station_predict_shape_and_rollout_consistency():
    ds = _toy_station_dataset()
    graph = build_graph(ds.stations, radius_km=50.0)
    tc = TrainConfig(lr=1e-3, epochs=1, batch_size=16, seed=5, lead_hours=2)
    model = GnnModel(GnnConfig(n_layers=2, hidden=8, heads=2), seed=1)
    trainer = StationTrainer(model, ds, graph, tc)
    trainer.train()
    t_idx = np.array([0, 5, 10])
    single = trainer.predict(t_idx)
    assert single.shape == (3, 6)
    np.testing.assert_array_equal(trainer.predict_rollout(t_idx, 1), single)
    double = trainer.predict_rollout(t_idx, 2)
    assert double.shape == (3, 6)
    assert not np.allclose(double, single)


def test_mesh_training_runs_and_subsample_cap():
    rng = np.random.default_rng(2)
    count = 200
    grid = TimeGrid(datetime(2020, 1, 1), 60, count)
    spec = GridSpec(nx=8, ny=8, dx_m=1000.0, origin_e=0.0, origin_n=0.0)
    land = np.zeros((8, 8), dtype=bool)
    land[2:6, 2:6] = True
    masks = build_masks(land, spec, buffer_km=1.0)
    fields = rng.normal(size=(count, 8, 8)) * masks.enlarged
    split = split_dataset(
        _toy_station_dataset(count=count), seed=1
    ).split_assignment
    tc = TrainConfig(lr=1e-3, epochs=2, batch_size=16, seed=0, lead_hours=2,
                     max_train_samples=40)
    model = CnnModel(CnnConfig(grid=8, base_channels=2, latent=8, n_down=1), seed=0)
    trainer = MeshTrainer(model, fields, masks, split, tc, grid)
    result = trainer.train()
    assert len(result.train_loss) == 2
    pred = trainer.predict(np.array([0, 3]))
    assert pred.shape == (2, 8, 8)
    assert np.all(pred[:, ~masks.enlarged] == 0.0)


def test_training_error_on_nan():
    ds = _toy_station_dataset()
    graph = build_graph(ds.stations, radius_km=50.0)
    tc = TrainConfig(lr=1e200, epochs=10, batch_size=16, seed=5, lead_hours=2)
    model = GnnModel(GnnConfig(n_layers=2, hidden=8, heads=2), seed=1)
    from tptkit.errors import NumericError, TrainingError

    with np.errstate(invalid="ignore", over="ignore"):
        with pytest.raises((TrainingError, NumericError)):
            StationTrainer(model, ds, graph, tc).train()


def test_station_trainer_with_humidity_feature():
    ds = _toy_station_dataset()
    rng = np.random.default_rng(9)
    humidity = rng.uniform(30.0, 90.0, size=(6, 600))
    graph = build_graph(ds.stations, radius_km=50.0)
    tc = TrainConfig(lr=1e-3, epochs=1, batch_size=16, seed=5, lead_hours=2)
    model = GnnModel(GnnConfig(n_layers=2, hidden=8, heads=2, use_humidity=True), seed=1)
    trainer = StationTrainer(model, ds, graph, tc, humidity=humidity)
    result = trainer.train()
    assert len(result.feature_params) == 4  # x, y, altitude, humidity
    pred = trainer.predict(np.array([0, 7]))
    assert pred.shape == (2, 6)
    # humidity required when the model expects it
    with pytest.raises(ConfigError):
        StationTrainer(model, ds, graph, tc)
