"""Adam training of the station-graph and mesh models.

One model is trained per lead hour. Sample t pairs the state at t with the
state at t + lead; samples are assigned to train/val/test by the dataset's
split at the input time. Shuffling, parameter updates, and gradient
reductions all run in a fixed order, so a fixed seed reproduces loss
histories bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .core import TRAIN, VAL, Dataset, TimeGrid
from .errors import ConfigError, ShapeError, TrainingError
from .gridding import MaskSet
from .nets import CnnModel, GnnModel, GraphTopology
from .stats import StandardizeParams, destandardize, standardize


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    lead_hours: int = 12
    max_train_samples: int = None  # deterministic subsample of training pairs

    def __post_init__(self):
        if self.lead_hours <= 0:
            raise ConfigError("lead_hours must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("bad epochs/batch_size")
        if self.max_train_samples is not None and self.max_train_samples < 1:
            raise ConfigError("max_train_samples must be positive")


def lead_steps(grid: TimeGrid, lead_hours: int) -> int:
    minutes = lead_hours * 60
    if minutes % grid.step_minutes != 0:
        raise ConfigError(
            f"lead {lead_hours} h is not a multiple of the {grid.step_minutes}-minute step"
        )
    return minutes // grid.step_minutes


class Adam:
    """Standard Adam with bias correction; state per parameter tensor."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            p.value = p.value - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def loss_station(pred: ad.Tensor, target: np.ndarray) -> ad.Tensor:
    """(1/N) sum of squared station residuals (batch-averaged)."""
    if pred.value.shape != np.asarray(target).shape:
        raise ShapeError(f"station loss shapes differ: {pred.value.shape} vs {np.shape(target)}")
    return ad.mse_loss(pred, target)


def loss_mesh(pred: ad.Tensor, target: np.ndarray, masks: MaskSet) -> ad.Tensor:
    """Mean squared residual over inland nodes only (batch-averaged)."""
    if masks.n_inland == 0:
        raise ConfigError("empty inland mask")
    return ad.mse_loss(pred, target, mask=masks.inland)


@dataclass
class TrainResult:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    value_params: StandardizeParams = None
    feature_params: list = None
    lead_hours: int = 0
    param_count: int = 0


def _pair_indices(dataset: Dataset, steps: int, label: int) -> np.ndarray:
    n = dataset.grid.count
    if dataset.split_assignment is None:
        raise ConfigError("dataset must be split before training")
    idx = np.nonzero(dataset.split_assignment[: n - steps] == label)[0]
    if idx.size == 0:
        raise ConfigError(f"no samples with label {label} and lead {steps} steps")
    return idx


def _subsample(idx: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    if cfg.max_train_samples is None or idx.size <= cfg.max_train_samples:
        return idx
    picked = np.random.default_rng(cfg.seed).choice(
        idx.size, size=cfg.max_train_samples, replace=False
    )
    return idx[np.sort(picked)]


def station_features(stations, humidity=None):
    """(N, F_static) standardized coordinate/altitude (plus humidity) block."""
    coords = np.array([[s.easting, s.northing, s.altitude_m] for s in stations])
    out = []
    params = []
    for col in range(coords.shape[1]):
        std = coords[:, col].std()
        if std == 0:  # degenerate but legal (all stations level); pass through
            out.append(np.zeros(coords.shape[0]))
            params.append(StandardizeParams(float(coords[:, col].mean()), 1.0))
        else:
            normed, p = standardize(coords[:, col])
            out.append(normed)
            params.append(p)
    block = np.column_stack(out)
    return block, params


class StationTrainer:
    """Drives GNN training on station fluctuation series."""

    def __init__(self, model: GnnModel, dataset: Dataset, graph: GraphTopology,
                 cfg: TrainConfig, humidity=None):
        self.model = model
        self.dataset = dataset
        self.graph = graph
        self.cfg = cfg
        self.steps = lead_steps(dataset.grid, cfg.lead_hours)
        values = dataset.values_matrix()  # (N, T)
        train_cols = _pair_indices(dataset, self.steps, TRAIN)
        _, self.value_params = standardize(values[:, train_cols])
        self.values_std = (values - self.value_params.mean) / self.value_params.std
        self.static, self.feature_params = station_features(dataset.stations)
        self.humidity_std = None
        if model.cfg.use_humidity:
            if humidity is None:
                raise ConfigError("model wants humidity features but none were given")
            h = np.asarray(humidity, dtype=np.float64)
            _, hp = standardize(h[:, train_cols])
            self.humidity_std = (h - hp.mean) / hp.std
            self.feature_params = self.feature_params + [hp]

    def batch_features(self, t_idx: np.ndarray) -> np.ndarray:
        b = t_idx.size
        n = len(self.dataset.stations)
        feats = np.empty((b, n, self.model.cfg.feature_dim))
        feats[:, :, 0] = self.values_std[:, t_idx].T
        feats[:, :, 1:4] = self.static[None, :, :]
        if self.humidity_std is not None:
            feats[:, :, 4] = self.humidity_std[:, t_idx].T
        return feats

    def batch_targets(self, t_idx: np.ndarray) -> np.ndarray:
        return self.values_std[:, t_idx + self.steps].T

    def _epoch_loss(self, indices: np.ndarray) -> float:
        total, count = 0.0, 0
        for s in range(0, indices.size, self.cfg.batch_size):
            chunk = indices[s : s + self.cfg.batch_size]
            pred = self.model.forward(self.batch_features(chunk), self.graph)
            loss = loss_station(pred, self.batch_targets(chunk))
            total += float(loss.value) * chunk.size
            count += chunk.size
        return total / count

    def train(self) -> TrainResult:
        cfg = self.cfg
        opt = Adam(self.model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        rng = np.random.default_rng(cfg.seed)
        train_idx = _subsample(_pair_indices(self.dataset, self.steps, TRAIN), cfg)
        val_idx = _pair_indices(self.dataset, self.steps, VAL)
        result = TrainResult(value_params=self.value_params,
                             feature_params=self.feature_params,
                             lead_hours=cfg.lead_hours,
                             param_count=self.model.param_count())
        for epoch in range(cfg.epochs):
            perm = train_idx[rng.permutation(train_idx.size)]
            running, seen = 0.0, 0
            for s in range(0, perm.size, cfg.batch_size):
                chunk = perm[s : s + cfg.batch_size]
                opt.zero_grad()
                pred = self.model.forward(self.batch_features(chunk), self.graph)
                loss = loss_station(pred, self.batch_targets(chunk))
                if not np.isfinite(loss.value):
                    raise TrainingError(f"loss became non-finite at epoch {epoch}")
                loss.backward()
                opt.step()
                running += float(loss.value) * chunk.size
                seen += chunk.size
            result.train_loss.append(running / seen)
            result.val_loss.append(self._epoch_loss(val_idx))
        return result

    def predict(self, t_idx: np.ndarray) -> np.ndarray:
        """De-standardized fluctuation predictions, (len(t_idx), N)."""
        return self.predict_rollout(t_idx, 1)

    def predict_rollout(self, t_idx: np.ndarray, k: int = 1) -> np.ndarray:
        """Iterate the model k times, feeding predictions back as inputs."""
        if k < 1:
            raise ConfigError("rollout needs k >= 1")
        t_idx = np.asarray(t_idx, dtype=np.int64)
        cur = self.values_std[:, t_idx].T  # (B_t, N), standardized
        n = len(self.dataset.stations)
        for _ in range(k):
            out = []
            for s in range(0, t_idx.size, self.cfg.batch_size):
                block = cur[s : s + self.cfg.batch_size]
                feats = np.empty((block.shape[0], n, self.model.cfg.feature_dim))
                feats[:, :, 0] = block
                feats[:, :, 1:4] = self.static[None, :, :]
                if self.humidity_std is not None:
                    # humidity is not forecast; hold the input-time value
                    feats[:, :, 4] = self.humidity_std[:, t_idx[s : s + block.shape[0]]].T
                out.append(self.model.forward(feats, self.graph).value)
            cur = np.vstack(out)
        return destandardize(cur, self.value_params)


class MeshTrainer:
    """Drives CNN training on kriged mesh sequences."""

    def __init__(self, model: CnnModel, fields: np.ndarray, masks: MaskSet,
                 split_assignment: np.ndarray, cfg: TrainConfig, grid: TimeGrid):
        if fields.ndim != 3:
            raise ConfigError("fields must be (T, H, W)")
        if fields.shape[0] != grid.count:
            raise ConfigError("field count does not match the time grid")
        if fields.shape[1:] != masks.enlarged.shape:
            raise ConfigError("field shape does not match masks")
        self.model = model
        self.masks = masks
        self.cfg = cfg
        self.steps = lead_steps(grid, cfg.lead_hours)
        self.split = np.asarray(split_assignment, dtype=np.uint8)
        train_rows = self._indices(TRAIN)
        sample = fields[train_rows][:, masks.enlarged]
        _, self.value_params = standardize(sample)
        self.fields_std = np.where(
            masks.enlarged[None, :, :],
            (fields - self.value_params.mean) / self.value_params.std,
            0.0,
        )

    def _indices(self, label: int) -> np.ndarray:
        n = self.split.size
        idx = np.nonzero(self.split[: n - self.steps] == label)[0]
        if idx.size == 0:
            raise ConfigError(f"no mesh samples with label {label}")
        return idx

    def _epoch_loss(self, indices: np.ndarray) -> float:
        total, count = 0.0, 0
        for s in range(0, indices.size, self.cfg.batch_size):
            chunk = indices[s : s + self.cfg.batch_size]
            pred = self.model.forward(self.fields_std[chunk])
            loss = loss_mesh(pred, self.fields_std[chunk + self.steps], self.masks)
            total += float(loss.value) * chunk.size
            count += chunk.size
        return total / count

    def train(self) -> TrainResult:
        cfg = self.cfg
        opt = Adam(self.model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        rng = np.random.default_rng(cfg.seed)
        train_idx = _subsample(self._indices(TRAIN), cfg)
        val_idx = self._indices(VAL)
        result = TrainResult(value_params=self.value_params,
                             lead_hours=cfg.lead_hours,
                             param_count=self.model.param_count())
        for epoch in range(cfg.epochs):
            perm = train_idx[rng.permutation(train_idx.size)]
            running, seen = 0.0, 0
            for s in range(0, perm.size, cfg.batch_size):
                chunk = perm[s : s + cfg.batch_size]
                opt.zero_grad()
                pred = self.model.forward(self.fields_std[chunk])
                loss = loss_mesh(pred, self.fields_std[chunk + self.steps], self.masks)
                if not np.isfinite(loss.value):
                    raise TrainingError(f"loss became non-finite at epoch {epoch}")
                loss.backward()
                opt.step()
                running += float(loss.value) * chunk.size
                seen += chunk.size
            result.train_loss.append(running / seen)
            result.val_loss.append(self._epoch_loss(val_idx))
        return result

    def predict(self, t_idx: np.ndarray) -> np.ndarray:
        """De-standardized masked field predictions (len(t_idx), H, W)."""
        return self.predict_rollout(t_idx, 1)

    def predict_rollout(self, t_idx: np.ndarray, k: int = 1) -> np.ndarray:
        """Iterate k times with mask re-zeroing between steps."""
        if k < 1:
            raise ConfigError("rollout needs k >= 1")
        t_idx = np.asarray(t_idx, dtype=np.int64)
        cur = self.fields_std[t_idx]
        for _ in range(k):
            out = []
            for s in range(0, t_idx.size, self.cfg.batch_size):
                out.append(self.model.forward(cur[s : s + self.cfg.batch_size]).value)
            cur = np.where(self.masks.enlarged[None, :, :],
                           np.concatenate(out, axis=0), 0.0)
        pred = destandardize(cur, self.value_params)
        return np.where(self.masks.enlarged[None, :, :], pred, 0.0)
