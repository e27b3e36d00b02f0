"""Pipeline configuration: one TOML file feeding every subcommand.

Only the keys a run actually needs have to be present; everything has a
desk-scale default. See README for the documented key set.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import DOMAIN_BBOX
from .errors import ConfigError
from .qc import QcConfig
from .synth import SynthConfig
from .training import TrainConfig


@dataclass
class PipelineConfig:
    base_dir: Path
    corpus_dir: Path
    artifacts_dir: Path
    reports_dir: Path
    synth: SynthConfig
    corrupt_fraction: float
    corrupt_seed: int
    qc: QcConfig
    window_days: int
    kappa: float
    scale_height_m: float
    grid_nx: int
    grid_ny: int
    grid_dx_m: float  # 0 = auto from bbox
    buffer_km: float
    variogram_kind: str
    bin_width_m: float
    max_lag_m: float
    variogram_snapshots: int
    split_fractions: tuple
    split_seed: int
    train: dict  # raw [train] table; TrainConfig built per lead hour
    train_model: str
    sweep_widths: list
    sweep_epochs: int
    sweep_lead_hours: int
    raw: dict = field(default_factory=dict)

    def train_config(self, lead_hours: int, **overrides) -> TrainConfig:
        kw = dict(self.train)
        for non_train_key in ("lead_hours", "model", "use_humidity"):
            kw.pop(non_train_key, None)
        kw.update(overrides)
        return TrainConfig(lead_hours=lead_hours, **kw)

    @property
    def lead_hours(self) -> list:
        leads = self.train.get("lead_hours", [12]) if isinstance(self.train, dict) else [12]
        return list(leads) if isinstance(leads, (list, tuple)) else [leads]


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    base = path.parent
    paths = raw.get("paths", {})

    def _dir(key, default):
        p = Path(paths.get(key, default))
        return p if p.is_absolute() else base / p

    synth_raw = dict(raw.get("synth", {}))
    corrupt_fraction = float(synth_raw.pop("corrupt_fraction", 0.0))
    corrupt_seed = int(synth_raw.pop("corrupt_seed", 7))
    if "bbox" in synth_raw:
        synth_raw["bbox"] = tuple(synth_raw["bbox"])
    if "phi_range" in synth_raw:
        synth_raw["phi_range"] = tuple(synth_raw["phi_range"])
    grid_raw = raw.get("grid", {})
    synth_raw.setdefault("mesh_nx", int(grid_raw.get("nx", 32)))
    dx = float(grid_raw.get("dx_m", 0.0))
    if dx > 0:
        synth_raw.setdefault("mesh_dx_m", dx)
    try:
        synth = SynthConfig(**synth_raw)
        qc = QcConfig(**raw.get("qc", {}))
    except TypeError as exc:
        raise ConfigError(f"bad config key: {exc}") from exc

    train_raw = dict(raw.get("train", {}))
    model = train_raw.pop("model", "gnn")
    sweep = raw.get("sweep", {})
    split = raw.get("split", {})
    height = raw.get("height", {})
    vario = raw.get("variogram", {})
    clim = raw.get("climatology", {})

    cfg = PipelineConfig(
        base_dir=base,
        corpus_dir=_dir("corpus", "corpus"),
        artifacts_dir=_dir("artifacts", "artifacts"),
        reports_dir=_dir("reports", "reports"),
        synth=synth,
        corrupt_fraction=corrupt_fraction,
        corrupt_seed=corrupt_seed,
        qc=qc,
        window_days=int(clim.get("window_days", 21)),
        kappa=float(height.get("kappa", 0.2857)),
        scale_height_m=float(height.get("scale_height_m", 8434.0)),
        grid_nx=int(grid_raw.get("nx", synth.mesh_nx)),
        grid_ny=int(grid_raw.get("ny", grid_raw.get("nx", synth.mesh_nx))),
        grid_dx_m=dx,
        buffer_km=float(grid_raw.get("buffer_km", 30.0)),
        variogram_kind=str(vario.get("kind", "exponential")),
        bin_width_m=float(vario.get("bin_width_m", 20_000.0)),
        max_lag_m=float(vario.get("max_lag_m", 300_000.0)),
        variogram_snapshots=int(vario.get("n_snapshots", 48)),
        split_fractions=tuple(split.get("fractions", (0.8, 0.1, 0.1))),
        split_seed=int(split.get("seed", 1)),
        train=train_raw,
        train_model=model,
        sweep_widths=list(sweep.get("widths", [8, 16, 32])),
        sweep_epochs=int(sweep.get("epochs", 2)),
        sweep_lead_hours=int(sweep.get("lead_hours", 12)),
        raw=raw,
    )
    return cfg
