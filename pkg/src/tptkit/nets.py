"""Forecast networks: graph-attention model over stations and a
convolutional autoencoder over the mesh, both built on the local autodiff
kernel.

The graph model stacks multi-head attention layers with residual
connections and reads out one scalar per station. The mesh model encodes
the masked field through strided residual blocks to a latent vector, maps
it forward in time with a fully connected predictor, and decodes with
nearest-neighbour upsampling; the decoder residual blocks carry batch and
pixelwise normalization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class GraphTopology:
    """Undirected station graph with self-loops, as parallel edge arrays."""

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    radius_km: float

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        if src.shape != dst.shape:
            raise ConfigError("src/dst edge arrays differ in length")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n_nodes)


def build_graph(stations, radius_km: float = 30.0) -> GraphTopology:
    """Edges between station pairs within the planar radius, plus self-loops.

    The adjacency is symmetric by construction; edges are ordered by
    (dst, src) so gradient scatter order is deterministic.
    """
    coords = np.array([[s.easting, s.northing] for s in stations])
    n = coords.shape[0]
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    adj = dist <= radius_km * 1000.0
    np.fill_diagonal(adj, True)  # self-loops
    src, dst = np.nonzero(adj)
    order = np.lexsort((src, dst))
    return GraphTopology(n_nodes=n, src=src[order], dst=dst[order], radius_km=radius_km)


# ---------------------------------------------------------------------------
# parameter bookkeeping shared by both models

class ParamStore:
    """Ordered name -> Tensor mapping with binary+manifest serialization."""

    def __init__(self):
        self._params = {}

    def new(self, name: str, shape, rng, scale: float = None) -> ad.Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name}")
        if scale is None:
            fan_in = shape[0] if len(shape) == 1 else int(np.prod(shape[:-1]))
            scale = 1.0 / np.sqrt(max(fan_in, 1))
        t = ad.parameter(rng.normal(size=shape) * scale)
        self._params[name] = t
        return t

    def zeros(self, name: str, shape) -> ad.Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name}")
        t = ad.parameter(np.zeros(shape))
        self._params[name] = t
        return t

    def ones(self, name: str, shape) -> ad.Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name}")
        t = ad.parameter(np.ones(shape))
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> ad.Tensor:
        return self._params[name]

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def count(self) -> int:
        return int(sum(t.value.size for t in self._params.values()))

    def state(self) -> dict:
        return {k: t.value.copy() for k, t in self._params.items()}

    def load_state(self, state: dict):
        for k, t in self._params.items():
            if k not in state:
                raise ConfigError(f"missing parameter {k} in state")
            if state[k].shape != t.value.shape:
                raise ConfigError(f"parameter {k}: shape {state[k].shape} != {t.value.shape}")
            t.value = np.array(state[k], dtype=np.float64)


def save_params(store: ParamStore, path, meta: dict) -> Path:
    """One flat float64 blob plus a JSON manifest of layer names/shapes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = np.concatenate([t.value.reshape(-1) for _, t in store.items()]).astype("<f8")
    tmp = path.with_name(path.name + ".tmp")
    blob.tofile(tmp)
    tmp.replace(path)
    manifest = {
        "layers": [{"name": k, "shape": list(t.value.shape), "dtype": "float64"}
                   for k, t in store.items()],
        **meta,
    }
    mpath = path.with_name(path.name + ".json")
    mtmp = mpath.with_name(mpath.name + ".tmp")
    mtmp.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    mtmp.replace(mpath)
    return path


def load_params(store: ParamStore, path) -> dict:
    """Load a blob written by save_params into ``store``; returns the manifest."""
    path = Path(path)
    manifest = json.loads(path.with_name(path.name + ".json").read_text())
    blob = np.fromfile(path, dtype="<f8")
    offset = 0
    state = {}
    for layer in manifest["layers"]:
        size = int(np.prod(layer["shape"])) if layer["shape"] else 1
        state[layer["name"]] = blob[offset : offset + size].reshape(layer["shape"])
        offset += size
    if offset != blob.size:
        raise ConfigError(f"{path}: blob has {blob.size} values, manifest implies {offset}")
    store.load_state(state)
    return manifest


# ---------------------------------------------------------------------------
# graph attention model

@dataclass(frozen=True)
class GnnConfig:
    n_layers: int = 4
    hidden: int = 64
    heads: int = 4
    attn_slope: float = 0.2
    act_slope: float = 0.2
    in_features: int = 4  # value, x, y, altitude
    use_humidity: bool = False

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ConfigError("hidden width must be divisible by the head count")

    @property
    def feature_dim(self) -> int:
        return self.in_features + (1 if self.use_humidity else 0)


class GnnModel:
    """Multi-head graph attention over the station graph, scalar output."""

    def __init__(self, cfg: GnnConfig, seed: int = 0):
        self.cfg = cfg
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        fh = cfg.hidden // cfg.heads
        fin = cfg.feature_dim
        for layer in range(cfg.n_layers):
            self.store.new(f"gat{layer}.w", (fin, cfg.hidden), rng)
            self.store.zeros(f"gat{layer}.b", (cfg.hidden,))
            self.store.new(f"gat{layer}.a_src", (cfg.heads, fh), rng, scale=1.0 / np.sqrt(fh))
            self.store.new(f"gat{layer}.a_dst", (cfg.heads, fh), rng, scale=1.0 / np.sqrt(fh))
            fin = cfg.hidden
        self.store.new("out.w", (cfg.hidden, 1), rng)
        self.store.zeros("out.b", (1,))
        self.seed = seed

    def parameters(self):
        return self.store.tensors()

    def param_count(self) -> int:
        return self.store.count()

    def forward(self, features: np.ndarray, graph: GraphTopology) -> ad.Tensor:
        """features (B, N, F) -> predictions (B, N)."""
        cfg = self.cfg
        if features.ndim != 3 or features.shape[2] != cfg.feature_dim:
            raise ConfigError(
                f"expected features (B, N, {cfg.feature_dim}), got {features.shape}"
            )
        b, n, _ = features.shape
        fh = cfg.hidden // cfg.heads
        h = ad.constant(features)
        for layer in range(cfg.n_layers):
            proj = ad.add(ad.matmul(h, self.store[f"gat{layer}.w"]),
                          self.store[f"gat{layer}.b"])
            p4 = ad.reshape(proj, (b, n, cfg.heads, fh))
            s_src = ad.dot_lastaxis(p4, self.store[f"gat{layer}.a_src"])
            s_dst = ad.dot_lastaxis(p4, self.store[f"gat{layer}.a_dst"])
            e = ad.add(ad.gather_nodes(s_src, graph.src), ad.gather_nodes(s_dst, graph.dst))
            alpha = ad.edge_softmax(ad.leaky_relu(e, cfg.attn_slope), graph.dst, n)
            msg = ad.scale_lastdim(ad.gather_nodes(p4, graph.src), alpha)
            agg = ad.reshape(ad.scatter_sum(msg, graph.dst, n), (b, n, cfg.hidden))
            if layer > 0:  # dims match the hidden width from the second layer on
                agg = ad.add(agg, h)
            h = ad.leaky_relu(agg, cfg.act_slope)
            if not np.all(np.isfinite(h.value)):
                raise NumericError(f"non-finite activations in graph layer {layer}")
        out = ad.add(ad.matmul(h, self.store["out.w"]), self.store["out.b"])
        return ad.reshape(out, (b, n))


# ---------------------------------------------------------------------------
# convolutional autoencoder model

@dataclass(frozen=True)
class CnnConfig:
    grid: int = 32
    base_channels: int = 8
    latent: int = 128
    n_down: int = None          # default: down to a 4x4 bottom
    predictor_hidden: int = None  # None = single FC + LeakyReLU
    slope: float = 0.2

    def __post_init__(self):
        n_down = self.n_down
        if n_down is None:
            size, n_down = self.grid, 0
            while size > 4 and size % 2 == 0:
                size //= 2
                n_down += 1
            object.__setattr__(self, "n_down", n_down)
        bottom = self.grid >> self.n_down
        if bottom < 1 or bottom << self.n_down != self.grid:
            raise ConfigError(
                f"grid {self.grid} incompatible with {self.n_down} stride-2 stages"
            )

    @property
    def bottom(self) -> int:
        return self.grid >> self.n_down

    def channels(self):
        return [self.base_channels * (2**i) for i in range(self.n_down + 1)]


class CnnModel:
    """Autoencoder with a latent-space predictor for masked mesh fields."""

    def __init__(self, cfg: CnnConfig, seed: int = 0):
        self.cfg = cfg
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        chans = cfg.channels()

        def conv_p(name, cout, cin, k=3):
            self.store.new(f"{name}.w", (cout, cin, k, k), rng,
                           scale=1.0 / np.sqrt(cin * k * k))
            self.store.zeros(f"{name}.b", (cout,))

        conv_p("enc.stem", chans[0], 1)
        for i in range(cfg.n_down):
            conv_p(f"enc{i}.c1", chans[i], chans[i])
            conv_p(f"enc{i}.c2", chans[i], chans[i])
            conv_p(f"enc{i}.down", chans[i + 1], chans[i])
        flat = chans[-1] * cfg.bottom * cfg.bottom
        self.store.new("enc.fc.w", (flat, cfg.latent), rng)
        self.store.zeros("enc.fc.b", (cfg.latent,))

        if cfg.predictor_hidden is None:
            self.store.new("pred.fc.w", (cfg.latent, cfg.latent), rng)
            self.store.zeros("pred.fc.b", (cfg.latent,))
        else:
            self.store.new("pred.fc1.w", (cfg.latent, cfg.predictor_hidden), rng)
            self.store.zeros("pred.fc1.b", (cfg.predictor_hidden,))
            self.store.new("pred.fc2.w", (cfg.predictor_hidden, cfg.latent), rng)
            self.store.zeros("pred.fc2.b", (cfg.latent,))

        self.store.new("dec.fc.w", (cfg.latent, flat), rng)
        self.store.zeros("dec.fc.b", (flat,))
        for i in range(cfg.n_down - 1, -1, -1):
            conv_p(f"dec{i}.up", chans[i], chans[i + 1])
            conv_p(f"dec{i}.c1", chans[i], chans[i])
            self.store.ones(f"dec{i}.bn.gamma", (chans[i],))
            self.store.zeros(f"dec{i}.bn.beta", (chans[i],))
            conv_p(f"dec{i}.c2", chans[i], chans[i])
        conv_p("dec.head", 1, chans[0])
        self.seed = seed

    def parameters(self):
        return self.store.tensors()

    def param_count(self) -> int:
        return self.store.count()

    def _conv(self, name, x, stride=1):
        return ad.conv2d(x, self.store[f"{name}.w"], self.store[f"{name}.b"],
                         stride=stride, pad=1)

    def forward(self, fields: np.ndarray) -> ad.Tensor:
        """fields (B, H, W) -> predicted fields (B, H, W)."""
        cfg = self.cfg
        if fields.ndim != 3 or fields.shape[1] != cfg.grid or fields.shape[2] != cfg.grid:
            raise ConfigError(f"expected (B, {cfg.grid}, {cfg.grid}), got {fields.shape}")
        b = fields.shape[0]
        s = cfg.slope
        h = ad.leaky_relu(self._conv("enc.stem", ad.reshape(ad.constant(fields),
                                                            (b, 1, cfg.grid, cfg.grid))), s)
        for i in range(cfg.n_down):
            y = ad.leaky_relu(self._conv(f"enc{i}.c1", h), s)
            y = self._conv(f"enc{i}.c2", y)
            h = ad.leaky_relu(ad.add(h, y), s)
            h = ad.leaky_relu(self._conv(f"enc{i}.down", h, stride=2), s)
        flat = cfg.channels()[-1] * cfg.bottom * cfg.bottom
        z = ad.add(ad.matmul(ad.reshape(h, (b, flat)), self.store["enc.fc.w"]),
                   self.store["enc.fc.b"])

        if cfg.predictor_hidden is None:
            z = ad.leaky_relu(ad.add(ad.matmul(z, self.store["pred.fc.w"]),
                                     self.store["pred.fc.b"]), s)
        else:
            z = ad.leaky_relu(ad.add(ad.matmul(z, self.store["pred.fc1.w"]),
                                     self.store["pred.fc1.b"]), s)
            z = ad.add(ad.matmul(z, self.store["pred.fc2.w"]), self.store["pred.fc2.b"])

        h = ad.leaky_relu(ad.add(ad.matmul(z, self.store["dec.fc.w"]),
                                 self.store["dec.fc.b"]), s)
        h = ad.reshape(h, (b, cfg.channels()[-1], cfg.bottom, cfg.bottom))
        for i in range(cfg.n_down - 1, -1, -1):
            h = ad.leaky_relu(self._conv(f"dec{i}.up", ad.upsample_nearest(h, 2)), s)
            y = self._conv(f"dec{i}.c1", h)
            y = ad.leaky_relu(ad.batch_norm(y, self.store[f"dec{i}.bn.gamma"],
                                            self.store[f"dec{i}.bn.beta"]), s)
            y = ad.pixel_norm(self._conv(f"dec{i}.c2", y))
            h = ad.leaky_relu(ad.add(h, y), s)
        out = self._conv("dec.head", h)
        return ad.reshape(out, (b, cfg.grid, cfg.grid))


def model_meta(kind: str, cfg, seed: int, extra: dict = None) -> dict:
    meta = {"kind": kind, "config": asdict(cfg), "seed": seed}
    if extra:
        meta.update(extra)
    return meta
