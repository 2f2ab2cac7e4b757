"""Supervised reference classifiers trained on the labeled fraction only.

Two baselines frame the encoder comparison:

  * a 1-D CNN with exactly the encoder's trunk shapes plus a softmax head
    (capacity parity is asserted in tests), dropout 0.1 after the dense
    layer;
  * a 2-layer GRU classifier reading out the hidden state at each
    sequence's last unmasked timestep.

Both minimize categorical cross-entropy with the same optimizer settings
the encoder uses; unlabeled samples never contribute a gradient.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import DatasetSplit, EpochSampler, FRAME_DIM
from .errors import ConfigError, DataError
from .nets import NetConfig, TrunkParams, gru_gates, trunk_forward
from .training import Adam


@dataclass
class BaselineConfig:
    lr: float = 1e-4
    batch_size: int = 32
    max_steps: int = 500
    seed: int = 0
    dropout: float = 0.1
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    dtype: str = "float32"
    log_every: int = 25

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or not 0 <= self.dropout < 1:
            raise ConfigError("invalid baseline config")


@dataclass
class FitMetrics:
    step: int
    loss: float
    wall_clock_s: float


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return ad.parameter(rng.uniform(-bound, bound, size=shape).astype(dtype))


def _zeros(shape, dtype):
    return ad.parameter(np.zeros(shape, dtype=dtype))


# ---------------------------------------------------------------------------
# CNN classifier

@dataclass
class CnnClassifier:
    """Same layer shapes as the encoder (trunk + softmax head) plus dropout."""

    cfg: NetConfig
    trunk: TrunkParams
    head_w: Tensor
    head_b: Tensor
    dropout_rate: float = 0.1

    def params(self):
        return self.trunk.tensors() + [self.head_w, self.head_b]

    def n_params(self) -> int:
        return sum(p.data.size for p in self.params())

    def logits(self, x, mask=None, dropout_rng: Optional[np.random.Generator] = None):
        feat = trunk_forward(ad.astensor(x), self.trunk, mask)
        if dropout_rng is not None and self.dropout_rate > 0:
            keep = (dropout_rng.random(feat.shape) >= self.dropout_rate)
            scale = keep.astype(feat.dtype) / (1.0 - self.dropout_rate)
            feat = feat * Tensor(scale)
        return feat @ self.head_w + self.head_b

    def predict_proba(self, x, mask=None) -> np.ndarray:
        with ad.no_grad():
            return ad.softmax(self.logits(x, mask)).data


def init_cnn(cfg: NetConfig, seed: int = 0, dropout: float = 0.1) -> CnnClassifier:
    rng = np.random.default_rng(seed)
    dt = cfg.np_dtype
    f, d, k, fd = cfg.conv_filters, cfg.dense_units, cfg.kernel_size, cfg.frame_dim
    trunk = TrunkParams(
        conv1_w=_uniform(rng, (k, fd, f), k * fd, dt), conv1_b=_zeros(f, dt),
        conv2_w=_uniform(rng, (k, f, f), k * f, dt), conv2_b=_zeros(f, dt),
        dense_w=_uniform(rng, (f, d), f, dt), dense_b=_zeros(d, dt),
    )
    return CnnClassifier(cfg=cfg, trunk=trunk,
                         head_w=_uniform(rng, (d, cfg.n_categories), d, dt),
                         head_b=_zeros(cfg.n_categories, dt),
                         dropout_rate=dropout)


# ---------------------------------------------------------------------------
# RNN classifier

@dataclass
class GruLayerParams:
    w_in: Tensor   # (in_dim, 3H)
    w_hid: Tensor  # (H, 3H)
    b_in: Tensor
    b_hid: Tensor

    def tensors(self):
        return [self.w_in, self.w_hid, self.b_in, self.b_hid]


@dataclass
class RnnClassifier:
    """Two stacked GRU layers; softmax head on the last unmasked state."""

    cfg: NetConfig
    layers: list
    head_w: Tensor
    head_b: Tensor

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.tensors())
        return out + [self.head_w, self.head_b]

    def n_params(self) -> int:
        return sum(p.data.size for p in self.params())

    def logits(self, x, mask=None):
        x = ad.astensor(x)
        if x.ndim == 2:
            x = ad.reshape(x, (1,) + x.shape)
        b, t, _ = x.shape
        if mask is None:
            mask = np.ones((b, t), dtype=bool)
        lengths = np.asarray(mask).sum(axis=1).astype(np.int64)
        if lengths.min() < 1:
            raise DataError("every sequence needs at least one unmasked step")
        h_units = self.cfg.rnn_units
        dt = x.dtype

        states = x
        for layer in self.layers:
            h = Tensor(np.zeros((b, h_units), dtype=dt))
            outs = []
            for step in range(t):
                gx = states[:, step, :] @ layer.w_in + layer.b_in
                gh = h @ layer.w_hid + layer.b_hid
                h = gru_gates(gx, gh, h, h_units)
                outs.append(h)
            states = ad.stack(outs, axis=1)
        final = states[np.arange(b), lengths - 1]  # last unmasked state
        return final @ self.head_w + self.head_b

    def predict_proba(self, x, mask=None) -> np.ndarray:
        with ad.no_grad():
            return ad.softmax(self.logits(x, mask)).data


def init_rnn(cfg: NetConfig, seed: int = 0, n_layers: int = 2) -> RnnClassifier:
    rng = np.random.default_rng(seed)
    dt = cfg.np_dtype
    h = cfg.rnn_units
    layers = []
    in_dim = cfg.frame_dim
    for _ in range(n_layers):
        layers.append(GruLayerParams(
            w_in=_uniform(rng, (in_dim, 3 * h), in_dim + h, dt),
            w_hid=_uniform(rng, (h, 3 * h), in_dim + h, dt),
            b_in=_zeros(3 * h, dt),
            b_hid=_zeros(3 * h, dt),
        ))
        in_dim = h
    return RnnClassifier(cfg=cfg, layers=layers,
                         head_w=_uniform(rng, (h, cfg.n_categories), h, dt),
                         head_b=_zeros(cfg.n_categories, dt))


# ---------------------------------------------------------------------------
# supervised training

def _cross_entropy(logits, labels):
    logp = ad.log_softmax(logits, axis=-1)
    return -ad.tmean(logp[np.arange(labels.shape[0]), labels])


def _fit(model, logits_fn, split: DatasetSplit, config: BaselineConfig):
    labeled = [s for s in split.train if s.labeled and s.label is not None]
    if not labeled:
        raise ConfigError("no labeled training samples for a supervised baseline")
    k = model.cfg.n_categories
    if any(not 0 <= s.label < k for s in labeled):
        raise DataError(f"labels outside 0..{k - 1}")
    rng = np.random.default_rng(config.seed + 1)
    sampler = EpochSampler(labeled, config.batch_size, rng, model.cfg.np_dtype)
    opt = Adam(model.params(), config.lr,
               beta1=config.adam_beta1, beta2=config.adam_beta2)
    dropout_rng = np.random.default_rng(config.seed + 2)

    metrics, start = [], time.perf_counter()
    for step in range(1, config.max_steps + 1):
        batch = sampler.next_batch()
        loss = _cross_entropy(logits_fn(batch, dropout_rng), batch.labels)
        opt.step(ad.grad(loss, opt.params))
        if step % config.log_every == 0 or step == config.max_steps:
            metrics.append(FitMetrics(step=step, loss=float(loss.data),
                                      wall_clock_s=time.perf_counter() - start))
    return metrics


def train_cnn(split: DatasetSplit, config: BaselineConfig = BaselineConfig(),
              n_categories: int = 60, frame_dim: int = FRAME_DIM):
    """Fit the CNN baseline on labeled samples only; dropout active."""
    cfg = NetConfig(frame_dim=frame_dim, n_categories=n_categories,
                    dtype=config.dtype)
    model = init_cnn(cfg, seed=config.seed, dropout=config.dropout)
    metrics = _fit(model, lambda b, drng: model.logits(b.x, b.mask, drng),
                   split, config)
    return model, metrics


def train_rnn(split: DatasetSplit, config: BaselineConfig = BaselineConfig(),
              n_categories: int = 60, frame_dim: int = FRAME_DIM):
    """Fit the 2-layer GRU baseline on labeled samples only."""
    cfg = NetConfig(frame_dim=frame_dim, n_categories=n_categories,
                    dtype=config.dtype)
    model = init_rnn(cfg, seed=config.seed)
    metrics = _fit(model, lambda b, _drng: model.logits(b.x, b.mask),
                   split, config)
    return model, metrics


def classify(model, sequence):
    """Predicted class and posterior for one sequence.

    Ties break toward the lowest class index (argmax convention).
    """
    frames = sequence.flat()[None, :, :].astype(model.cfg.np_dtype) \
        if hasattr(sequence, "flat") else np.asarray(sequence)[None]
    proba = model.predict_proba(frames)[0]
    return int(np.argmax(proba)), proba


# ---------------------------------------------------------------------------
# persistence

CLASSIFIER_VERSION = 1


def save_classifier(path, model):
    """Versioned npz with the classifier kind, net config and parameters."""
    import json
    from dataclasses import fields as dc_fields

    kind = "cnn" if isinstance(model, CnnClassifier) else "rnn"
    arrays = {"version": np.array(CLASSIFIER_VERSION, dtype=np.uint8)}
    for i, p in enumerate(model.params()):
        arrays[f"param_{i}"] = p.data
    meta = {"kind": kind,
            "net_cfg": {f.name: getattr(model.cfg, f.name)
                        for f in dc_fields(model.cfg)}}
    if kind == "cnn":
        meta["dropout_rate"] = model.dropout_rate
    else:
        meta["n_layers"] = len(model.layers)
    arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_classifier(path):
    import json

    with np.load(path) as blob:
        if int(blob["version"]) != CLASSIFIER_VERSION:
            raise DataError(f"unsupported classifier version {int(blob['version'])}")
        meta = json.loads(bytes(blob["meta_json"]).decode())
        cfg = NetConfig(**meta["net_cfg"])
        if meta["kind"] == "cnn":
            model = init_cnn(cfg, dropout=meta.get("dropout_rate", 0.1))
        else:
            model = init_rnn(cfg, n_layers=meta.get("n_layers", 2))
        for i, p in enumerate(model.params()):
            p.data = blob[f"param_{i}"].copy()
    return model
