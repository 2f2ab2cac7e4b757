"""Adversarial training: losses, optimizer, loop, metrics, checkpoints.

One training step runs `n_critic` critic updates (each on fresh real and
freshly generated batches) followed by a single joint generator/encoder
update minimizing

    adversarial - lambda_mi * MI_bound + lambda_sup * supervised_CE.

The critic's Lipschitz constraint comes from spectral normalization by
default; a gradient-penalty mode exists for speed/stability comparisons.
The supervised term sees only labeled real samples and is skipped
(contributing exactly zero, with no gradient) when none are available.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Batch, DatasetSplit, EpochSampler, FRAME_DIM
from .errors import ConfigError, DataError, ParseError, TrainingDiverged
from .nets import (GeneratorParams, HeadParams, ModelParams, NetConfig,
                   SpectralSet, SpectralState, TrunkParams, critic_score,
                   detached_critic_view, encoder_log_posterior, generate,
                   init_model)
from .priors import LatentConfig, LengthPrior, salient_entropy, sample_seed_batch

METRICS_HEADER = ("step", "wall_clock_s", "critic_wasserstein",
                  "gen_adversarial", "mi_lower_bound", "supervised_ce",
                  "gradient_penalty")

SPECTRAL_NORM = "spectral_norm"
GRADIENT_PENALTY = "gradient_penalty"


@dataclass
class TrainConfig:
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    lr_e: float = 1e-4
    n_critic: int = 5
    batch_size: int = 32
    lambda_mi: float = 1.0
    lambda_sup: float = 1.0
    lipschitz_mode: str = SPECTRAL_NORM
    gp_lambda: float = 10.0
    max_steps: int = 1000
    seed: int = 0
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    log_every: int = 1
    checkpoint_every: int = 0  # 0: only the final checkpoint
    dtype: str = "float32"

    def __post_init__(self):
        if min(self.lr_g, self.lr_d, self.lr_e) <= 0:
            raise ConfigError("learning rates must be positive")
        if self.n_critic < 1:
            raise ConfigError("n_critic must be >= 1")
        if self.lipschitz_mode not in (SPECTRAL_NORM, GRADIENT_PENALTY):
            raise ConfigError(f"unknown lipschitz_mode {self.lipschitz_mode!r}")
        if self.batch_size < 1 or self.max_steps < 0:
            raise ConfigError("batch_size must be >= 1 and max_steps >= 0")


@dataclass
class StepMetrics:
    step: int
    wall_clock_s: float
    critic_wasserstein: float
    gen_adversarial: float
    mi_lower_bound: float
    supervised_ce: float
    gradient_penalty: Optional[float] = None
    gen_total: float = 0.0  # scalar the joint optimizer actually consumed
    duration_s: float = 0.0

    def csv_row(self) -> str:
        gp = "" if self.gradient_penalty is None else repr(self.gradient_penalty)
        return (f"{self.step},{self.wall_clock_s!r},{self.critic_wasserstein!r},"
                f"{self.gen_adversarial!r},{self.mi_lower_bound!r},"
                f"{self.supervised_ce!r},{gp}")


class Adam:
    """Adaptive-moment SGD; moments default to (0.5, 0.9)."""

    def __init__(self, params, lr, beta1=0.5, beta2=0.9, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            gd = g.data if isinstance(g, Tensor) else g
            m *= b1
            m += (1.0 - b1) * gd
            v *= b2
            v += (1.0 - b2) * gd * gd
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# losses

def critic_objective(real: Batch, fake_x, fake_mask, model: ModelParams,
                     score_fn=None) -> Tensor:
    """Wasserstein estimate: mean D(real) - mean D(fake).

    The critic update *maximizes* this (implemented by minimizing its
    negation); weights must already be normalized per the Lipschitz mode.
    `score_fn(x, mask)` overrides the critic (hand-built test critics).
    """
    if score_fn is None:
        score_fn = lambda x, mask: critic_score(x, model, mask)
    d_real = ad.tmean(score_fn(real.x, real.mask))
    d_fake = ad.tmean(score_fn(fake_x, fake_mask))
    return d_real - d_fake


def generator_adv_loss(fake_x, fake_mask, model: ModelParams) -> Tensor:
    """-mean D(fake) with critic parameters frozen as constants."""
    frozen = detached_critic_view(model)
    return -ad.tmean(critic_score(fake_x, frozen, fake_mask))


def mi_lower_bound(c_sampled: np.ndarray, fake_x, fake_mask,
                   model: ModelParams) -> Tensor:
    """Variational MI bound: mean log q(c_sampled | x_fake) + H(c).

    Maximized w.r.t. both the encoder and (through the generated frames)
    the generator. Never exceeds H(c) = ln K.
    """
    logq = encoder_log_posterior(fake_x, model, fake_mask)
    picked = ad.tsum(logq * Tensor(np.asarray(c_sampled, dtype=logq.dtype)), axis=1)
    return ad.tmean(picked) + salient_entropy(c_sampled.shape[1])


def supervised_ce(batch: Optional[Batch], model: ModelParams) -> Tensor:
    """Mean cross-entropy of encoder predictions on labeled real samples.

    Rows with labeled=False are ignored; with no labeled rows at all the
    term is a constant zero (no gradient reaches any parameter).
    """
    dtype = model.trunk.dense_w.dtype
    if batch is None or not np.any(batch.labeled):
        return Tensor(np.zeros((), dtype=dtype))
    keep = np.flatnonzero(batch.labeled)
    labels = batch.labels[keep]
    k = model.cfg.n_categories
    if labels.min() < 0 or labels.max() >= k:
        raise DataError(f"labels outside 0..{k - 1} in supervised batch")
    logq = encoder_log_posterior(batch.x[keep], model, batch.mask[keep])
    return -ad.tmean(logq[np.arange(len(keep)), labels])


def gradient_penalty(real: Batch, fake_x, fake_mask, model: ModelParams,
                     rng: np.random.Generator, score_fn=None) -> Tensor:
    """WGAN-GP regularizer: mean (||grad_x D(x_hat)||_2 - 1)^2.

    x_hat interpolates paired real/fake sequences with per-sample epsilon
    uniform on [0, 1]; batches are zero-padded to a common length and the
    union of both masks marks valid steps. `score_fn(x, mask)` overrides
    the critic (used by tests with hand-built critics).
    """
    fake = fake_x.data if isinstance(fake_x, Tensor) else np.asarray(fake_x)
    n = min(real.x.shape[0], fake.shape[0])
    t = max(real.x.shape[1], fake.shape[1])

    def pad(x, mask, t_target):
        extra = t_target - x.shape[1]
        if extra > 0:
            x = np.concatenate(
                [x, np.zeros((x.shape[0], extra, x.shape[2]), dtype=x.dtype)], axis=1)
            mask = np.concatenate(
                [mask, np.zeros((mask.shape[0], extra), dtype=bool)], axis=1)
        return x, mask

    xr, mr = pad(real.x[:n], real.mask[:n], t)
    xf, mf = pad(fake[:n].astype(real.x.dtype), np.asarray(fake_mask)[:n], t)
    eps = rng.random((n, 1, 1)).astype(real.x.dtype)
    interp = eps * xr + (1.0 - eps) * xf
    mask = mr | mf

    x_hat = ad.parameter(interp)
    if score_fn is None:
        scores = critic_score(x_hat, model, mask)
    else:
        scores = score_fn(x_hat, mask)
    (g,) = ad.grad(ad.tsum(scores), [x_hat], create_graph=True)
    norms = ad.sqrt(ad.tsum(ad.square(g), axis=(1, 2)))
    return ad.tmean(ad.square(norms - 1.0))


# ---------------------------------------------------------------------------
# train state

@dataclass
class TrainState:
    model: ModelParams
    opt_g: Adam
    opt_d: Adam
    opt_e: Adam
    rng: np.random.Generator
    step: int = 0


class TrainData:
    """Per-run batch sources: all real samples plus a labeled-only stream.

    A dedicated labeled sampler keeps the supervised term fed at low label
    fractions, where a uniform real batch would rarely contain one.
    """

    def __init__(self, split: DatasetSplit, config: TrainConfig, dtype):
        rng = np.random.default_rng(config.seed + 2)
        self.real = EpochSampler(split.train, config.batch_size, rng, dtype)
        labeled = [s for s in split.train if s.labeled and s.label is not None]
        self.labeled = (EpochSampler(labeled, config.batch_size, rng, dtype)
                        if labeled else None)


def init_train_state(config: TrainConfig, latent: LatentConfig,
                     frame_dim: int = FRAME_DIM) -> TrainState:
    net_cfg = NetConfig(frame_dim=frame_dim, noise_dim=latent.noise_dim,
                        n_categories=latent.n_categories, dtype=config.dtype)
    model = init_model(net_cfg, seed=config.seed,
                       spectral_norm=config.lipschitz_mode == SPECTRAL_NORM)
    kw = dict(beta1=config.adam_beta1, beta2=config.adam_beta2)
    return TrainState(
        model=model,
        opt_g=Adam(model.generator_params(), config.lr_g, **kw),
        opt_d=Adam(model.critic_params(), config.lr_d, **kw),
        opt_e=Adam(model.encoder_params(), config.lr_e, **kw),
        rng=np.random.default_rng(config.seed + 1),
    )


def _require_finite(value: Tensor, name: str, step: int, extras: dict):
    if not np.all(np.isfinite(value.data)):
        diag = {"loss": name, **{k: float(v) for k, v in extras.items()}}
        raise TrainingDiverged(f"{name} is non-finite at step {step}: {diag}",
                               step=step, diagnostics=diag)


def _batch_stats(x) -> dict:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    return {"mean": float(arr.mean()), "std": float(arr.std()),
            "absmax": float(np.abs(arr).max())}


def train_step(state: TrainState, data: TrainData, config: TrainConfig,
               latent: LatentConfig, length: LengthPrior) -> StepMetrics:
    """One full alternation: n_critic critic updates, one joint G/E update."""
    t0 = time.perf_counter()
    model = state.model
    spectral = config.lipschitz_mode == SPECTRAL_NORM
    w_value = gp_value = None

    for _ in range(config.n_critic):
        if spectral:
            model.update_spectral(1)
        real = data.real.next_batch()
        seeds = sample_seed_batch(state.rng, config.batch_size, latent, length)
        with ad.no_grad():
            fake_x, fake_mask = generate(seeds, model.gen,
                                         n_steps=int(seeds.lengths.max()))
        w_est = critic_objective(real, fake_x, fake_mask, model)
        loss_d = -w_est
        if not spectral:
            gp = gradient_penalty(real, fake_x, fake_mask, model, state.rng)
            loss_d = loss_d + config.gp_lambda * gp
            gp_value = float(gp.data)
        diag = {"real": _batch_stats(real.x)["absmax"],
                "fake": _batch_stats(fake_x)["absmax"]}
        _require_finite(loss_d, "critic loss", state.step, diag)
        state.opt_d.step(ad.grad(loss_d, state.opt_d.params))
        w_value = float(w_est.data)

    seeds = sample_seed_batch(state.rng, config.batch_size, latent, length)
    fake_x, fake_mask = generate(seeds, model.gen, n_steps=int(seeds.lengths.max()))
    adv = generator_adv_loss(fake_x, fake_mask, model)
    mi = mi_lower_bound(seeds.c, fake_x, fake_mask, model)
    labeled = data.labeled.next_batch() if data.labeled is not None else None
    ce = supervised_ce(labeled, model)
    joint = adv - config.lambda_mi * mi + config.lambda_sup * ce
    _require_finite(joint, "generator/encoder loss", state.step,
                    {"fake": _batch_stats(fake_x)["absmax"]})

    gen_params = state.opt_g.params
    enc_params = state.opt_e.params
    grads = ad.grad(joint, gen_params + enc_params)
    state.opt_g.step(grads[:len(gen_params)])
    state.opt_e.step(grads[len(gen_params):])
    if spectral:
        # re-converge the singular-vector estimates against the freshly
        # updated weights so the post-step Lipschitz bound holds tightly
        model.converge_spectral()

    state.step += 1
    dt = time.perf_counter() - t0
    return StepMetrics(
        step=state.step, wall_clock_s=dt, duration_s=dt,
        critic_wasserstein=w_value,
        gen_adversarial=float(adv.data),
        mi_lower_bound=float(mi.data),
        supervised_ce=float(ce.data),
        gradient_penalty=gp_value,
        gen_total=float(joint.data),
    )


@dataclass
class TrainResult:
    state: TrainState
    metrics: list
    metrics_path: Optional[Path] = None
    checkpoint_path: Optional[Path] = None


def train_run(split: DatasetSplit, config: TrainConfig,
              latent: LatentConfig = LatentConfig(),
              length: LengthPrior = LengthPrior(),
              out_dir=None, progress=None) -> TrainResult:
    """Run `max_steps` training steps; log metrics and checkpoints.

    With `out_dir` set, writes `metrics.csv` (one row per logged step) and
    `checkpoint.npz`; periodic checkpoints go to `checkpoint_step<N>.npz`.
    """
    if not split.train:
        raise ConfigError("training split is empty")
    state = init_train_state(config, latent)
    data = TrainData(split, config, state.model.cfg.np_dtype)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    metrics, elapsed = [], 0.0
    csv_path = ckpt_path = None
    try:
        for _ in range(config.max_steps):
            m = train_step(state, data, config, latent, length)
            elapsed += m.duration_s
            m.wall_clock_s = elapsed
            if m.step % config.log_every == 0 or m.step == config.max_steps:
                metrics.append(m)
            if progress is not None:
                progress(m)
            if (out_dir is not None and config.checkpoint_every
                    and m.step % config.checkpoint_every == 0):
                save_checkpoint(out_dir / f"checkpoint_step{m.step}.npz",
                                state, config, latent, length)
    except TrainingDiverged as diverged:
        if out_dir is not None:
            (out_dir / "divergence.json").write_text(
                json.dumps({"step": diverged.step,
                            "diagnostics": diverged.diagnostics}, indent=2))
        raise
    if out_dir is not None:
        csv_path = out_dir / "metrics.csv"
        write_metrics_csv(csv_path, metrics)
        ckpt_path = out_dir / "checkpoint.npz"
        save_checkpoint(ckpt_path, state, config, latent, length)
    return TrainResult(state=state, metrics=metrics,
                       metrics_path=csv_path, checkpoint_path=ckpt_path)


# ---------------------------------------------------------------------------
# metrics CSV

def write_metrics_csv(path, metrics):
    lines = [",".join(METRICS_HEADER)]
    lines.extend(m.csv_row() for m in metrics)
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics_csv(path) -> list:
    """Parse a metrics log; raises ParseError naming the offending line."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise ParseError("empty metrics file", line=1, path=str(path))
    if text[0].strip() != ",".join(METRICS_HEADER):
        raise ParseError(f"unexpected header {text[0]!r}", line=1, path=str(path))
    out = []
    for i, row in enumerate(text[1:], start=2):
        if not row.strip():
            continue
        parts = row.split(",")
        if len(parts) != len(METRICS_HEADER):
            raise ParseError(f"expected {len(METRICS_HEADER)} fields, "
                             f"got {len(parts)}", line=i, path=str(path))
        try:
            out.append(StepMetrics(
                step=int(parts[0]), wall_clock_s=float(parts[1]),
                critic_wasserstein=float(parts[2]),
                gen_adversarial=float(parts[3]),
                mi_lower_bound=float(parts[4]), supervised_ce=float(parts[5]),
                gradient_penalty=float(parts[6]) if parts[6] else None))
        except ValueError:
            raise ParseError(f"bad numeric field in {row!r}", line=i,
                             path=str(path)) from None
    return out


# ---------------------------------------------------------------------------
# checkpointing

CHECKPOINT_VERSION = 1

_GEN_KEYS = ("w_frame", "w_latent", "w_hidden", "b_input", "b_hidden",
             "w_out", "b_out")
_TRUNK_KEYS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "dense_w", "dense_b")
_HEAD_KEYS = ("critic_w", "critic_b", "encoder_w", "encoder_b")


def save_checkpoint(path, state: TrainState, config: TrainConfig,
                    latent: LatentConfig = LatentConfig(),
                    length: LengthPrior = LengthPrior()):
    """Versioned container: parameters, spectral vectors, rng state, step."""
    model = state.model
    arrays = {"version": np.array(CHECKPOINT_VERSION, dtype=np.uint8),
              "step": np.array(state.step, dtype=np.int64)}
    for key in _GEN_KEYS:
        arrays[f"gen_{key}"] = getattr(model.gen, key).data
    for key in _TRUNK_KEYS:
        arrays[f"trunk_{key}"] = getattr(model.trunk, key).data
    for key in _HEAD_KEYS:
        arrays[f"head_{key}"] = getattr(model.heads, key).data
    if model.spectral is not None:
        for name, st in model.spectral.states.items():
            arrays[f"spectral_u_{name}"] = st.u
            arrays[f"spectral_v_{name}"] = st.v
    for tag, opt in (("g", state.opt_g), ("d", state.opt_d), ("e", state.opt_e)):
        arrays[f"adam_{tag}_t"] = np.array(opt.t, dtype=np.int64)
        for i, (m, v) in enumerate(zip(opt.m, opt.v)):
            arrays[f"adam_{tag}_m{i}"] = m
            arrays[f"adam_{tag}_v{i}"] = v
    meta = {
        "net_cfg": {f.name: getattr(model.cfg, f.name)
                    for f in fields(model.cfg)},
        "train_cfg": {f.name: getattr(config, f.name) for f in fields(config)},
        "latent_cfg": {f.name: getattr(latent, f.name) for f in fields(latent)},
        "length_prior": {f.name: getattr(length, f.name) for f in fields(length)},
        "rng_state": state.rng.bit_generator.state,
    }
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


@dataclass
class CheckpointBundle:
    state: TrainState
    config: TrainConfig
    latent: LatentConfig
    length: LengthPrior

    def __iter__(self):  # allows `state, config = load_checkpoint(...)`
        return iter((self.state, self.config))


def load_checkpoint(path) -> CheckpointBundle:
    """Rebuild the training state exactly as saved."""
    with np.load(path) as blob:
        version = int(blob["version"])
        if version != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        meta = json.loads(bytes(blob["meta_json"]).decode("utf-8"))
        net_cfg = NetConfig(**meta["net_cfg"])
        config = TrainConfig(**meta["train_cfg"])
        latent = LatentConfig(**meta.get("latent_cfg", {}))
        length = LengthPrior(**meta.get("length_prior", {}))
        gen = GeneratorParams(**{k: ad.parameter(blob[f"gen_{k}"].copy())
                                 for k in _GEN_KEYS})
        trunk = TrunkParams(**{k: ad.parameter(blob[f"trunk_{k}"].copy())
                               for k in _TRUNK_KEYS})
        heads = HeadParams(**{k: ad.parameter(blob[f"head_{k}"].copy())
                              for k in _HEAD_KEYS})
        model = ModelParams(cfg=net_cfg, gen=gen, trunk=trunk, heads=heads)
        if "spectral_u_conv1" in blob.files:
            states = {name: SpectralState(u=blob[f"spectral_u_{name}"].copy(),
                                          v=blob[f"spectral_v_{name}"].copy())
                      for name in model.spectral_named()}
            model.spectral = SpectralSet.restore(states)
        kw = dict(beta1=config.adam_beta1, beta2=config.adam_beta2)
        state = TrainState(
            model=model,
            opt_g=Adam(model.generator_params(), config.lr_g, **kw),
            opt_d=Adam(model.critic_params(), config.lr_d, **kw),
            opt_e=Adam(model.encoder_params(), config.lr_e, **kw),
            rng=np.random.default_rng(),
            step=int(blob["step"]),
        )
        for tag, opt in (("g", state.opt_g), ("d", state.opt_d),
                         ("e", state.opt_e)):
            opt.t = int(blob[f"adam_{tag}_t"])
            opt.m = [blob[f"adam_{tag}_m{i}"].copy() for i in range(len(opt.m))]
            opt.v = [blob[f"adam_{tag}_v{i}"].copy() for i in range(len(opt.v))]
        state.rng.bit_generator.state = meta["rng_state"]
    return CheckpointBundle(state=state, config=config, latent=latent,
                            length=length)
