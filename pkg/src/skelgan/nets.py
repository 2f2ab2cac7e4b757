"""Model definitions: AR-GRU generator, conv critic, shared-trunk encoder.

Three differentiable models over variable-length frame sequences
(T x frame_dim, frame_dim = 25 joints x 3 coords by default):

  * generator: single GRU cell unrolled autoregressively; the previous
    output frame, the global noise vector and the one-hot salient code
    form the input at every step; frames go through a softsign projection
    so every coordinate stays in (-1, 1). Outputs past the seed's length
    are zeroed.
  * critic: two 1-D convolutions along time -> tanh -> global max pool
    over unmasked steps -> dense -> tanh -> linear scalar score.
  * encoder: shares the critic's convolutional trunk (same parameter
    tensors, not copies) and adds a softmax head over the salient
    categories.

Critic-path weight matrices are spectrally normalized (power iteration,
persistent left singular vector estimates); the encoder head is not.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, softsign
from .priors import MAX_SEQUENCE_LENGTH, LatentSeed, SeedBatch

NEG_POOL = -1e30  # sentinel below any tanh activation, for masked max pool


@dataclass(frozen=True)
class NetConfig:
    frame_dim: int = 75
    rnn_units: int = 64
    conv_filters: int = 64
    dense_units: int = 64
    kernel_size: int = 5
    noise_dim: int = 64
    n_categories: int = 60
    dtype: str = "float32"

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def latent_dim(self):
        return self.noise_dim + self.n_categories


@dataclass
class GeneratorParams:
    """GRU cell (gates ordered r, z, n) plus the frame projection."""

    w_frame: Tensor   # (frame_dim, 3H): previous-output block of the input map
    w_latent: Tensor  # (noise+categories, 3H): global seed block
    w_hidden: Tensor  # (H, 3H)
    b_input: Tensor   # (3H,)
    b_hidden: Tensor  # (3H,)
    w_out: Tensor     # (H, frame_dim)
    b_out: Tensor     # (frame_dim,)

    def tensors(self):
        return [self.w_frame, self.w_latent, self.w_hidden,
                self.b_input, self.b_hidden, self.w_out, self.b_out]


@dataclass
class TrunkParams:
    conv1_w: Tensor  # (K, frame_dim, F)
    conv1_b: Tensor
    conv2_w: Tensor  # (K, F, F)
    conv2_b: Tensor
    dense_w: Tensor  # (F, D)
    dense_b: Tensor

    def tensors(self):
        return [self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b,
                self.dense_w, self.dense_b]


@dataclass
class HeadParams:
    critic_w: Tensor   # (D, 1)
    critic_b: Tensor   # (1,)
    encoder_w: Tensor  # (D, n_categories)
    encoder_b: Tensor  # (n_categories,)

    def tensors(self):
        return [self.critic_w, self.critic_b, self.encoder_w, self.encoder_b]


# ---------------------------------------------------------------------------
# spectral normalization

@dataclass
class SpectralState:
    """Power-iteration state for one weight matrix."""

    u: np.ndarray            # (rows,) unit-norm left singular estimate
    v: np.ndarray            # (cols,) right singular estimate
    eps: float = 1e-12
    degenerate: bool = False


def _as_matrix(w: np.ndarray) -> np.ndarray:
    """View a weight tensor as (out_dim, in_dim * taps)."""
    if w.ndim == 2:          # dense (in, out) -> (out, in)
        return w.T
    if w.ndim == 3:          # conv (K, in, out) -> (out, K * in)
        return np.transpose(w, (2, 0, 1)).reshape(w.shape[2], -1)
    raise ValueError(f"unsupported weight rank {w.ndim}")


def power_iterate(mat: np.ndarray, u: np.ndarray, n_iters: int, eps: float = 1e-12):
    """Run `n_iters` power-iteration sweeps; return (u, v, sigma)."""
    v = None
    for _ in range(max(1, n_iters)):
        v = mat.T @ u
        nv = np.linalg.norm(v)
        if nv < eps:
            return u, np.zeros(mat.shape[1], dtype=mat.dtype), 0.0
        v = v / nv
        u = mat @ v
        nu = np.linalg.norm(u)
        if nu < eps:
            return np.zeros_like(u), v, 0.0
        u = u / nu
    sigma = float(u @ mat @ v)
    return u, v, sigma


def spectral_normalize(w: np.ndarray, state: SpectralState, n_iters: int = 1,
                       converge_tol: float = None, max_iters: int = 10_000):
    """Divide `w` by its estimated largest singular value.

    Conv kernels are flattened to (out, in*taps) for the iteration. Runs
    exactly `n_iters` power sweeps; with `converge_tol` set it continues
    past them (up to `max_iters`) until the sigma estimate moves by less
    than `converge_tol * sigma` per sweep, which matrices whose top two
    singular values nearly coincide require. Returns (w_norm, state'); a
    degenerate sigma (< eps) leaves `w` untouched and flags the state.
    """
    mat = _as_matrix(np.asarray(w))
    u, v, sigma = power_iterate(mat, state.u, n_iters, state.eps)
    if converge_tol is not None:
        for _ in range(n_iters, max_iters):
            u, v, new_sigma = power_iterate(mat, u, 1, state.eps)
            done = abs(new_sigma - sigma) <= converge_tol * max(new_sigma, state.eps)
            sigma = new_sigma
            if done:
                break
    if sigma < state.eps:
        return np.asarray(w), SpectralState(u=u, v=v, eps=state.eps, degenerate=True)
    return np.asarray(w) / sigma, SpectralState(u=u, v=v, eps=state.eps)


class SpectralSet:
    """Persistent power-iteration states for a named set of weights."""

    def __init__(self, named: dict[str, Tensor], rng: np.random.Generator):
        self.states: dict[str, SpectralState] = {}
        for name, w in named.items():
            mat = _as_matrix(w.data)
            u = rng.standard_normal(mat.shape[0])
            u /= np.linalg.norm(u)
            self.states[name] = SpectralState(u=u.astype(mat.dtype),
                                              v=np.zeros(mat.shape[1], mat.dtype))
        self.converge(named)

    @classmethod
    def restore(cls, states: dict[str, SpectralState]) -> "SpectralSet":
        obj = cls.__new__(cls)
        obj.states = dict(states)
        return obj

    def update(self, named: dict[str, Tensor], n_iters: int = 1):
        """Refresh u/v against the current raw weights (no gradients)."""
        for name, w in named.items():
            st = self.states[name]
            mat = _as_matrix(w.data)
            u, v, sigma = power_iterate(mat, st.u, n_iters, st.eps)
            self.states[name] = SpectralState(u=u, v=v, eps=st.eps,
                                              degenerate=sigma < st.eps)

    def converge(self, named: dict[str, Tensor], tol: float = 1e-10,
                 max_iters: int = 5000):
        """Iterate each state until its sigma estimate stabilizes.

        Freshly initialized (or freshly stepped) weights can have several
        near-equal top singular values, where a fixed iteration count
        stalls well short of sigma_1; running in 64-bit to a relative
        tolerance keeps the normalized spectral norm within 1e-3 of one.
        """
        for name, w in named.items():
            st = self.states[name]
            mat = _as_matrix(w.data).astype(np.float64)
            u = st.u.astype(np.float64)
            u, v, sigma = power_iterate(mat, u, 1, st.eps)
            for _ in range(max_iters):
                u, v, new_sigma = power_iterate(mat, u, 1, st.eps)
                done = abs(new_sigma - sigma) <= tol * max(new_sigma, st.eps)
                sigma = new_sigma
                if done:
                    break
            dt = _as_matrix(w.data).dtype
            self.states[name] = SpectralState(u=u.astype(dt), v=v.astype(dt),
                                              eps=st.eps,
                                              degenerate=sigma < st.eps)

    def sigma(self, name: str, w: Tensor) -> Tensor:
        """Sigma estimate as a graph node: u^T W v with u, v held constant."""
        st = self.states[name]
        if w.ndim == 2:
            mat = ad.swapaxes(w, 0, 1)
        else:
            k, cin, cout = w.shape
            mat = ad.reshape(ad.swapaxes(ad.swapaxes(w, 0, 2), 1, 2), (cout, k * cin))
        u = Tensor(st.u[None, :])
        v = Tensor(st.v[:, None])
        return ad.reshape(u @ mat @ v, ())

    def normalized(self, name: str, w: Tensor) -> Tensor:
        st = self.states[name]
        # degeneracy guard on the *current* value: sigma below eps would
        # blow up the division, so the raw weight passes through instead
        sig_now = float(st.u @ _as_matrix(w.data) @ st.v)
        if st.degenerate or sig_now < st.eps:
            return w
        return w / self.sigma(name, w)


# ---------------------------------------------------------------------------
# parameter containers

@dataclass
class ModelParams:
    cfg: NetConfig
    gen: GeneratorParams
    trunk: TrunkParams
    heads: HeadParams
    spectral: Optional[SpectralSet] = None

    def generator_params(self):
        return self.gen.tensors()

    def critic_params(self):
        return self.trunk.tensors() + [self.heads.critic_w, self.heads.critic_b]

    def encoder_params(self):
        return self.trunk.tensors() + [self.heads.encoder_w, self.heads.encoder_b]

    def all_params(self):
        return self.gen.tensors() + self.trunk.tensors() + self.heads.tensors()

    def spectral_named(self) -> dict[str, Tensor]:
        return {"conv1": self.trunk.conv1_w, "conv2": self.trunk.conv2_w,
                "dense": self.trunk.dense_w, "critic_head": self.heads.critic_w}

    def update_spectral(self, n_iters: int = 1):
        if self.spectral is not None:
            self.spectral.update(self.spectral_named(), n_iters)

    def converge_spectral(self):
        if self.spectral is not None:
            self.spectral.converge(self.spectral_named())

    def effective_critic_matrices(self) -> dict[str, np.ndarray]:
        """Normalized critic-path weights as 2-D matrices (for inspection)."""
        out = {}
        for name, w in self.spectral_named().items():
            if self.spectral is None:
                out[name] = _as_matrix(w.data)
            else:
                out[name] = _as_matrix(self.spectral.normalized(name, w).data)
        return out


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return ad.parameter(rng.uniform(-bound, bound, size=shape).astype(dtype))


def _zeros(shape, dtype):
    return ad.parameter(np.zeros(shape, dtype=dtype))


def init_model(cfg: NetConfig, seed: int = 0, spectral_norm: bool = True) -> ModelParams:
    """Fan-in uniform initialization; biases zero; deterministic in `seed`."""
    rng = np.random.default_rng(seed)
    dt = cfg.np_dtype
    h, f, d, k = cfg.rnn_units, cfg.conv_filters, cfg.dense_units, cfg.kernel_size
    fd, ld = cfg.frame_dim, cfg.latent_dim

    gen_in = fd + ld + h  # full GRU input fan-in (frame + seed + hidden)
    gen = GeneratorParams(
        w_frame=_uniform(rng, (fd, 3 * h), gen_in, dt),
        w_latent=_uniform(rng, (ld, 3 * h), gen_in, dt),
        w_hidden=_uniform(rng, (h, 3 * h), gen_in, dt),
        b_input=_zeros(3 * h, dt),
        b_hidden=_zeros(3 * h, dt),
        w_out=_uniform(rng, (h, fd), h, dt),
        b_out=_zeros(fd, dt),
    )
    trunk = TrunkParams(
        conv1_w=_uniform(rng, (k, fd, f), k * fd, dt),
        conv1_b=_zeros(f, dt),
        conv2_w=_uniform(rng, (k, f, f), k * f, dt),
        conv2_b=_zeros(f, dt),
        dense_w=_uniform(rng, (f, d), f, dt),
        dense_b=_zeros(d, dt),
    )
    heads = HeadParams(
        critic_w=_uniform(rng, (d, 1), d, dt),
        critic_b=_zeros(1, dt),
        encoder_w=_uniform(rng, (d, cfg.n_categories), d, dt),
        encoder_b=_zeros(cfg.n_categories, dt),
    )
    model = ModelParams(cfg=cfg, gen=gen, trunk=trunk, heads=heads)
    if spectral_norm:
        model.spectral = SpectralSet(model.spectral_named(), rng)
    return model


# ---------------------------------------------------------------------------
# generator forward

def gru_gates(gx, gh, h_prev, h: int):
    """Gate algebra shared by generator and recurrent classifiers.

    `gx`/`gh` are the input- and hidden-side projections (B, 3H) with
    gates ordered r, z, n; update gate z blends the previous state.
    """
    r = ad.sigmoid(gx[:, :h] + gh[:, :h])
    z = ad.sigmoid(gx[:, h:2 * h] + gh[:, h:2 * h])
    n = ad.tanh(gx[:, 2 * h:] + r * gh[:, 2 * h:])
    return (1.0 - z) * n + z * h_prev


def _gru_core(y_prev, lat_proj, h_prev, gen: GeneratorParams, h: int):
    """One generator step with the seed projection precomputed."""
    gx = y_prev @ gen.w_frame + lat_proj + gen.b_input
    gh = h_prev @ gen.w_hidden + gen.b_hidden
    h_t = gru_gates(gx, gh, h_prev, h)
    y_t = softsign(h_t @ gen.w_out + gen.b_out)
    return y_t, h_t


def gru_step(y_prev, z, c, h_prev, gen: GeneratorParams):
    """Single autoregressive step: returns (y_t, h_t).

    Accepts (B, dim) tensors or 1-D arrays (promoted to batch of one).
    """
    def prep(x):
        t = ad.astensor(x)
        return ad.reshape(t, (1, -1)) if t.ndim == 1 else t

    y_prev, z, c, h_prev = map(prep, (y_prev, z, c, h_prev))
    lat = ad.concatenate([z, c], axis=1) @ gen.w_latent
    return _gru_core(y_prev, lat, h_prev, gen, h=gen.w_hidden.shape[0])


def generate(seeds, gen: GeneratorParams, n_steps: int = None):
    """Unroll the generator; returns (frames Tensor (B, T, F), mask (B, T)).

    The previous prediction is fed back as input (no ground truth enters);
    y_0 and h_0 are zero. Frames at t >= length are multiplied by zero.
    """
    if isinstance(seeds, LatentSeed):
        seeds = SeedBatch.from_seed(seeds)
    n_steps = MAX_SEQUENCE_LENGTH if n_steps is None else int(n_steps)
    dt = gen.w_frame.dtype
    b = len(seeds)
    h_units = gen.w_hidden.shape[0]
    fd = gen.w_frame.shape[0]

    zc = np.concatenate([seeds.z, seeds.c], axis=1).astype(dt)
    lat = Tensor(zc) @ gen.w_latent

    y = Tensor(np.zeros((b, fd), dtype=dt))
    hid = Tensor(np.zeros((b, h_units), dtype=dt))
    frames = []
    for _ in range(n_steps):
        y, hid = _gru_core(y, lat, hid, gen, h=h_units)
        frames.append(y)

    mask = (np.arange(n_steps)[None, :] < seeds.lengths[:, None])
    out = ad.stack(frames, axis=1) * Tensor(mask[:, :, None].astype(dt))
    return out, mask


# ---------------------------------------------------------------------------
# critic / encoder forward

def conv1d_same(x, w, b):
    """1-D convolution along time with zero 'same' padding.

    im2col layout: the K windows are gathered feature-wise so one gemm of
    (B*T, K*Cin) @ (K*Cin, Cout) covers all taps.
    """
    bsz, t, cin = x.shape
    k, _, cout = w.shape
    pad = k // 2
    zeros = Tensor(np.zeros((bsz, pad, cin), dtype=x.dtype))
    xp = ad.concatenate([zeros, x, zeros], axis=1)
    windows = ad.concatenate([xp[:, i:i + t, :] for i in range(k)], axis=2)
    out = ad.reshape(windows, (bsz * t, k * cin)) @ ad.reshape(w, (k * cin, cout))
    return ad.reshape(out, (bsz, t, cout)) + b


def _promote(x, mask):
    x = ad.astensor(x)
    if x.ndim == 2:
        x = ad.reshape(x, (1,) + x.shape)
    if mask is None:
        mask = np.ones(x.shape[:2], dtype=bool)
    return x, np.asarray(mask, dtype=bool)


def trunk_forward(x, trunk: TrunkParams, mask=None):
    """Shared feature trunk: conv-tanh x2, masked global max pool, dense-tanh.

    `mask` (B, T) marks valid timesteps. Masked steps are zeroed before
    each convolution (so conv receptive fields never leak one sample's
    padding back into its valid features) and excluded from the max pool;
    appending padding of any content therefore leaves the output
    unchanged, and each batch row is featurized as if it were exactly its
    own length.
    """
    x, mask = _promote(x, mask)
    mcol = Tensor(mask[:, :, None].astype(x.dtype))
    h1 = ad.tanh(conv1d_same(x * mcol, trunk.conv1_w, trunk.conv1_b))
    h2 = ad.tanh(conv1d_same(h1 * mcol, trunk.conv2_w, trunk.conv2_b))
    guarded = ad.where(mask[:, :, None], h2, NEG_POOL)
    pooled = ad.tmax(guarded, axis=1)
    return ad.tanh(pooled @ trunk.dense_w + trunk.dense_b)


def _effective_trunk(model: ModelParams) -> TrunkParams:
    if model.spectral is None:
        return model.trunk
    sp = model.spectral
    t = model.trunk
    return TrunkParams(
        conv1_w=sp.normalized("conv1", t.conv1_w), conv1_b=t.conv1_b,
        conv2_w=sp.normalized("conv2", t.conv2_w), conv2_b=t.conv2_b,
        dense_w=sp.normalized("dense", t.dense_w), dense_b=t.dense_b,
    )


def critic_score(x, model: ModelParams, mask=None):
    """Unbounded scalar critic score per sequence; returns Tensor (B,)."""
    x, mask = _promote(ad.astensor(x), mask)
    feat = trunk_forward(x, _effective_trunk(model), mask)
    w = model.heads.critic_w
    if model.spectral is not None:
        w = model.spectral.normalized("critic_head", w)
    score = feat @ w + model.heads.critic_b
    return ad.reshape(score, (score.shape[0],))


def encoder_log_posterior(x, model: ModelParams, mask=None):
    """Log-probabilities over salient categories; Tensor (B, K)."""
    x, mask = _promote(ad.astensor(x), mask)
    feat = trunk_forward(x, _effective_trunk(model), mask)
    logits = feat @ model.heads.encoder_w + model.heads.encoder_b
    return ad.log_softmax(logits, axis=-1)


def encoder_posterior(x, model: ModelParams, mask=None):
    """Posterior over salient categories (rows sum to 1); Tensor (B, K)."""
    return ad.exp(encoder_log_posterior(x, model, mask))


def detached_critic_view(model: ModelParams) -> ModelParams:
    """Same model with critic-path parameters frozen as constants.

    Used for the generator's adversarial term: gradients reach the fake
    frames (hence the generator) but never the critic weights.
    """
    t, h = model.trunk, model.heads
    frozen_trunk = TrunkParams(*[Tensor(p.data) for p in t.tensors()])
    frozen_heads = HeadParams(Tensor(h.critic_w.data), Tensor(h.critic_b.data),
                              h.encoder_w, h.encoder_b)
    return ModelParams(cfg=model.cfg, gen=model.gen, trunk=frozen_trunk,
                       heads=frozen_heads, spectral=model.spectral)
