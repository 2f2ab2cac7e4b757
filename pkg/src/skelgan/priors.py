"""Latent seed priors: categorical salient code, uniform noise, length.

Every generated sequence is driven by one global seed: a one-hot salient
code over `n_categories`, a noise vector uniform on [0, 1]^noise_dim, and
an integer duration drawn from a shifted, scaled Beta prior capped at the
maximum sequence length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MAX_SEQUENCE_LENGTH = 150


@dataclass(frozen=True)
class LatentConfig:
    noise_dim: int = 64
    n_categories: int = 60

    def __post_init__(self):
        if self.noise_dim < 1 or self.n_categories < 2:
            raise ConfigError("noise_dim must be >= 1 and n_categories >= 2")


@dataclass(frozen=True)
class LengthPrior:
    """Duration prior: min(offset + round(scale * Beta(alpha, beta)), cap).

    The Beta variate lives on [0, 1]; `scale` stretches it so the support
    spans [offset, offset + scale] before capping.
    """

    offset: int = 20
    alpha: float = 12.5
    beta: float = 2.5
    scale: float = 130.0
    cap: int = MAX_SEQUENCE_LENGTH

    def __post_init__(self):
        if self.offset < 1:
            raise ConfigError("length offset must be >= 1")
        if self.cap < self.offset:
            raise ConfigError("length cap must be >= offset")
        if self.alpha <= 0 or self.beta <= 0 or self.scale <= 0:
            raise ConfigError("alpha, beta and scale must be positive")


@dataclass(frozen=True)
class LatentSeed:
    """One generation seed: salient one-hot `c`, noise `z`, length `l`."""

    c: np.ndarray
    z: np.ndarray
    l: int


@dataclass
class SeedBatch:
    """Stacked seeds: c (B, K) one-hot rows, z (B, Zd), lengths (B,)."""

    c: np.ndarray
    z: np.ndarray
    lengths: np.ndarray

    def __len__(self):
        return self.c.shape[0]

    def __getitem__(self, i) -> LatentSeed:
        return LatentSeed(self.c[i], self.z[i], int(self.lengths[i]))

    @classmethod
    def from_seed(cls, seed: LatentSeed) -> "SeedBatch":
        return cls(seed.c[None, :], seed.z[None, :],
                   np.array([seed.l], dtype=np.int64))


def sample_salient(rng: np.random.Generator, n_categories: int = 60) -> np.ndarray:
    """Uniform one-hot draw over the salient categories."""
    c = np.zeros(n_categories, dtype=np.float64)
    c[int(rng.integers(n_categories))] = 1.0
    return c


def sample_noise(rng: np.random.Generator, noise_dim: int = 64) -> np.ndarray:
    """I.i.d. uniform [0, 1] noise vector."""
    return rng.random(noise_dim)


def sample_length(rng: np.random.Generator, prior: LengthPrior = LengthPrior()) -> int:
    """One duration draw; always in [offset, cap]."""
    b = rng.beta(prior.alpha, prior.beta)
    return min(prior.offset + int(math.floor(prior.scale * b + 0.5)), prior.cap)


def sample_seed(rng: np.random.Generator,
                latent: LatentConfig = LatentConfig(),
                length: LengthPrior = LengthPrior()) -> LatentSeed:
    return LatentSeed(
        c=sample_salient(rng, latent.n_categories),
        z=sample_noise(rng, latent.noise_dim),
        l=sample_length(rng, length),
    )


def sample_seed_batch(rng: np.random.Generator, n: int,
                      latent: LatentConfig = LatentConfig(),
                      length: LengthPrior = LengthPrior()) -> SeedBatch:
    """Vectorized batch of seeds (same draw semantics as the scalar samplers)."""
    cats = rng.integers(latent.n_categories, size=n)
    c = np.zeros((n, latent.n_categories), dtype=np.float64)
    c[np.arange(n), cats] = 1.0
    z = rng.random((n, latent.noise_dim))
    b = rng.beta(length.alpha, length.beta, size=n)
    lengths = np.minimum(length.offset + np.floor(length.scale * b + 0.5).astype(np.int64),
                         length.cap)
    return SeedBatch(c=c, z=z, lengths=lengths)


def salient_entropy(n_categories: int = 60) -> float:
    """Entropy (nats) of the uniform categorical prior: ln K."""
    return math.log(n_categories)
