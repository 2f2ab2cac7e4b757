"""Sample the latent seed priors and look at their statistics.

The generator is driven by a global seed per sequence: a one-hot salient
code (60 categories by default), a 64-dim uniform noise vector, and an
integer duration from a shifted/scaled Beta prior capped at 150 steps.
"""
import numpy as np

from skelgan import priors

rng = np.random.default_rng(0)

seed = priors.sample_seed(rng)
print("one seed:")
print("  salient category:", int(np.argmax(seed.c)))
print("  noise (first 6):", np.round(seed.z[:6], 3))
print("  length:", seed.l)

batch = priors.sample_seed_batch(rng, 10_000)
print("\n10k seeds:")
print("  category frequency min/max:",
      int(batch.c.sum(axis=0).min()), int(batch.c.sum(axis=0).max()))
print("  noise mean (should be ~0.5):", round(float(batch.z.mean()), 4))
print(f"  lengths: min={batch.lengths.min()} max={batch.lengths.max()} "
      f"mean={batch.lengths.mean():.1f}")
print("  salient prior entropy (nats):", round(priors.salient_entropy(60), 4))

hist, edges = np.histogram(batch.lengths, bins=13, range=(20, 150))
print("\nlength histogram (20..150):")
for count, lo, hi in zip(hist, edges[:-1], edges[1:]):
    print(f"  [{lo:5.1f}, {hi:5.1f}) {'#' * (count // 40)}")
