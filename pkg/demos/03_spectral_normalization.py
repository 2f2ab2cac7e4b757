"""Spectral normalization by power iteration, checked against SVD.

The critic stays K-Lipschitz by dividing each weight matrix by its
largest singular value; the estimate comes from persistent power
iteration. This script shows convergence behavior, including a matrix
whose top two singular values nearly coincide (the slow case).
"""
import numpy as np

from skelgan import nets

rng = np.random.default_rng(3)


def normalize(w, n_iters, converge_tol=None):
    u0 = rng.standard_normal(nets._as_matrix(w).shape[0])
    state = nets.SpectralState(u=u0 / np.linalg.norm(u0),
                               v=np.zeros(nets._as_matrix(w).shape[1]))
    wn, _ = nets.spectral_normalize(w, state, n_iters=n_iters,
                                    converge_tol=converge_tol)
    return np.linalg.svd(nets._as_matrix(wn), compute_uv=False)[0]


w = rng.standard_normal((64, 64))
print("random 64x64, top singular value:",
      round(float(np.linalg.svd(w, compute_uv=False)[0]), 4))
for iters in (1, 5, 50):
    print(f"  after {iters:3d} fixed iterations: normalized top sv = "
          f"{normalize(w, iters):.6f}")
print(f"  converged (>=50 iters):          normalized top sv = "
      f"{normalize(w, 50, converge_tol=1e-9):.6f}")

# near-degenerate spectrum: sigma_1 / sigma_2 = 1.001 / 0.975
u, _, vt = np.linalg.svd(rng.standard_normal((32, 32)))
hard = u @ np.diag(np.linspace(1.001, 0.2, 32)) @ vt
print("\nnear-degenerate spectrum:")
for iters in (50, 500):
    print(f"  {iters:4d} fixed iterations: {normalize(hard, iters):.6f}")
print(f"  converged:            {normalize(hard, 50, converge_tol=1e-9):.6f}")

# conv kernels are flattened to (out, in * taps) before the iteration
conv_w = rng.standard_normal((5, 75, 64))
print("\nconv kernel (5 taps, 75 -> 64):",
      "normalized top sv =", f"{normalize(conv_w, 50, converge_tol=1e-9):.6f}")
