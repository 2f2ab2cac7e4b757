"""Shared test oracles and fixtures builders.

The gradient oracles stay independent of the library's backward pass:
they only call forward evaluations.
"""
import numpy as np


def skeleton_text(frames, body_ids=None):
    """Render frames (list of list of (25,3) arrays) as NTU .skeleton text."""
    lines = [str(len(frames))]
    for bodies in frames:
        lines.append(str(len(bodies)))
        for b, joints in enumerate(bodies):
            bid = body_ids[b] if body_ids else 72057594037931101 + b
            lines.append(f"{bid} 0 1 1 1 1 0 0.1 -0.2 2")
            lines.append("25")
            for j in joints:
                lines.append(f"{j[0]} {j[1]} {j[2]} 100 200 300 400 1 0 0 0 2")
    return "\n".join(lines) + "\n"


def finite_difference(f, x, eps=1e-5):
    """Central-difference gradient of scalar f at ndarray x (64-bit)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def max_rel_error(analytic, numeric, floor=1e-3):
    """Worst-case elementwise relative error with an absolute floor.

    The floor keeps near-zero gradient entries from inflating the ratio
    while still catching sign or scale errors on anything meaningful.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_grads(f, params, eps=1e-5, tol=1e-4):
    """Assert analytic grads of scalar-valued f(params) match central FD.

    `f` maps a list of Tensors to a scalar Tensor; `params` are float64
    leaf tensors. Returns the worst relative error over all parameters.
    """
    from skelgan import autodiff as ad

    out = f(params)
    grads = ad.grad(out, params)
    worst = 0.0
    for p, g in zip(params, grads):
        def scalar_fn(x, p=p):
            old = p.data.copy()
            p.data[...] = x
            val = float(f(params).data)
            p.data[...] = old
            return val

        fd = finite_difference(scalar_fn, p.data, eps=eps)
        err = max_rel_error(g.data, fd)
        worst = max(worst, err)
        assert err < tol, f"gradient mismatch (rel err {err:.3e}) for shape {p.shape}"
    return worst
