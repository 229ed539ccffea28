"""Shared test utilities: small random networks and finite-difference oracles."""

import numpy as np

from curveloft.field import MlpParams, forward_jets


def random_net(width=8, depth=3, beta=30.0, skip=True, seed=0,
               weight_scale=0.6) -> MlpParams:
    rng = np.random.default_rng(seed)
    dims = [3] + [width] * depth + [1]
    skip_layer = depth // 2 if (skip and depth >= 2) else None
    layers = []
    for li in range(depth + 1):
        d_in, d_out = dims[li], dims[li + 1]
        if li == skip_layer:
            d_in += 3
        layers.append((rng.normal(0, weight_scale, (d_out, d_in)),
                       rng.normal(0, 0.3, d_out)))
    return MlpParams(layers, width, depth, beta, skip_layer)


def affine_net(w_row, bias) -> MlpParams:
    """Single affine layer f(x) = w.x + b; no activation is applied."""
    w = np.asarray(w_row, dtype=np.float64).reshape(1, 3)
    b = np.asarray([bias], dtype=np.float64)
    return MlpParams([(w, b)], hidden_width=3, hidden_depth=0, beta=100.0,
                     skip_layer=None)


def fd_gradient(params, x, eps=1e-4):
    """Central finite differences of field values."""
    g = np.zeros(3)
    for a in range(3):
        xp, xm = x.copy(), x.copy()
        xp[a] += eps
        xm[a] -= eps
        v, _, _ = forward_jets(params, np.array([xp, xm]), order=0)
        g[a] = (v[0] - v[1]) / (2 * eps)
    return g


def fd_hessian(params, x, eps=1e-4):
    """Central finite differences of forward-jet gradients, symmetrized."""
    h = np.zeros((3, 3))
    for a in range(3):
        xp, xm = x.copy(), x.copy()
        xp[a] += eps
        xm[a] -= eps
        _, g, _ = forward_jets(params, np.array([xp, xm]), order=1)
        h[:, a] = (g[0] - g[1]) / (2 * eps)
    return 0.5 * (h + h.T)


def fd_param_grads(params, loss_fn, eps=1e-5):
    """Per-parameter central differences of loss_fn(params), flattened."""
    out = []
    for w, b in params.layers:
        for arr in (w, b):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = arr[idx]
                arr[idx] = old + eps
                lp = loss_fn(params)
                arr[idx] = old - eps
                lm = loss_fn(params)
                arr[idx] = old
                out.append((lp - lm) / (2 * eps))
    return np.asarray(out)


def flatten_grads(grads) -> np.ndarray:
    return np.concatenate([np.concatenate([dw.ravel(), db.ravel()])
                           for dw, db in grads.layers])


def grad_rel_errors(fd: np.ndarray, an: np.ndarray) -> np.ndarray:
    """Per-entry relative error, floored at 1e-3 of the gradient scale.

    Entries whose true gradient is tiny relative to the rest of the vector
    are compared at the vector scale; the finite-difference quotient cannot
    resolve them below roundoff otherwise.
    """
    scale = max(np.abs(fd).max(), np.abs(an).max(), 1e-12)
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(an)), 1e-3 * scale)
    return np.abs(fd - an) / denom


def random_rotation(seed=0) -> np.ndarray:
    """Uniform random rotation matrix from a normalized quaternion."""
    rng = np.random.default_rng(seed)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
