"""Shared finite-difference oracle used across the test suite.

Central differences with step 1e-5; gradients must match backward() with
relative error below 1e-4 (L2 norm ratio).
"""

import numpy as np

from qreg import tensor as T

H = 1e-5
RTOL = 1e-4


def fd_grad(f, arrays, index, h=H):
    """Central-difference gradient of scalar f(*arrays) wrt arrays[index]."""
    base = [a.copy() for a in arrays]
    target = base[index]
    g = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = target[idx]
        target[idx] = orig + h
        up = f(*base)
        target[idx] = orig - h
        down = f(*base)
        target[idx] = orig
        g[idx] = (up - down) / (2.0 * h)
    return g


def rel_err(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def check_grads(build_node, forward_np, arrays, rng, rtol=RTOL):
    """Compare backward() against finite differences for one op instance.

    build_node(*nodes) -> output Node; forward_np(*arrays) -> output array.
    Both must compute the same function. The scalar objective is
    sum(output * R) for a fixed random weighting R.
    """
    nodes = [T.parameter(a) for a in arrays]
    out = build_node(*nodes)
    weights = rng.standard_normal(out.shape)
    np.testing.assert_allclose(out.value, forward_np(*arrays), rtol=1e-12, atol=1e-12)
    loss = T.reduce_sum(T.mul(out, T.constant(weights)))
    T.backward(loss)

    def scalar(*arrs):
        return float((forward_np(*arrs) * weights).sum())

    for i, node in enumerate(nodes):
        expected = fd_grad(scalar, list(arrays), i)
        err = rel_err(node.grad, expected)
        assert err < rtol, f"operand {i}: rel err {err:.3e}"


def away_from(v, points, margin=0.05):
    """Shift entries of v that sit within margin of any kink point."""
    v = v.copy()
    for p in points:
        close = np.abs(v - p) < margin
        v[close] = p + margin * 2.0 * np.where(v[close] >= p, 1.0, -1.0)
    return v


def uniform(rng, shape, lo=-2.0, hi=2.0):
    return rng.uniform(lo, hi, size=shape)


def conv_reference(x, w, stride, padding):
    """Direct nested-loop cross-correlation, the independent value oracle."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, f, ho, wo))
    for b in range(n):
        for o in range(f):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[b, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[b, o, i, j] = (patch * w[o]).sum()
    return out
