"""Forward/backward pairs for the network's building blocks.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache and returns the input gradient(s)
plus a dict of parameter gradients. Arrays are float64, row-major, one row
per token/timestep.
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-8
STD_FLOOR = 1e-6
_GELU_C = np.sqrt(2.0 / np.pi)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form: overflow-free for any finite z
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---------------------------------------------------------------------------
# dense


def linear_forward(x, W, b):
    return x @ W + b, (x, W)


def linear_backward(dy, cache):
    x, W = cache
    x2 = np.atleast_2d(x)
    dy2 = np.atleast_2d(dy)
    return dy @ W.T, {"W": x2.T @ dy2, "b": dy2.sum(axis=0)}


def layer_norm_forward(x, g, b, eps: float = LN_EPS):
    d = x.shape[-1]
    xc = x - x.sum(axis=-1, keepdims=True) / d
    sigma = np.sqrt((xc * xc).sum(axis=-1, keepdims=True) / d + eps)
    xhat = xc / sigma
    return xhat * g + b, (xhat, sigma, g)


def layer_norm_backward(dy, cache):
    xhat, sigma, g = cache
    d = xhat.shape[-1]
    dxhat = dy * g
    dx = (dxhat - dxhat.sum(axis=-1, keepdims=True) / d - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / d) / sigma
    return dx, {"g": (dy * xhat).sum(axis=0), "b": dy.sum(axis=0)}


def gelu_forward(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x * x * x))
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_backward(dy, cache):
    x, t = cache
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)


def feed_forward_forward(x, W1, b1, W2, b2):
    h, c1 = linear_forward(x, W1, b1)
    a, cg = gelu_forward(h)
    y, c2 = linear_forward(a, W2, b2)
    return y, (c1, cg, c2)


def feed_forward_backward(dy, cache):
    c1, cg, c2 = cache
    da, g2 = linear_backward(dy, c2)
    dh = gelu_backward(da, cg)
    dx, g1 = linear_backward(dh, c1)
    return dx, {"W1": g1["W"], "b1": g1["b"], "W2": g2["W"], "b2": g2["b"]}


# ---------------------------------------------------------------------------
# attention


def attention_forward(xq, xkv, Wq, Wk, Wv, Wo):
    """Single-head scaled dot-product attention of ``xq`` rows over ``xkv`` rows."""
    q = xq @ Wq
    k = xkv @ Wk
    v = xkv @ Wv
    scale = 1.0 / np.sqrt(Wq.shape[1])
    attn = softmax((q @ k.T) * scale, axis=-1)
    o = attn @ v
    return o @ Wo, (xq, xkv, Wq, Wk, Wv, Wo, q, k, v, attn, o, scale)


def attention_backward(dy, cache):
    xq, xkv, Wq, Wk, Wv, Wo, q, k, v, attn, o, scale = cache
    dWo = o.T @ dy
    do = dy @ Wo.T
    dattn = do @ v.T
    dv = attn.T @ do
    ds = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * scale
    dq = ds @ k
    dk = ds.T @ q
    grads = {"Wq": xq.T @ dq, "Wk": xkv.T @ dk, "Wv": xkv.T @ dv, "Wo": dWo}
    dxq = dq @ Wq.T
    dxkv = dk @ Wk.T + dv @ Wv.T
    return dxq, dxkv, grads


# ---------------------------------------------------------------------------
# recurrent


def lstm_layer_forward(X, Wx, Wh, b):
    """One LSTM layer over a sequence ``X`` (n x d_in); gate order i, f, g, o."""
    n = X.shape[0]
    H = Wh.shape[0]
    pre_x = X @ Wx + b
    hs = np.zeros((n + 1, H))
    cs = np.zeros((n + 1, H))
    gates = np.zeros((n, 4 * H))
    tanh_c = np.zeros((n, H))
    for t in range(n):
        z = pre_x[t] + hs[t] @ Wh
        act = sigmoid(z)
        act[2 * H : 3 * H] = np.tanh(z[2 * H : 3 * H])
        gates[t] = act
        cs[t + 1] = act[H : 2 * H] * cs[t] + act[:H] * act[2 * H : 3 * H]
        tanh_c[t] = np.tanh(cs[t + 1])
        hs[t + 1] = act[3 * H :] * tanh_c[t]
    return hs[1:], (X, Wx, Wh, hs, cs, gates, tanh_c)


def lstm_layer_backward(dH, cache):
    """Backpropagation through time; ``dH`` is the gradient for every output step."""
    X, Wx, Wh, hs, cs, gates, tanh_c = cache
    n = X.shape[0]
    H = Wh.shape[0]
    dZ = np.zeros((n, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(n - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H : 2 * H]
        g = gates[t, 2 * H : 3 * H]
        o = gates[t, 3 * H :]
        dh = dH[t] + dh_next
        tc = tanh_c[t]
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dZ[t, :H] = dc * g * i * (1.0 - i)
        dZ[t, H : 2 * H] = dc * cs[t] * f * (1.0 - f)
        dZ[t, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dZ[t, 3 * H :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dZ[t] @ Wh.T
    grads = {"Wx": X.T @ dZ, "Wh": hs[:-1].T @ dZ, "b": dZ.sum(axis=0)}
    return dZ @ Wx.T, grads


# ---------------------------------------------------------------------------
# piecewise linear encoding


def ple_components(x, edges):
    """Per-feature bin activations ``clamp((x - b_{t-1}) / (b_t - b_{t-1}), 0, 1)``.

    ``x`` has shape (U,), ``edges`` (U, T+1). A zero-width bin is a step
    that switches on at its edge. Returns ``(components (U, T), d components / dx)``.
    """
    lo = edges[:, :-1]
    hi = edges[:, 1:]
    width = hi - lo
    xc = x[:, None]
    # subnormal widths would overflow 1/width; they are steps too
    degenerate = width < np.finfo(np.float64).tiny
    safe = np.where(degenerate, 1.0, width)
    with np.errstate(over="ignore"):
        ratio = (xc - lo) / safe
    comp = np.clip(ratio, 0.0, 1.0)
    comp = np.where(degenerate, (xc >= hi).astype(np.float64), comp)
    deriv = np.where(~degenerate & (ratio > 0.0) & (ratio < 1.0), 1.0 / safe, 0.0)
    return comp, deriv


def ple_forward(x, edges, W, b):
    comp, deriv = ple_components(x, edges)
    flat = comp.reshape(-1)
    return flat @ W + b, (flat, deriv, W)


def ple_backward(dy, cache):
    flat, deriv, W = cache
    dflat = W @ dy
    dx = (dflat.reshape(deriv.shape) * deriv).sum(axis=1)
    return dx, {"W": np.outer(flat, dy), "b": dy.copy()}


# ---------------------------------------------------------------------------
# attentive statistics pooling


def attentive_pool_forward(frames, W, b, v):
    """Attention-weighted mean and standard deviation over frames (F x D)."""
    if frames.shape[0] == 0:
        raise ValueError("attentive pooling needs at least one frame")
    e = np.tanh(frames @ W + b)
    weights = softmax(e @ v)
    mu = weights @ frames
    dev = frames - mu
    var = weights @ (dev * dev)
    floored = var <= STD_FLOOR**2
    sigma = np.sqrt(np.where(floored, STD_FLOOR**2, var))
    return np.concatenate([mu, sigma]), (frames, W, v, e, weights, dev, sigma, floored)


def attentive_pool_backward(dy, cache):
    frames, W, v, e, weights, dev, sigma, floored = cache
    d = frames.shape[1]
    dmu = dy[:d]
    dvar = np.where(floored, 0.0, dy[d:] / (2.0 * sigma))
    dframes = weights[:, None] * (dmu[None, :] + 2.0 * dev * dvar[None, :])
    dweights = frames @ dmu + (dev * dev) @ dvar
    ds = weights * (dweights - np.dot(weights, dweights))
    dv = e.T @ ds
    dpre = np.outer(ds, v) * (1.0 - e * e)
    dframes += dpre @ W.T
    return dframes, {"W": frames.T @ dpre, "b": dpre.sum(axis=0), "v": dv}
