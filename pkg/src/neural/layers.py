"""
Layers with hand-written backward passes

Sequences are batched as (B, T, D) arrays of equal length T. Parameters live in
plain dicts of float64 arrays so the optimizer and serializer can treat every
model the same way.
"""

from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

Params = Dict[str, np.ndarray]


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def subparams(params: Params, prefix: str) -> Params:
    """View of the entries under "<prefix>." with the prefix stripped"""
    cut = len(prefix) + 1
    return {name[cut:]: value for name, value in params.items() if name.startswith(prefix + ".")}


def prefixed(grads: Params, prefix: str) -> Params:
    return {f"{prefix}.{name}": value for name, value in grads.items()}


# LSTM


def init_lstm(rng: np.random.Generator, input_dim: int, hidden: int) -> Params:
    """Gate order i, f, o, g; forget-gate bias starts at 1"""
    bound = 1.0 / np.sqrt(hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return {
        "Wx": rng.uniform(-bound, bound, size=(input_dim, 4 * hidden)),
        "Wh": rng.uniform(-bound, bound, size=(hidden, 4 * hidden)),
        "b": b,
    }


class LstmCache(NamedTuple):
    x: np.ndarray
    h: np.ndarray  # B x (T+1) x H, h[:, 0] is the initial state
    c: np.ndarray  # B x (T+1) x H
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


def lstm_forward(params: Params, x: np.ndarray) -> Tuple[np.ndarray, LstmCache]:
    """
    Run an LSTM left to right over x (B, T, D)

    Returns:
        Tuple[np.ndarray, LstmCache]: Hidden states (B, T, H) and the backward cache
    """
    B, T, _ = x.shape
    H = params["Wh"].shape[0]
    h = np.zeros((B, T + 1, H))
    c = np.zeros((B, T + 1, H))
    gates = {name: np.zeros((B, T, H)) for name in "ifog"}
    tanh_c = np.zeros((B, T, H))

    for t in range(T):
        z = x[:, t] @ params["Wx"] + h[:, t] @ params["Wh"] + params["b"]
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        o = sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c[:, t + 1] = f * c[:, t] + i * g
        tanh_c[:, t] = np.tanh(c[:, t + 1])
        h[:, t + 1] = o * tanh_c[:, t]
        gates["i"][:, t], gates["f"][:, t], gates["o"][:, t], gates["g"][:, t] = i, f, o, g

    cache = LstmCache(x, h, c, gates["i"], gates["f"], gates["o"], gates["g"], tanh_c)
    return h[:, 1:], cache


def lstm_backward(params: Params, cache: LstmCache, grad_out: np.ndarray) -> Tuple[Params, np.ndarray]:
    """
    Backpropagate through lstm_forward

    Args:
        params: The parameters used in the forward pass
        cache: Forward cache
        grad_out: Gradient w.r.t. the hidden states (B, T, H)

    Returns:
        Tuple[Params, np.ndarray]: Parameter gradients and the input gradient (B, T, D)
    """
    B, T, _ = cache.x.shape
    H = params["Wh"].shape[0]
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    dx = np.zeros_like(cache.x)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))

    for t in range(T - 1, -1, -1):
        i, f, o, g = cache.i[:, t], cache.f[:, t], cache.o[:, t], cache.g[:, t]
        tanh_c = cache.tanh_c[:, t]
        dh = grad_out[:, t] + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * cache.c[:, t]
        dc_next = dc * f

        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g ** 2)], axis=1
        )
        grads["Wx"] += cache.x[:, t].T @ dz
        grads["Wh"] += cache.h[:, t].T @ dz
        grads["b"] += dz.sum(axis=0)
        dx[:, t] = dz @ params["Wx"].T
        dh_next = dz @ params["Wh"].T

    return grads, dx


class BiLstmCache(NamedTuple):
    forward: LstmCache
    backward: LstmCache


def bilstm_forward(params: Params, x: np.ndarray) -> Tuple[np.ndarray, BiLstmCache]:
    """Concatenate a left-to-right and a right-to-left LSTM: (B, T, 2H)"""
    h_fwd, cache_fwd = lstm_forward(subparams(params, "fwd"), x)
    h_bwd, cache_bwd = lstm_forward(subparams(params, "bwd"), x[:, ::-1])
    return np.concatenate([h_fwd, h_bwd[:, ::-1]], axis=2), BiLstmCache(cache_fwd, cache_bwd)


def bilstm_backward(params: Params, cache: BiLstmCache, grad_out: np.ndarray) -> Tuple[Params, np.ndarray]:
    H = grad_out.shape[2] // 2
    g_fwd, dx_fwd = lstm_backward(subparams(params, "fwd"), cache.forward, grad_out[:, :, :H])
    g_bwd, dx_bwd = lstm_backward(subparams(params, "bwd"), cache.backward, grad_out[:, ::-1, H:])
    grads = {**prefixed(g_fwd, "fwd"), **prefixed(g_bwd, "bwd")}
    return grads, dx_fwd + dx_bwd[:, ::-1]


# Dropout


def dropout_mask(rng: Optional[np.random.Generator], shape: tuple, rate: float) -> Optional[np.ndarray]:
    """Inverted-dropout mask, or None outside training"""
    if rng is None or rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def apply_mask(x: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return x if mask is None else x * mask


# Convolution


def init_conv(rng: np.random.Generator, input_dim: int, kernel: int, filters: int) -> Params:
    bound = 1.0 / np.sqrt(kernel * input_dim)
    return {
        "W": rng.uniform(-bound, bound, size=(kernel * input_dim, filters)),
        "b": np.zeros(filters),
    }


class ConvCache(NamedTuple):
    windows: np.ndarray  # B x S x (k*D)
    pre: np.ndarray      # B x S x F
    argmax: np.ndarray   # B x F
    pad: int
    input_shape: tuple


def conv1d_maxpool(params: Params, x: np.ndarray) -> Tuple[np.ndarray, ConvCache]:
    """
    Valid 1-D convolution over time, ReLU, then max over time per filter

    Sequences shorter than the kernel are padded on the left with zero rows.

    Args:
        params: {"W": (k*D, F), "b": (F,)}
        x: Inputs (B, T, D)

    Returns:
        Tuple[np.ndarray, ConvCache]: Pooled features (B, F) and the backward cache
    """
    B, T, D = x.shape
    kernel = params["W"].shape[0] // D
    pad = max(0, kernel - T)
    if pad:
        x = np.concatenate([np.zeros((B, pad, D)), x], axis=1)
    steps = x.shape[1] - kernel + 1

    windows = np.stack([x[:, s:s + kernel].reshape(B, kernel * D) for s in range(steps)], axis=1)
    pre = windows @ params["W"] + params["b"]
    activated = np.maximum(pre, 0.0)
    argmax = activated.argmax(axis=1)
    pooled = np.take_along_axis(activated, argmax[:, None, :], axis=1)[:, 0]
    return pooled, ConvCache(windows, pre, argmax, pad, (B, T, D))


def conv1d_maxpool_backward(params: Params, cache: ConvCache, grad_out: np.ndarray) -> Tuple[Params, np.ndarray]:
    B, T, D = cache.input_shape
    kernel = params["W"].shape[0] // D
    steps = cache.windows.shape[1]

    d_pre = np.zeros_like(cache.pre)
    rows = np.arange(B)[:, None]
    cols = np.arange(d_pre.shape[2])[None, :]
    picked = cache.pre[rows, cache.argmax, cols]
    d_pre[rows, cache.argmax, cols] = grad_out * (picked > 0)

    grads = {
        "W": np.einsum("bsk,bsf->kf", cache.windows, d_pre),
        "b": d_pre.sum(axis=(0, 1)),
    }
    d_windows = d_pre @ params["W"].T
    dx_padded = np.zeros((B, T + cache.pad, D))
    for s in range(steps):
        dx_padded[:, s:s + kernel] += d_windows[:, s].reshape(B, kernel, D)
    return grads, dx_padded[:, cache.pad:]


# Heads


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-row cross-entropy and its gradient w.r.t. the logits

    Args:
        logits: (..., C)
        targets: Integer class ids with the leading shape of logits

    Returns:
        Tuple[np.ndarray, np.ndarray]: Losses (...) and gradients (..., C)
    """
    logp = log_softmax(logits)
    losses = -np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    grad = np.exp(logp)
    np.put_along_axis(grad, targets[..., None], np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
    return losses, grad
