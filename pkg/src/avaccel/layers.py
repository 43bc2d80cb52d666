"""Neural-network layers with explicit forward and backward passes.

Each layer is a pair of pure functions: ``*_forward`` returns the output
plus an opaque cache of whatever the backward pass needs, ``*_backward``
consumes that cache exactly once and returns the input gradient together
with a dict of parameter gradients keyed by field name. Nothing here keeps
state between calls; batch-norm running statistics are returned inside the
cache for the caller to apply, never written in place.

Conventions, pinned for reproducibility:

* convolution is cross-correlation (no kernel flip), channels-last
* same-padding splits an odd total pad as floor on the top/left side
* max-pool ties resolve to the lowest linear (row-major) index
* weight init is uniform in +-sqrt(6 / (fan_in + fan_out)); biases start
  at zero except the LSTM forget gate, which starts at 1
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import Rng, Tensor, full, ones, zeros

__all__ = [
    "DenseParams",
    "Conv2dParams",
    "BatchNormParams",
    "LstmParams",
    "dense_init",
    "dense_forward",
    "dense_backward",
    "activation_forward",
    "activation_backward",
    "conv2d_init",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool2d_forward",
    "maxpool2d_backward",
    "batchnorm_init",
    "batchnorm_forward",
    "batchnorm_backward",
    "batchnorm_stat_update",
    "lstm_init",
    "lstm_cell_forward",
    "lstm_cell_backward",
    "time_distributed_dense_forward",
    "time_distributed_dense_backward",
    "trainable_fields",
    "serial_fields",
]


@dataclass
class DenseParams:
    weights: Tensor  # [in, out]
    bias: Tensor  # [out]


@dataclass
class Conv2dParams:
    kernels: Tensor  # [kh, kw, in_channels, filters]
    bias: Tensor  # [filters]
    stride: int = 1
    padding: str = "same"  # or "valid"


@dataclass
class BatchNormParams:
    gamma: Tensor  # [channels]
    beta: Tensor  # [channels]
    running_mean: Tensor  # [channels]
    running_var: Tensor  # [channels]
    momentum: float = 0.9
    epsilon: float = 1e-5


@dataclass
class LstmParams:
    # input weights [in, hidden], recurrent weights [hidden, hidden],
    # biases [hidden], one set per gate (input, forget, output, candidate)
    w_i: Tensor
    w_f: Tensor
    w_o: Tensor
    w_g: Tensor
    u_i: Tensor
    u_f: Tensor
    u_o: Tensor
    u_g: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_g: Tensor


_TRAINABLE = {
    DenseParams: ("weights", "bias"),
    Conv2dParams: ("kernels", "bias"),
    BatchNormParams: ("gamma", "beta"),
    LstmParams: (
        "w_i", "w_f", "w_o", "w_g",
        "u_i", "u_f", "u_o", "u_g",
        "b_i", "b_f", "b_o", "b_g",
    ),
}

_SERIAL = dict(_TRAINABLE)
_SERIAL[BatchNormParams] = ("gamma", "beta", "running_mean", "running_var")


def trainable_fields(params) -> tuple:
    """Field names the optimizer is allowed to update, in a fixed order."""
    return _TRAINABLE[type(params)]


def serial_fields(params) -> tuple:
    """Field names persisted to model files (includes running statistics)."""
    return _SERIAL[type(params)]


def _glorot(rng: Rng, shape, fan_in: int, fan_out: int) -> Tensor:
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(shape, -limit, limit)


# ---------------------------------------------------------------------------
# dense


def dense_init(rng: Rng, n_in: int, n_out: int) -> DenseParams:
    return DenseParams(weights=_glorot(rng, (n_in, n_out), n_in, n_out), bias=zeros((n_out,)))


def dense_forward(x: Tensor, p: DenseParams):
    """y[b,out] = x[b,in] @ W[in,out] + bias."""
    if x.ndim != 2 or x.shape[1] != p.weights.shape[0]:
        raise ShapeError(f"dense expects [b,{p.weights.shape[0]}], got {x.shape}")
    y = x.data @ p.weights.data + p.bias.data
    return Tensor._wrap(y), x.data


def dense_backward(grad_out: Tensor, cache, p: DenseParams):
    x = cache
    if grad_out.shape != (x.shape[0], p.weights.shape[1]):
        raise ShapeError(f"dense backward got grad {grad_out.shape} for input {x.shape}")
    g = grad_out.data
    grads = {
        "weights": Tensor._wrap(x.T @ g),
        "bias": Tensor._wrap(g.sum(axis=0)),
    }
    return Tensor._wrap(g @ p.weights.data.T), grads


# ---------------------------------------------------------------------------
# activations


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation_forward(kind: str, x: Tensor):
    if kind == "relu":
        y = np.maximum(x.data, 0.0)
        cache = ("relu", x.data)
    elif kind == "tanh":
        y = np.tanh(x.data)
        cache = ("tanh", y)
    elif kind == "sigmoid":
        y = _sigmoid(x.data)
        cache = ("sigmoid", y)
    else:
        raise ShapeError(f"unknown activation {kind!r}")
    return Tensor._wrap(y), cache


def activation_backward(kind: str, grad_out: Tensor, cache):
    ckind, saved = cache
    if ckind != kind:
        raise ShapeError(f"cache is for {ckind!r}, not {kind!r}")
    g = grad_out.data
    if kind == "relu":
        gx = g * (saved > 0.0)
    elif kind == "tanh":
        gx = g * (1.0 - saved * saved)
    else:
        gx = g * saved * (1.0 - saved)
    return Tensor._wrap(gx)


# ---------------------------------------------------------------------------
# conv2d (cross-correlation, channels-last)


def conv2d_init(rng: Rng, kh: int, kw: int, in_channels: int, filters: int,
                stride: int = 1, padding: str = "same") -> Conv2dParams:
    fan_in = kh * kw * in_channels
    fan_out = kh * kw * filters
    kernels = _glorot(rng, (kh, kw, in_channels, filters), fan_in, fan_out)
    return Conv2dParams(kernels=kernels, bias=zeros((filters,)), stride=stride, padding=padding)


def _conv_geometry(h: int, w: int, kh: int, kw: int, stride: int, padding: str):
    if padding == "same":
        oh = -(-h // stride)
        ow = -(-w // stride)
        ph = max((oh - 1) * stride + kh - h, 0)
        pw = max((ow - 1) * stride + kw - w, 0)
        pads = (ph // 2, ph - ph // 2, pw // 2, pw - pw // 2)
    elif padding == "valid":
        if kh > h or kw > w:
            raise ShapeError(f"kernel {kh}x{kw} larger than input {h}x{w}")
        oh = (h - kh) // stride + 1
        ow = (w - kw) // stride + 1
        pads = (0, 0, 0, 0)
    else:
        raise ShapeError(f"unknown padding {padding!r}")
    return oh, ow, pads


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    # windows[b, oh, ow, kh, kw, c] without copying, then one reshape copy
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # [b, oh, ow, c, kh, kw]
    win = win.transpose(0, 1, 2, 4, 5, 3)
    b = xp.shape[0]
    return win.reshape(b * oh * ow, kh * kw * xp.shape[3])


def conv2d_forward(x: Tensor, p: Conv2dParams):
    """x[b,h,w,c] -> y[b,oh,ow,filters]; cross-correlation with p.kernels."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects [b,h,w,c], got {x.shape}")
    kh, kw, cin, f = p.kernels.shape
    b, h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"input has {c} channels, kernels expect {cin}")
    oh, ow, (pt, pb, pl, pr) = _conv_geometry(h, w, kh, kw, p.stride, p.padding)
    if kh > h + pt + pb or kw > w + pl + pr:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input")
    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = _im2col(xp, kh, kw, p.stride, oh, ow)
    y = cols @ p.kernels.data.reshape(kh * kw * cin, f) + p.bias.data
    cache = (cols, xp.shape, (pt, pb, pl, pr), (b, h, w, c), (oh, ow))
    return Tensor._wrap(y.reshape(b, oh, ow, f)), cache


def conv2d_param_grads(grad_out: Tensor, cache, p: Conv2dParams) -> dict:
    """Kernel/bias gradients only (when the input gradient is not needed)."""
    cols, _, _, (b, _, _, _), (oh, ow) = cache
    kh, kw, cin, f = p.kernels.shape
    if grad_out.shape != (b, oh, ow, f):
        raise ShapeError(f"conv2d backward expected grad {(b, oh, ow, f)}, got {grad_out.shape}")
    g2d = grad_out.data.reshape(b * oh * ow, f)
    return {
        "kernels": Tensor._wrap((cols.T @ g2d).reshape(kh, kw, cin, f)),
        "bias": Tensor._wrap(g2d.sum(axis=0)),
    }


def conv2d_backward(grad_out: Tensor, cache, p: Conv2dParams):
    _, xp_shape, (pt, pb, pl, pr), (b, h, w, c), (oh, ow) = cache
    kh, kw, cin, f = p.kernels.shape
    grads = conv2d_param_grads(grad_out, cache, p)
    if p.stride == 1:
        # input grad is the correlation of the (fully padded) output grad
        # with the spatially flipped, channel-swapped kernel
        gp = np.pad(grad_out.data, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
        hp, wp = xp_shape[1], xp_shape[2]
        gcols = _im2col(gp, kh, kw, 1, hp, wp)
        w_flip = np.ascontiguousarray(
            p.kernels.data[::-1, ::-1].transpose(0, 1, 3, 2)).reshape(kh * kw * f, cin)
        gxp = (gcols @ w_flip).reshape(b, hp, wp, cin)
    else:
        g2d = grad_out.data.reshape(b * oh * ow, f)
        gcols = (g2d @ p.kernels.data.reshape(kh * kw * cin, f).T).reshape(
            b, oh, ow, kh, kw, cin)
        gxp = np.zeros(xp_shape, dtype=np.float64)
        s = p.stride
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + s * oh:s, j:j + s * ow:s, :] += gcols[:, :, :, i, j, :]
    gx = gxp[:, pt:pt + h, pl:pl + w, :]
    return Tensor._wrap(gx), grads


# ---------------------------------------------------------------------------
# max pooling, fixed 2x2 window with stride 2


def maxpool2d_forward(x: Tensor):
    """x[b,h,w,c] -> y[b,h/2,w/2,c]; h and w must be even."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool expects [b,h,w,c], got {x.shape}")
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool needs even extents, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    # window elements laid out in row-major order so argmax picks the
    # lowest linear index on ties
    win = x.data.reshape(b, h2, 2, w2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, h2, w2, c, 4)
    idx = win.argmax(axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return Tensor._wrap(y), (idx, (b, h, w, c))


def maxpool2d_backward(grad_out: Tensor, cache):
    idx, (b, h, w, c) = cache
    h2, w2 = h // 2, w // 2
    if grad_out.shape != (b, h2, w2, c):
        raise ShapeError(f"maxpool backward expected grad {(b, h2, w2, c)}, got {grad_out.shape}")
    gwin = np.zeros((b, h2, w2, c, 4), dtype=np.float64)
    np.put_along_axis(gwin, idx[..., None], grad_out.data[..., None], axis=-1)
    gx = gwin.reshape(b, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, h, w, c)
    return Tensor._wrap(gx)


# ---------------------------------------------------------------------------
# batch normalization over the trailing channel axis


def batchnorm_init(channels: int, momentum: float = 0.9, epsilon: float = 1e-5) -> BatchNormParams:
    return BatchNormParams(
        gamma=ones((channels,)),
        beta=zeros((channels,)),
        running_mean=zeros((channels,)),
        running_var=ones((channels,)),
        momentum=momentum,
        epsilon=epsilon,
    )


def batchnorm_forward(x: Tensor, p: BatchNormParams, mode: str):
    """Normalize per channel; train mode uses batch stats and reports
    updated running statistics in the cache (the caller applies them)."""
    if x.ndim < 2 or x.shape[-1] != p.gamma.shape[0]:
        raise ShapeError(f"batchnorm expects trailing channel {p.gamma.shape[0]}, got {x.shape}")
    if mode not in ("train", "eval"):
        raise ShapeError(f"unknown mode {mode!r}")
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        if x.shape[0] < 2:
            raise ShapeError("batchnorm train mode needs batch size >= 2")
        mu = x.data.mean(axis=axes)
        xc = x.data - mu
        var = (xc * xc).mean(axis=axes)
        inv = 1.0 / np.sqrt(var + p.epsilon)
        xhat = xc * inv
        cache = ("train", xc, inv, xhat, mu, var)
    else:
        inv = 1.0 / np.sqrt(p.running_var.data + p.epsilon)
        xhat = (x.data - p.running_mean.data) * inv
        cache = ("eval", None, inv, xhat, None, None)
    y = p.gamma.data * xhat + p.beta.data
    return Tensor._wrap(y), cache


def batchnorm_backward(grad_out: Tensor, cache, p: BatchNormParams):
    mode, xc, inv, xhat, _, _ = cache
    if grad_out.shape != xhat.shape:
        raise ShapeError(f"batchnorm backward grad {grad_out.shape} vs cache {xhat.shape}")
    g = grad_out.data
    axes = tuple(range(g.ndim - 1))
    grads = {
        "gamma": Tensor._wrap((g * xhat).sum(axis=axes)),
        "beta": Tensor._wrap(g.sum(axis=axes)),
    }
    if mode == "eval":
        return Tensor._wrap(g * p.gamma.data * inv), grads
    n = g.size // g.shape[-1]
    dxhat = g * p.gamma.data
    dvar = (dxhat * xc).sum(axis=axes) * (-0.5) * inv ** 3
    dmu = -(dxhat.sum(axis=axes)) * inv + dvar * (-2.0 / n) * xc.sum(axis=axes)
    gx = dxhat * inv + dvar * (2.0 / n) * xc + dmu / n
    return Tensor._wrap(gx), grads


def batchnorm_stat_update(p: BatchNormParams, cache) -> None:
    """Fold one train-mode forward's batch statistics into the running stats.

    Applied by the trainer after the optimizer step; when the same layer ran
    several times in one batch (shared trunks), updates fold in call order.
    """
    mode, _, _, _, mu, var = cache
    if mode == "train":
        m = p.momentum
        p.running_mean = Tensor._wrap(m * p.running_mean.data + (1.0 - m) * mu)
        p.running_var = Tensor._wrap(m * p.running_var.data + (1.0 - m) * var)


# ---------------------------------------------------------------------------
# LSTM cell


def lstm_init(rng: Rng, n_in: int, n_hidden: int) -> LstmParams:
    kw = {}
    for gate in ("i", "f", "o", "g"):
        kw[f"w_{gate}"] = _glorot(rng, (n_in, n_hidden), n_in, n_hidden)
    for gate in ("i", "f", "o", "g"):
        kw[f"u_{gate}"] = _glorot(rng, (n_hidden, n_hidden), n_hidden, n_hidden)
    for gate in ("i", "o", "g"):
        kw[f"b_{gate}"] = zeros((n_hidden,))
    kw["b_f"] = full((n_hidden,), 1.0)  # open forget gate at init
    return LstmParams(**kw)


def lstm_cell_forward(x: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams):
    """One step: gates i,f,o sigmoid, candidate g tanh;
    c = f*c_prev + i*g, h = o*tanh(c)."""
    n_in, n_hidden = p.w_i.shape
    if x.ndim != 2 or x.shape[1] != n_in:
        raise ShapeError(f"lstm expects x[b,{n_in}], got {x.shape}")
    if h_prev.shape != (x.shape[0], n_hidden) or c_prev.shape != (x.shape[0], n_hidden):
        raise ShapeError("lstm state shapes inconsistent with input batch")
    xi = x.data
    hp = h_prev.data
    i = _sigmoid(xi @ p.w_i.data + hp @ p.u_i.data + p.b_i.data)
    f = _sigmoid(xi @ p.w_f.data + hp @ p.u_f.data + p.b_f.data)
    o = _sigmoid(xi @ p.w_o.data + hp @ p.u_o.data + p.b_o.data)
    g = np.tanh(xi @ p.w_g.data + hp @ p.u_g.data + p.b_g.data)
    c = f * c_prev.data + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = (xi, hp, c_prev.data, i, f, o, g, tc)
    return Tensor._wrap(h), Tensor._wrap(c), cache


def lstm_cell_backward(grad_h: Tensor, grad_c: Tensor, cache, p: LstmParams):
    """Gradients for one step given dL/dh_t and dL/dc_t (from the future)."""
    xi, hp, cp, i, f, o, g, tc = cache
    gh = grad_h.data
    gc = grad_c.data + gh * o * (1.0 - tc * tc)
    d_o = gh * tc * o * (1.0 - o)
    d_f = gc * cp * f * (1.0 - f)
    d_i = gc * g * i * (1.0 - i)
    d_g = gc * i * (1.0 - g * g)
    grads = {}
    gx = np.zeros_like(xi)
    ghp = np.zeros_like(hp)
    for name, d in (("i", d_i), ("f", d_f), ("o", d_o), ("g", d_g)):
        grads[f"w_{name}"] = Tensor._wrap(xi.T @ d)
        grads[f"u_{name}"] = Tensor._wrap(hp.T @ d)
        grads[f"b_{name}"] = Tensor._wrap(d.sum(axis=0))
        gx += d @ getattr(p, f"w_{name}").data.T
        ghp += d @ getattr(p, f"u_{name}").data.T
    gc_prev = gc * f
    return Tensor._wrap(gx), Tensor._wrap(ghp), Tensor._wrap(gc_prev), grads


# ---------------------------------------------------------------------------
# time-distributed dense


def time_distributed_dense_forward(seq: Tensor, p: DenseParams):
    """Apply the same dense layer at every timestep of seq[b,t,d].

    Deliberately a per-step loop over dense_forward so the output is
    bit-identical to applying the layer step by step.
    """
    if seq.ndim != 3:
        raise ShapeError(f"expected seq[b,t,d], got {seq.shape}")
    b, t, d = seq.shape
    outs = []
    caches = []
    for step in range(t):
        y, c = dense_forward(Tensor._wrap(np.ascontiguousarray(seq.data[:, step, :]), check=False), p)
        outs.append(y.data)
        caches.append(c)
    y = np.stack(outs, axis=1)
    return Tensor._wrap(y), (caches, (b, t, d))


def time_distributed_dense_backward(grad_out: Tensor, cache, p: DenseParams):
    caches, (b, t, d) = cache
    if grad_out.ndim != 3 or grad_out.shape[:2] != (b, t):
        raise ShapeError(f"expected grad[b,t,out], got {grad_out.shape}")
    gw = np.zeros_like(p.weights.data)
    gb = np.zeros_like(p.bias.data)
    gseq = np.empty((b, t, d), dtype=np.float64)
    for step in range(t):
        gstep = Tensor._wrap(np.ascontiguousarray(grad_out.data[:, step, :]), check=False)
        gx, grads = dense_backward(gstep, caches[step], p)
        gseq[:, step, :] = gx.data
        gw += grads["weights"].data
        gb += grads["bias"].data
    return Tensor._wrap(gseq), {"weights": Tensor._wrap(gw), "bias": Tensor._wrap(gb)}
