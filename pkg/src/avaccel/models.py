"""The five acceleration-prediction architectures.

Every model is a :class:`ModelGraph`: an ordered dict of named parameter
blocks plus kind-specific forward/backward wiring over the layer
vocabulary. The kinds:

``baseline``
    dense 11-8-4 with relu, linear 3-way head (features only).
``cnn``
    three conv(3x3, same) - batchnorm - relu - maxpool blocks with 8/16/32
    filters on a 64x64x3 frame, flatten (2048), dense 64, dense 16 (the
    image embedding), linear head (image only).
``cnn_nn``
    the cnn trunk's 16-d embedding concatenated with a dense 11-8-4
    feature branch (20-d fused), dense 16, linear head.
``cnn_lstm``
    the cnn trunk applied to each of 5 consecutive frames (shared
    weights), LSTM 16-32 over the steps, time-distributed dense 32-3;
    output is per-timestep.
``advanced``
    transfer learning: the conv/batchnorm trunk of an already-trained
    ``cnn`` is copied in frozen (its dense layers are copied as trainable
    initialization); per timestep the 16-d image embedding is concatenated
    with the 4-d feature-branch embedding, then LSTM 20-32 and
    time-distributed dense 32-3.

Heads are linear everywhere — predicted accelerations may be negative.

Trained models serialize to the ``AVNM1`` format: magic, then per layer a
u16-length-prefixed UTF-8 name, a u32 tensor count, and each tensor as
u32 rank + u32 extents + float64 elements (all little-endian), with a
trailing CRC32 of the body. Feature-normalization statistics ride along
as a ``__norm__`` pseudo-layer so a model file is self-contained.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ShapeError
from .features import WINDOW, NormStats
from .layers import (
    BatchNormParams,
    Conv2dParams,
    DenseParams,
    LstmParams,
    activation_backward,
    activation_forward,
    batchnorm_backward,
    batchnorm_forward,
    batchnorm_init,
    batchnorm_stat_update,
    conv2d_backward,
    conv2d_forward,
    conv2d_init,
    conv2d_param_grads,
    dense_backward,
    dense_forward,
    dense_init,
    lstm_cell_backward,
    lstm_cell_forward,
    lstm_init,
    maxpool2d_backward,
    maxpool2d_forward,
    serial_fields,
    time_distributed_dense_backward,
    time_distributed_dense_forward,
    trainable_fields,
)
from .tensor import Rng, Tensor, concat, zeros

__all__ = [
    "MODEL_KINDS",
    "ModelGraph",
    "build_baseline",
    "build_cnn",
    "build_cnn_nn",
    "build_cnn_lstm",
    "build_advanced",
    "predict",
    "save_model",
    "load_model",
]

MODEL_KINDS = ("baseline", "cnn", "cnn_nn", "cnn_lstm", "advanced")

IMAGE_SHAPE = (64, 64, 3)
EMBED_DIM = 16
FEATURE_EMBED_DIM = 4
LSTM_HIDDEN = 32

# (layer name, layer kind) sequences; names index the parameter store
_CONV_TRUNK = (
    ("conv1", "conv"), ("bn1", "bn"), ("relu1", "relu"), ("pool1", "pool"),
    ("conv2", "conv"), ("bn2", "bn"), ("relu2", "relu"), ("pool2", "pool"),
    ("conv3", "conv"), ("bn3", "bn"), ("relu3", "relu"), ("pool3", "pool"),
    ("flatten", "flatten"),
    ("fc1", "dense"), ("relu_fc1", "relu"),
    ("fc2", "dense"), ("relu_fc2", "relu"),
)
_FEATURE_BRANCH = (
    ("feat1", "dense"), ("relu_feat1", "relu"),
    ("feat2", "dense"), ("relu_feat2", "relu"),
)
_BASELINE_SEQ = (
    ("fc1", "dense"), ("relu1", "relu"),
    ("fc2", "dense"), ("relu2", "relu"),
    ("head", "dense"),
)
_CNN_SEQ = _CONV_TRUNK + (("head", "dense"),)
_FUSE_SEQ = (("fuse1", "dense"), ("relu_fuse1", "relu"), ("head", "dense"))

_FROZEN_TRUNK = frozenset(("conv1", "bn1", "conv2", "bn2", "conv3", "bn3"))


class ModelGraph:
    """A named parameter store plus the wiring for one model kind."""

    def __init__(self, kind: str, layers: dict, frozen=frozenset(),
                 norm_stats: NormStats = None):
        if kind not in MODEL_KINDS:
            raise ShapeError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.layers = dict(layers)  # insertion order is the serialization order
        self.frozen = frozenset(frozen)
        self.norm_stats = norm_stats

    # -- structure ---------------------------------------------------------

    @property
    def windowed(self) -> bool:
        return self.kind in ("cnn_lstm", "advanced")

    @property
    def wants_features(self) -> bool:
        return self.kind in ("baseline", "cnn_nn", "advanced")

    @property
    def wants_images(self) -> bool:
        return self.kind != "baseline"

    def param_count(self) -> int:
        return sum(getattr(p, f).size for p in self.layers.values()
                   for f in trainable_fields(p))

    def trainable_param_count(self) -> int:
        return sum(getattr(p, f).size for name, p in self.layers.items()
                   for f in trainable_fields(p) if name not in self.frozen)

    def has_trainable_batchnorm(self) -> bool:
        return any(isinstance(p, BatchNormParams) and name not in self.frozen
                   for name, p in self.layers.items())

    def has_batchnorm(self) -> bool:
        return any(isinstance(p, BatchNormParams) for p in self.layers.values())

    # -- forward / backward ------------------------------------------------

    def forward(self, inputs, mode: str = "eval"):
        """Run the model; ``inputs`` is a tuple matching the kind.

        Returns ``(prediction, ctx)`` where ctx feeds :meth:`backward` and
        :meth:`apply_stat_updates`.
        """
        if isinstance(inputs, Tensor):
            inputs = (inputs,)
        fwd = _FORWARD[self.kind]
        return fwd(self, inputs, mode)

    def backward(self, grad_out: Tensor, ctx):
        """Gradients of every trainable parameter, keyed layer -> field."""
        return _BACKWARD[self.kind](self, grad_out, ctx)

    def apply_stat_updates(self, ctx) -> None:
        """Fold the batch statistics recorded by a train-mode forward into
        the batchnorm running stats (call after the optimizer step)."""
        for name, cache in ctx["bn"]:
            batchnorm_stat_update(self.layers[name], cache)

    # -- evaluation shortcuts ---------------------------------------------

    def embed_frames(self, images: Tensor) -> Tensor:
        """Eval-mode image embeddings [n,16] for a batch of single frames.

        Lets windowed models score overlapping windows without re-running
        the trunk once per timestep.
        """
        if self.kind == "baseline":
            raise ShapeError("baseline model has no image trunk")
        out, _ = _run_seq(self, _CONV_TRUNK, images, "eval")
        return out

    def head_forward(self, embeds: Tensor, features: Tensor = None) -> Tensor:
        """Eval-mode windowed head on precomputed frame embeddings.

        ``embeds`` is [b,t,16]; ``features`` is [b,t,11] (advanced only).
        Returns [b,t,3]; bit-identical to the full forward pass because the
        per-step wiring is the same code path.
        """
        if not self.windowed:
            raise ShapeError(f"{self.kind} is not a windowed model")
        steps = []
        for t in range(embeds.shape[1]):
            e = embeds[:, t]
            if self.kind == "advanced":
                f, _ = _run_seq(self, _FEATURE_BRANCH, features[:, t], "eval")
                e = concat(e, f, axis=1)
            steps.append(e)
        seq, _ = _lstm_forward(self, steps)
        out, _ = time_distributed_dense_forward(seq, self.layers["tdd"])
        return out


# ---------------------------------------------------------------------------
# sequential engine


def _run_seq(model: ModelGraph, entries, x: Tensor, mode: str, bn_log=None):
    caches = []
    for name, kind in entries:
        if kind == "dense":
            x, c = dense_forward(x, model.layers[name])
        elif kind == "relu":
            x, c = activation_forward("relu", x)
        elif kind == "conv":
            x, c = conv2d_forward(x, model.layers[name])
        elif kind == "pool":
            x, c = maxpool2d_forward(x)
        elif kind == "bn":
            bn_mode = "eval" if name in model.frozen else mode
            x, c = batchnorm_forward(x, model.layers[name], bn_mode)
            if bn_mode == "train" and bn_log is not None:
                bn_log.append((name, c))
        elif kind == "flatten":
            c = x.shape
            x = x.reshape(x.shape[0], int(np.prod(x.shape[1:])))
        else:  # pragma: no cover - sequences are module constants
            raise ShapeError(f"unknown layer kind {kind!r}")
        caches.append(c)
    return x, caches


def _acc(grads: dict, name: str, new: dict) -> None:
    slot = grads.setdefault(name, {})
    for field, g in new.items():
        slot[field] = g if field not in slot else Tensor._wrap(slot[field].data + g.data)


def _back_seq(model: ModelGraph, entries, caches, grad: Tensor, grads: dict,
              need_input_grad: bool = False):
    """Backward through one sequence, accumulating into ``grads``.

    Stops early once every remaining upstream layer is frozen or
    parameter-free (unless the input gradient itself is needed).
    """
    trainable_pos = [i for i, (name, kind) in enumerate(entries)
                     if kind in ("dense", "conv", "bn") and name not in model.frozen]
    lowest = trainable_pos[0] if trainable_pos else None
    for i in range(len(entries) - 1, -1, -1):
        name, kind = entries[i]
        if not need_input_grad and (lowest is None or i < lowest):
            return None
        if kind == "conv" and i == lowest and not need_input_grad:
            # bottom-most trainable layer: its input gradient goes nowhere
            _acc(grads, name, conv2d_param_grads(grad, caches[i], model.layers[name]))
            return None
        if kind == "dense":
            grad, g = dense_backward(grad, caches[i], model.layers[name])
            _acc(grads, name, g)
        elif kind == "relu":
            grad = activation_backward("relu", grad, caches[i])
        elif kind == "conv":
            grad, g = conv2d_backward(grad, caches[i], model.layers[name])
            if name not in model.frozen:
                _acc(grads, name, g)
        elif kind == "pool":
            grad = maxpool2d_backward(grad, caches[i])
        elif kind == "bn":
            grad, g = batchnorm_backward(grad, caches[i], model.layers[name])
            if name not in model.frozen:
                _acc(grads, name, g)
        elif kind == "flatten":
            grad = grad.reshape(caches[i])
    return grad


def _lstm_forward(model: ModelGraph, step_inputs):
    """Unroll the LSTM over per-step inputs; returns ([b,t,hid], caches)."""
    p = model.layers["lstm"]
    b = step_inputs[0].shape[0]
    hid = p.u_i.shape[0]
    h = zeros((b, hid))
    c = zeros((b, hid))
    hs = []
    caches = []
    for x in step_inputs:
        h, c, cache = lstm_cell_forward(x, h, c, p)
        hs.append(h.data)
        caches.append(cache)
    return Tensor._wrap(np.stack(hs, axis=1)), caches


def _lstm_backward(model: ModelGraph, grad_seq: Tensor, caches, grads: dict):
    """Backprop through the unrolled LSTM; returns per-step input grads."""
    p = model.layers["lstm"]
    b, t, hid = grad_seq.shape
    gh = zeros((b, hid))
    gc = zeros((b, hid))
    step_grads = [None] * t
    for step in range(t - 1, -1, -1):
        gh_total = Tensor._wrap(grad_seq.data[:, step, :] + gh.data)
        gx, gh, gc, g = lstm_cell_backward(gh_total, gc, caches[step], p)
        _acc(grads, "lstm", g)
        step_grads[step] = gx
    return step_grads


# ---------------------------------------------------------------------------
# per-kind forward/backward


def _check_images(x: Tensor, windowed: bool):
    want = (WINDOW,) + IMAGE_SHAPE if windowed else IMAGE_SHAPE
    if x.ndim != len(want) + 1 or x.shape[1:] != want:
        raise ShapeError(f"expected images [b,{','.join(map(str, want))}], got {x.shape}")


def _check_features(x: Tensor, windowed: bool):
    want = (WINDOW, 11) if windowed else (11,)
    if x.ndim != len(want) + 1 or x.shape[1:] != want:
        raise ShapeError(f"expected features [b,{','.join(map(str, want))}], got {x.shape}")


def _arity(inputs, n: int, kind: str):
    if len(inputs) != n:
        raise ShapeError(f"{kind} takes {n} input(s), got {len(inputs)}")


def _fwd_baseline(model, inputs, mode):
    _arity(inputs, 1, "baseline")
    _check_features(inputs[0], False)
    out, caches = _run_seq(model, _BASELINE_SEQ, inputs[0], mode)
    return out, {"bn": [], "caches": caches}


def _bwd_baseline(model, grad, ctx):
    grads = {}
    _back_seq(model, _BASELINE_SEQ, ctx["caches"], grad, grads)
    return grads


def _fwd_cnn(model, inputs, mode):
    _arity(inputs, 1, "cnn")
    _check_images(inputs[0], False)
    bn_log = []
    out, caches = _run_seq(model, _CNN_SEQ, inputs[0], mode, bn_log)
    return out, {"bn": bn_log, "caches": caches}


def _bwd_cnn(model, grad, ctx):
    grads = {}
    _back_seq(model, _CNN_SEQ, ctx["caches"], grad, grads)
    return grads


def _fwd_cnn_nn(model, inputs, mode):
    _arity(inputs, 2, "cnn_nn")
    images, feats = inputs
    _check_images(images, False)
    _check_features(feats, False)
    bn_log = []
    e_img, img_caches = _run_seq(model, _CONV_TRUNK, images, mode, bn_log)
    e_feat, feat_caches = _run_seq(model, _FEATURE_BRANCH, feats, mode)
    fused = concat(e_img, e_feat, axis=1)
    out, fuse_caches = _run_seq(model, _FUSE_SEQ, fused, mode)
    return out, {"bn": bn_log, "img": img_caches, "feat": feat_caches,
                 "fuse": fuse_caches}


def _bwd_cnn_nn(model, grad, ctx):
    grads = {}
    gz = _back_seq(model, _FUSE_SEQ, ctx["fuse"], grad, grads, need_input_grad=True)
    _back_seq(model, _CONV_TRUNK, ctx["img"], gz[:, :EMBED_DIM], grads)
    _back_seq(model, _FEATURE_BRANCH, ctx["feat"], gz[:, EMBED_DIM:], grads)
    return grads


def _stack_step_grads(step_grads, width: int) -> Tensor:
    """[t grads of shape [b,k]] -> [b*t, k], undoing the window flattening."""
    arr = np.stack([g.data for g in step_grads], axis=1)
    return Tensor._wrap(arr.reshape(arr.shape[0] * arr.shape[1], width))


def _fwd_cnn_lstm(model, inputs, mode):
    _arity(inputs, 1, "cnn_lstm")
    images = inputs[0]
    _check_images(images, True)
    b = images.shape[0]
    bn_log = []
    # the trunk is time-distributed: one pass over the flattened [b*t] frames
    flat = images.reshape(b * WINDOW, *IMAGE_SHAPE)
    embeds, trunk_caches = _run_seq(model, _CONV_TRUNK, flat, mode, bn_log)
    seq_in = embeds.reshape(b, WINDOW, EMBED_DIM)
    seq, lstm_caches = _lstm_forward(model, [seq_in[:, t] for t in range(WINDOW)])
    out, tdd_cache = time_distributed_dense_forward(seq, model.layers["tdd"])
    return out, {"bn": bn_log, "trunk": trunk_caches, "lstm": lstm_caches,
                 "tdd": tdd_cache}


def _bwd_cnn_lstm(model, grad, ctx):
    grads = {}
    gseq, g = time_distributed_dense_backward(grad, ctx["tdd"], model.layers["tdd"])
    _acc(grads, "tdd", g)
    step_grads = _lstm_backward(model, gseq, ctx["lstm"], grads)
    ge = _stack_step_grads(step_grads, EMBED_DIM)
    _back_seq(model, _CONV_TRUNK, ctx["trunk"], ge, grads)
    return grads


def _fwd_advanced(model, inputs, mode):
    _arity(inputs, 2, "advanced")
    images, feats = inputs
    _check_images(images, True)
    _check_features(feats, True)
    b = images.shape[0]
    bn_log = []
    e_img, trunk_caches = _run_seq(
        model, _CONV_TRUNK, images.reshape(b * WINDOW, *IMAGE_SHAPE), mode, bn_log)
    e_feat, feat_caches = _run_seq(
        model, _FEATURE_BRANCH, feats.reshape(b * WINDOW, feats.shape[2]), mode)
    fused = concat(e_img, e_feat, axis=1).reshape(b, WINDOW,
                                                  EMBED_DIM + FEATURE_EMBED_DIM)
    seq, lstm_caches = _lstm_forward(model, [fused[:, t] for t in range(WINDOW)])
    out, tdd_cache = time_distributed_dense_forward(seq, model.layers["tdd"])
    return out, {"bn": bn_log, "trunk": trunk_caches, "feat": feat_caches,
                 "lstm": lstm_caches, "tdd": tdd_cache}


def _bwd_advanced(model, grad, ctx):
    grads = {}
    gseq, g = time_distributed_dense_backward(grad, ctx["tdd"], model.layers["tdd"])
    _acc(grads, "tdd", g)
    step_grads = _lstm_backward(model, gseq, ctx["lstm"], grads)
    gz = _stack_step_grads(step_grads, EMBED_DIM + FEATURE_EMBED_DIM)
    _back_seq(model, _CONV_TRUNK, ctx["trunk"], gz[:, :EMBED_DIM], grads)
    _back_seq(model, _FEATURE_BRANCH, ctx["feat"], gz[:, EMBED_DIM:], grads)
    return grads


_FORWARD = {"baseline": _fwd_baseline, "cnn": _fwd_cnn, "cnn_nn": _fwd_cnn_nn,
            "cnn_lstm": _fwd_cnn_lstm, "advanced": _fwd_advanced}
_BACKWARD = {"baseline": _bwd_baseline, "cnn": _bwd_cnn, "cnn_nn": _bwd_cnn_nn,
             "cnn_lstm": _bwd_cnn_lstm, "advanced": _bwd_advanced}


# ---------------------------------------------------------------------------
# builders


def _init_trunk(rng: Rng) -> dict:
    flat = (IMAGE_SHAPE[0] // 8) * (IMAGE_SHAPE[1] // 8) * 32  # three 2x pools
    return {
        "conv1": conv2d_init(rng, 3, 3, IMAGE_SHAPE[2], 8),
        "bn1": batchnorm_init(8),
        "conv2": conv2d_init(rng, 3, 3, 8, 16),
        "bn2": batchnorm_init(16),
        "conv3": conv2d_init(rng, 3, 3, 16, 32),
        "bn3": batchnorm_init(32),
        "fc1": dense_init(rng, flat, 64),
        "fc2": dense_init(rng, 64, EMBED_DIM),
    }


def _init_feature_branch(rng: Rng) -> dict:
    return {"feat1": dense_init(rng, 11, 8), "feat2": dense_init(rng, 8, FEATURE_EMBED_DIM)}


def build_baseline(rng: Rng) -> ModelGraph:
    layers = {
        "fc1": dense_init(rng, 11, 8),
        "fc2": dense_init(rng, 8, 4),
        "head": dense_init(rng, 4, 3),
    }
    return ModelGraph("baseline", layers)


def build_cnn(rng: Rng) -> ModelGraph:
    layers = _init_trunk(rng)
    layers["head"] = dense_init(rng, EMBED_DIM, 3)
    return ModelGraph("cnn", layers)


def build_cnn_nn(rng: Rng) -> ModelGraph:
    layers = _init_trunk(rng)
    layers.update(_init_feature_branch(rng))
    layers["fuse1"] = dense_init(rng, EMBED_DIM + FEATURE_EMBED_DIM, 16)
    layers["head"] = dense_init(rng, 16, 3)
    return ModelGraph("cnn_nn", layers)


def build_cnn_lstm(rng: Rng) -> ModelGraph:
    layers = _init_trunk(rng)
    layers["lstm"] = lstm_init(rng, EMBED_DIM, LSTM_HIDDEN)
    layers["tdd"] = dense_init(rng, LSTM_HIDDEN, 3)
    return ModelGraph("cnn_lstm", layers)


def build_advanced(pretrained: ModelGraph, rng: Rng) -> ModelGraph:
    """Transfer-learning fusion model on top of a trained ``cnn``.

    The conv/batchnorm trunk is taken over frozen; the trunk's dense
    layers (fc1, fc2) start from the pretrained weights but stay
    trainable. Fresh parameter holders are created so later training of
    either model never writes into the other.
    """
    if not isinstance(pretrained, ModelGraph) or pretrained.kind != "cnn":
        kind = getattr(pretrained, "kind", type(pretrained).__name__)
        raise DataError(f"advanced model needs a trained cnn base, got {kind!r}")
    src = pretrained.layers
    layers = {}
    for name in ("conv1", "bn1", "conv2", "bn2", "conv3", "bn3"):
        p = src[name]
        if isinstance(p, Conv2dParams):
            layers[name] = Conv2dParams(kernels=p.kernels, bias=p.bias,
                                        stride=p.stride, padding=p.padding)
        else:
            layers[name] = BatchNormParams(gamma=p.gamma, beta=p.beta,
                                           running_mean=p.running_mean,
                                           running_var=p.running_var,
                                           momentum=p.momentum, epsilon=p.epsilon)
    layers["fc1"] = DenseParams(weights=src["fc1"].weights, bias=src["fc1"].bias)
    layers["fc2"] = DenseParams(weights=src["fc2"].weights, bias=src["fc2"].bias)
    layers.update(_init_feature_branch(rng))
    layers["lstm"] = lstm_init(rng, EMBED_DIM + FEATURE_EMBED_DIM, LSTM_HIDDEN)
    layers["tdd"] = dense_init(rng, LSTM_HIDDEN, 3)
    return ModelGraph("advanced", layers, frozen=_FROZEN_TRUNK,
                      norm_stats=pretrained.norm_stats)


# ---------------------------------------------------------------------------
# prediction


def _batched(x: Tensor, batch_ndim: int):
    if x.ndim == batch_ndim - 1:
        return Tensor._wrap(x.data[None, ...]), True
    if x.ndim == batch_ndim:
        return x, False
    raise ShapeError(f"sample has rank {x.ndim}, expected {batch_ndim - 1} "
                     f"(single) or {batch_ndim} (batch)")


def predict(model: ModelGraph, sample) -> Tensor:
    """Eval-mode prediction on raw inputs.

    Feature inputs are normalized with the model's stored stats when
    present. Accepts a single sample or a batch; windowed models return
    the last timestep — the current-frame prediction.
    """
    if isinstance(sample, Tensor):
        sample = (sample,)
    image_rank = 5 if model.windowed else 4
    feat_rank = 3 if model.windowed else 2
    parts = []
    single = False
    if model.kind == "baseline":
        _arity(sample, 1, model.kind)
        x, single = _batched(sample[0], feat_rank)
        parts = [x]
    elif model.kind in ("cnn", "cnn_lstm"):
        _arity(sample, 1, model.kind)
        x, single = _batched(sample[0], image_rank)
        parts = [x]
    else:
        _arity(sample, 2, model.kind)
        img, single = _batched(sample[0], image_rank)
        feat, s2 = _batched(sample[1], feat_rank)
        if single != s2:
            raise ShapeError("image and feature inputs disagree on batching")
        parts = [img, feat]
    if model.norm_stats is not None and model.wants_features:
        from .features import apply_norm

        raw = parts[-1]
        flat = raw.data.reshape(-1, raw.shape[-1])
        normed = apply_norm(Tensor._wrap(flat.copy()), model.norm_stats)
        parts[-1] = normed.reshape(raw.shape)
    out, _ = model.forward(tuple(parts), mode="eval")
    if model.windowed:
        out = out[:, WINDOW - 1, :]
    return out[0] if single else out


# ---------------------------------------------------------------------------
# serialization (AVNM1)

MODEL_MAGIC = b"AVNM1"


def _params_for(name: str):
    """Fresh parameter container class + field order for a layer name."""
    if name.startswith("conv"):
        return Conv2dParams
    if name.startswith("bn"):
        return BatchNormParams
    if name == "lstm":
        return LstmParams
    return DenseParams


def save_model(model: ModelGraph, path) -> int:
    """Write the AVNM1 file; returns bytes written. Round-trip bit-exact."""
    body = bytearray()

    def emit(name: str, tensors):
        raw = name.encode("utf-8")
        body.extend(struct.pack("<H", len(raw)))
        body.extend(raw)
        tensors = list(tensors)
        body.extend(struct.pack("<I", len(tensors)))
        for t in tensors:
            body.extend(struct.pack("<I", t.ndim))
            body.extend(struct.pack(f"<{t.ndim}I", *t.shape))
            body.extend(t.data.astype("<f8", copy=False).tobytes())

    for name, p in model.layers.items():
        emit(name, (getattr(p, f) for f in serial_fields(p)))
    if model.norm_stats is not None:
        emit("__norm__", (model.norm_stats.mean, model.norm_stats.std))
    blob = MODEL_MAGIC + bytes(body) + struct.pack("<I", zlib.crc32(bytes(body)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return len(blob)


def _infer_kind(names) -> str:
    names = set(names)
    if "lstm" in names:
        return "advanced" if "feat1" in names else "cnn_lstm"
    if "feat1" in names:
        return "cnn_nn"
    if "conv1" in names:
        return "cnn"
    return "baseline"


def load_model(path) -> ModelGraph:
    """Read an AVNM1 file back into a ready-to-run ModelGraph."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    raw = path.read_bytes()
    if raw[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f"bad magic in {path}, not an AVNM1 model file")
    if len(raw) < len(MODEL_MAGIC) + 4:
        raise FormatError("truncated model file")
    body = raw[len(MODEL_MAGIC):-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("model file CRC mismatch")
    pos = 0
    loaded = {}
    order = []

    def take(n, what):
        nonlocal pos
        if pos + n > len(body):
            raise FormatError(f"truncated model file while reading {what}")
        out = body[pos:pos + n]
        pos += n
        return out

    while pos < len(body):
        (nlen,) = struct.unpack("<H", take(2, "layer name length"))
        name = take(nlen, "layer name").decode("utf-8")
        (count,) = struct.unpack("<I", take(4, "tensor count"))
        tensors = []
        for i in range(count):
            (rank,) = struct.unpack("<I", take(4, f"{name} tensor {i} rank"))
            shape = struct.unpack(f"<{rank}I", take(4 * rank, f"{name} tensor {i} shape"))
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(take(8 * n, f"{name} tensor {i} data"),
                                 dtype="<f8").reshape(shape)
            tensors.append(Tensor._wrap(np.ascontiguousarray(data.astype(np.float64))))
        loaded[name] = tensors
        order.append(name)

    norm = None
    if "__norm__" in loaded:
        mean, std = loaded.pop("__norm__")
        order.remove("__norm__")
        norm = NormStats(mean=mean, std=std)

    kind = _infer_kind(order)
    template = _blank(kind)
    if list(template.layers) != order:
        raise FormatError(f"layer set {order} does not match a {kind} model")
    for name, p in template.layers.items():
        fields = serial_fields(p)
        tensors = loaded[name]
        if len(tensors) != len(fields):
            raise FormatError(f"layer {name}: expected {len(fields)} tensors, "
                              f"got {len(tensors)}")
        for f, t in zip(fields, tensors):
            if t.shape != getattr(p, f).shape:
                raise FormatError(f"layer {name}.{f}: shape {t.shape} does not "
                                  f"match architecture {getattr(p, f).shape}")
            setattr(p, f, t)
    template.norm_stats = norm
    return template


def _blank(kind: str) -> ModelGraph:
    rng = Rng(0)
    if kind == "advanced":
        return build_advanced(build_cnn(rng), rng)
    builder = {"baseline": build_baseline, "cnn": build_cnn,
               "cnn_nn": build_cnn_nn, "cnn_lstm": build_cnn_lstm}[kind]
    return builder(rng)
