"""MAE loss, optimizers, and the deterministic training loop.

The loss is mean absolute error over every output component,
``sum |y - y_hat| / n``; its subgradient is ``sign(y_hat - y) / n`` with 0
at exact ties. Optimizers are plain SGD and bias-corrected Adam. ``fit``
shuffles with the seeded generator, steps batch by batch, and reports the
full-pass train/validation MAE (eval mode) once per epoch, so two runs
with the same seed, config, and data produce bit-identical histories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NonFiniteError, NumericError, ShapeError
from .layers import trainable_fields
from .tensor import Rng, Tensor

__all__ = ["LossReport", "TrainConfig", "OptimizerState", "mae_loss", "mae_grad",
           "optimizer_step", "fit", "evaluate"]


def mae_loss(pred: Tensor, target: Tensor) -> float:
    """Mean absolute error over all elements."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ShapeError("cannot take MAE of empty tensors")
    return float(np.mean(np.abs(pred.data - target.data)))


def mae_grad(pred: Tensor, target: Tensor) -> Tensor:
    """Subgradient of mae_loss in pred: sign(pred - target)/n, 0 at ties."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ShapeError("cannot take MAE of empty tensors")
    return Tensor._wrap(np.sign(pred.data - target.data) / pred.size)


@dataclass
class LossReport:
    """Train/validation MAE after one epoch (1-based)."""

    epoch: int
    train_mae: float
    val_mae: float

    def __post_init__(self):
        for name in ("train_mae", "val_mae"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise NumericError(f"{name} must be finite and >= 0, got {v}",
                                   epoch=self.epoch)


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 16
    seed: int = 0
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


class OptimizerState:
    """SGD or Adam state over a model's trainable parameters."""

    def __init__(self, cfg: TrainConfig):
        self.kind = cfg.optimizer
        self.learning_rate = cfg.learning_rate
        self.beta1 = cfg.beta1
        self.beta2 = cfg.beta2
        self.epsilon = cfg.epsilon
        self.step = 0
        self.m = {}
        self.v = {}


def optimizer_step(state: OptimizerState, model, grads: dict) -> None:
    """One update over all trainable parameters, in layer order."""
    state.step += 1
    t = state.step
    lr = state.learning_rate
    for name, params in model.layers.items():
        if name in model.frozen:
            continue
        layer_grads = grads.get(name)
        if layer_grads is None:
            raise ShapeError(f"no gradients supplied for trainable layer {name!r}")
        for field in trainable_fields(params):
            p = getattr(params, field)
            g = layer_grads[field]
            if g.shape != p.shape:
                raise ShapeError(f"{name}.{field}: gradient shape {g.shape} "
                                 f"does not match parameter {p.shape}")
            if state.kind == "sgd":
                new = p.data - lr * g.data
            else:
                key = (name, field)
                m = state.m.get(key)
                if m is None:
                    m = np.zeros_like(p.data)
                    state.v[key] = np.zeros_like(p.data)
                v = state.v[key]
                m = state.beta1 * m + (1.0 - state.beta1) * g.data
                v = state.beta2 * v + (1.0 - state.beta2) * g.data * g.data
                state.m[key] = m
                state.v[key] = v
                m_hat = m / (1.0 - state.beta1 ** t)
                v_hat = v / (1.0 - state.beta2 ** t)
                new = p.data - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
            setattr(params, field, Tensor._wrap(new))


def fit(model, train_set, val_set, cfg: TrainConfig,
        max_steps: int = None, stop_at_train_mae: float = None,
        eval_every: int = 1):
    """Train ``model``; returns ``(model, [LossReport per epoch])``.

    Each epoch shuffles with the seeded generator (when enabled), steps
    through the mini-batches, then reports full-pass eval-mode train and
    validation MAE, so the whole run is determined by (data, config, seed).
    Models containing batch normalization need batches of at least two
    samples; a single-sample remainder batch is skipped rather than fed to
    train-mode normalization.

    ``max_steps`` caps the total optimizer steps (the epoch underway still
    finishes its report) and ``stop_at_train_mae`` stops once the reported
    train MAE drops below the threshold; both are conveniences for budgeted
    experiment sweeps and leave the per-step trajectory untouched.

    ``eval_every`` thins the reports: only every Nth epoch is scored (the
    final epoch always is, so ``reports[-1]`` is the end state). Evaluation
    never touches parameters or the RNG, so the trained weights are
    identical whatever the cadence; ``stop_at_train_mae`` is only checked
    on scored epochs. The default of 1 keeps the report-per-epoch contract.
    """
    n = len(train_set)
    if n == 0 or len(val_set) == 0:
        raise DataError("training and validation sets must be non-empty")
    if max_steps is not None and max_steps < 1:
        raise ConfigError(f"max_steps must be >= 1, got {max_steps}")
    if eval_every < 1:
        raise ConfigError(f"eval_every must be >= 1, got {eval_every}")
    needs_pairs = model.has_batchnorm()
    if needs_pairs and cfg.batch_size < 2:
        raise ConfigError("batch_size must be >= 2 for models with batchnorm")
    opt = OptimizerState(cfg)
    rng = Rng(cfg.seed)
    reports = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.shuffle(n) if cfg.shuffle else np.arange(n)
        for batch_i, lo in enumerate(range(0, n, cfg.batch_size)):
            if max_steps is not None and opt.step >= max_steps:
                break
            idxs = order[lo:lo + cfg.batch_size]
            if needs_pairs and len(idxs) < 2:
                continue
            inputs, targets = train_set.batch(idxs)
            try:
                pred, ctx = model.forward(inputs, mode="train")
                grads = model.backward(mae_grad(pred, targets), ctx)
                optimizer_step(opt, model, grads)
                model.apply_stat_updates(ctx)
            except NonFiniteError as exc:
                raise NumericError(
                    f"training diverged: {exc} (epoch {epoch}, batch {batch_i})",
                    epoch=epoch, batch=batch_i) from exc
        out_of_steps = max_steps is not None and opt.step >= max_steps
        due = epoch % eval_every == 0 or epoch == cfg.epochs or out_of_steps
        if due:
            reports.append(LossReport(
                epoch=epoch,
                train_mae=evaluate(model, train_set),
                val_mae=evaluate(model, val_set),
            ))
        if out_of_steps:
            break
        if (due and stop_at_train_mae is not None
                and reports[-1].train_mae < stop_at_train_mae):
            break
    return model, reports


_EVAL_BATCH = 64  # pinned: evaluation is always batched identically, so any
# two code paths that report an MAE over the same split agree bit-for-bit


def evaluate(model, dataset, last_step_only: bool = False) -> float:
    """Full-pass eval-mode MAE over ``dataset``.

    Windowed models average over all timesteps unless ``last_step_only``
    asks for the current-frame ("deployment") metric. When the dataset
    exposes frame-level access, overlapping windows share one trunk pass
    per frame instead of five.
    """
    n = len(dataset)
    if n == 0:
        raise DataError("cannot evaluate on an empty dataset")
    total = 0.0
    count = 0
    if model.windowed and hasattr(dataset, "frame_image_batch"):
        embeds = _frame_embeddings(model, dataset)
        for lo in range(0, n, _EVAL_BATCH):
            idxs = np.arange(lo, min(lo + _EVAL_BATCH, n))
            frame_idx = dataset.window_frame_matrix(idxs)
            e = Tensor._wrap(np.ascontiguousarray(embeds[frame_idx]))
            feats = dataset.features_matrix(idxs) if model.wants_features else None
            pred = model.head_forward(e, feats)
            targets = dataset.targets_matrix(idxs)
            total, count = _tally(pred, targets, last_step_only, total, count)
        return total / count
    for lo in range(0, n, _EVAL_BATCH):
        idxs = np.arange(lo, min(lo + _EVAL_BATCH, n))
        inputs, targets = dataset.batch(idxs)
        pred, _ = model.forward(inputs, mode="eval")
        total, count = _tally(pred, targets, last_step_only and model.windowed,
                              total, count)
    return total / count


def _tally(pred: Tensor, targets: Tensor, last_only: bool, total: float, count: int):
    if pred.shape != targets.shape:
        raise ShapeError(f"prediction {pred.shape} vs targets {targets.shape}")
    diff = np.abs(pred.data - targets.data)
    if last_only:
        diff = diff[:, -1, :]
    return total + float(diff.sum()), count + diff.size


def _frame_embeddings(model, dataset) -> np.ndarray:
    k = dataset.frame_count
    out = np.empty((k, model.layers["fc2"].weights.shape[1]), dtype=np.float64)
    for lo in range(0, k, _EVAL_BATCH):
        hi = min(lo + _EVAL_BATCH, k)
        out[lo:hi] = model.embed_frames(dataset.frame_image_batch(lo, hi)).data
    return out
