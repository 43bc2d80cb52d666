"""scikit-learn compatible wrappers around the feature-model stack.

:class:`FeatureNormalizer` is a z-score transformer whose statistics match
the ones stored inside trained models, and :class:`AccelerationRegressor`
exposes the plain feature-vector network through the usual
``fit(X, y)`` / ``predict(X)`` / ``get_params`` protocol so it can sit in
sklearn pipelines and grid searches.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin

from .errors import NotFittedError, ShapeError
from .features import NormStats, fit_norm_stats
from .models import build_baseline, predict
from .tensor import Rng, Tensor
from .training import TrainConfig, fit as fit_model
from .datasets import ArrayDataset

__all__ = ["FeatureNormalizer", "AccelerationRegressor"]


def _as_2d(X, n_features=None, name="X") -> np.ndarray:
    arr = X.data if isinstance(X, Tensor) else np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ShapeError(f"{name} must be a non-empty 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    if n_features is not None and arr.shape[1] != n_features:
        raise ShapeError(f"{name} has {arr.shape[1]} columns, expected {n_features}")
    return arr


class FeatureNormalizer(TransformerMixin, BaseEstimator):
    """Z-score normalizer: fitted mean/std per column, zero-variance
    columns pass through unchanged (std forced to 1)."""

    def fit(self, X, y=None):
        arr = _as_2d(X)
        stats = fit_norm_stats(arr)
        self.mean_ = stats.mean.data
        self.scale_ = stats.std.data
        self.n_features_in_ = arr.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        arr = _as_2d(X, self.n_features_in_)
        return (arr - self.mean_) / self.scale_

    def inverse_transform(self, X) -> np.ndarray:
        self._check_fitted()
        arr = _as_2d(X, self.n_features_in_)
        return arr * self.scale_ + self.mean_

    def _check_fitted(self):
        if not hasattr(self, "mean_"):
            raise NotFittedError("FeatureNormalizer must be fitted before use")


class AccelerationRegressor(RegressorMixin, BaseEstimator):
    """Feature-only acceleration model behind the sklearn estimator API.

    ``fit(X, y)`` takes the 11 per-frame features and the 3-component
    acceleration targets, trains the dense network from scratch, and keeps
    the per-epoch loss history in ``history_``.
    """

    N_FEATURES = 11
    N_OUTPUTS = 3

    def __init__(self, epochs: int = 40, batch_size: int = 16,
                 learning_rate: float = 1e-3, optimizer: str = "adam",
                 seed: int = 0, shuffle: bool = True):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.seed = seed
        self.shuffle = shuffle

    def fit(self, X, y):
        X = _as_2d(X, self.N_FEATURES, "X")
        y = _as_2d(y, self.N_OUTPUTS, "y")
        if len(X) != len(y):
            raise ShapeError(f"X has {len(X)} rows but y has {len(y)}")
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          learning_rate=self.learning_rate,
                          optimizer=self.optimizer, seed=self.seed,
                          shuffle=self.shuffle)
        stats = fit_norm_stats(X)
        model = build_baseline(Rng(self.seed))
        model.norm_stats = stats
        data = ArrayDataset((X - stats.mean.data) / stats.std.data, y)
        _, reports = fit_model(model, data, data, cfg)
        self.model_ = model
        self.history_ = reports
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise NotFittedError("AccelerationRegressor must be fitted before predict")
        X = _as_2d(X, self.N_FEATURES, "X")
        return predict(self.model_, Tensor(X)).data
