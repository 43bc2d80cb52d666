"""Acceleration prediction for a camera-equipped vehicle.

Five regression models (feature MLP, image CNN, fused CNN+MLP, windowed
CNN+LSTM, and a transfer-learning fusion model) built on an explicit
forward/backward layer stack, plus a binary segment-record format and a
synthetic car-following scenario generator for desk-scale experiments.
"""

from .errors import (
    AvaccelError,
    ConfigError,
    DataError,
    FormatError,
    NonFiniteError,
    NotFittedError,
    NumericError,
    ShapeError,
)
from .tensor import Rng, Tensor, concat, elementwise, matmul, reduce, tensor
from .features import (
    FeatureVector,
    NormStats,
    apply_norm,
    build_feature_vector,
    compute_acceleration,
    denormalize,
    downsample_image,
    fit_norm_stats,
    make_windows,
)
from .records import FrameRecord, Segment, read_segment, write_segment
from .scenario import ScenarioConfig, dataset_stats, generate_synthetic_segment, render_frame_image
from .models import (
    build_advanced,
    build_baseline,
    build_cnn,
    build_cnn_lstm,
    build_cnn_nn,
    load_model,
    predict,
    save_model,
)
from .training import LossReport, TrainConfig, evaluate, fit, mae_grad, mae_loss
from .estimators import AccelerationRegressor, FeatureNormalizer

__version__ = "0.1.0"

__all__ = [
    "AvaccelError",
    "ConfigError",
    "DataError",
    "FormatError",
    "NonFiniteError",
    "NotFittedError",
    "NumericError",
    "ShapeError",
    "Rng",
    "Tensor",
    "tensor",
    "matmul",
    "elementwise",
    "concat",
    "reduce",
    "FeatureVector",
    "NormStats",
    "compute_acceleration",
    "build_feature_vector",
    "downsample_image",
    "make_windows",
    "fit_norm_stats",
    "apply_norm",
    "denormalize",
    "FrameRecord",
    "Segment",
    "read_segment",
    "write_segment",
    "ScenarioConfig",
    "generate_synthetic_segment",
    "render_frame_image",
    "dataset_stats",
    "build_baseline",
    "build_cnn",
    "build_cnn_nn",
    "build_cnn_lstm",
    "build_advanced",
    "predict",
    "save_model",
    "load_model",
    "TrainConfig",
    "LossReport",
    "fit",
    "evaluate",
    "mae_loss",
    "mae_grad",
    "AccelerationRegressor",
    "FeatureNormalizer",
]
