"""Feature extraction: targets, the 11-feature vector, windows, scaling.

Ground-truth acceleration is the raw per-frame velocity difference
``a_curr = v_curr - v_prev`` — deliberately not divided by the frame
period, so its units are velocity-units per frame. Summed over a segment
it telescopes exactly to ``v_last - v_first``.

The model input is an 11-vector in this fixed order::

    (vx, vy, vz, dx, dy, vfx, vfy, vfz, afx, afy, afz)

ego velocity, relative distance to the front vehicle, front-vehicle
velocity, front-vehicle acceleration. When no front vehicle is present
all eight front-vehicle entries are exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError
from .records import FrameRecord
from .tensor import Tensor

__all__ = [
    "FEATURE_NAMES",
    "WINDOW",
    "FeatureVector",
    "FrameSample",
    "WindowSample",
    "NormStats",
    "compute_acceleration",
    "build_feature_vector",
    "downsample_image",
    "make_windows",
    "fit_norm_stats",
    "apply_norm",
    "denormalize",
    "segment_feature_vectors",
]

FEATURE_NAMES = ("vx", "vy", "vz", "dx", "dy", "vfx", "vfy", "vfz", "afx", "afy", "afz")
WINDOW = 5  # current frame plus the previous four


@dataclass
class FeatureVector:
    """11 input features and the 3-vector acceleration target."""

    values: Tensor
    target: Tensor
    frame_index: int = -1

    def __post_init__(self):
        if not isinstance(self.values, Tensor):
            self.values = Tensor(self.values)
        if not isinstance(self.target, Tensor):
            self.target = Tensor(self.target)
        if self.values.shape != (11,):
            raise ShapeError(f"feature vector must have 11 entries, got {self.values.shape}")
        if self.target.shape != (3,):
            raise ShapeError(f"target must be a 3-vector, got {self.target.shape}")


@dataclass
class FrameSample:
    """A feature vector paired with the frame's downsampled image."""

    feature: FeatureVector
    image: Tensor


@dataclass
class WindowSample:
    """Five consecutive frame samples plus their per-timestep targets."""

    frames: tuple

    def __post_init__(self):
        if len(self.frames) != WINDOW:
            raise ShapeError(f"window must hold {WINDOW} frames, got {len(self.frames)}")
        idx = [fs.feature.frame_index for fs in self.frames]
        if any(b - a != 1 for a, b in zip(idx, idx[1:])):
            raise DataError(f"window frames not consecutive: {idx}")

    @property
    def targets(self) -> Tensor:
        return Tensor._wrap(np.stack([fs.feature.target.data for fs in self.frames]))


def compute_acceleration(v_curr, v_prev) -> Tensor:
    """Per-frame acceleration: componentwise ``v_curr - v_prev``."""
    a = np.asarray(v_curr, dtype=np.float64) - np.asarray(v_prev, dtype=np.float64)
    if a.shape != (3,):
        raise ShapeError(f"velocities must be 3-vectors, got result shape {a.shape}")
    return Tensor._wrap(a)


def build_feature_vector(curr: FrameRecord, prev: FrameRecord) -> FeatureVector:
    """Assemble the 11 features of ``curr`` and its acceleration target."""
    if curr.frame_index != prev.frame_index + 1:
        raise DataError(f"frames not consecutive: {prev.frame_index} then {curr.frame_index}")
    if curr.front_present:
        dx, dy = curr.rel_distance
        vf = curr.front_velocity
        af = curr.front_accel
    else:
        dx = dy = 0.0
        vf = (0.0, 0.0, 0.0)
        af = (0.0, 0.0, 0.0)
    values = np.array([*curr.av_velocity, dx, dy, *vf, *af], dtype=np.float64)
    target = compute_acceleration(curr.av_velocity, prev.av_velocity)
    return FeatureVector(values=Tensor._wrap(values), target=target,
                         frame_index=curr.frame_index)


def segment_feature_vectors(frames) -> list:
    """Feature vectors for frames 1..n-1 of a segment (frame 0 has no
    predecessor, hence no target, and is dropped)."""
    return [build_feature_vector(curr, prev) for prev, curr in zip(frames, frames[1:])]


def downsample_image(img: Tensor, out_h: int, out_w: int) -> Tensor:
    """Area-averaging (box-filter) downsample of an [h,w,3] image.

    Each output pixel is the exact area-weighted mean of the input region
    it covers, so non-integer scale factors are handled and values stay
    in [0, 1]. Upsampling is refused.
    """
    if img.ndim != 3:
        raise ShapeError(f"expected [h,w,c] image, got {img.shape}")
    h, w, c = img.shape
    if out_h > h or out_w > w:
        raise DataError(f"cannot upsample {h}x{w} to {out_h}x{out_w}")
    if out_h <= 0 or out_w <= 0:
        raise DataError(f"output extents must be positive, got {out_h}x{out_w}")
    if (out_h, out_w) == (h, w):
        return img
    rows = _overlap_matrix(h, out_h)
    cols = _overlap_matrix(w, out_w)
    # out[i,j,k] = sum_{a,b} rows[i,a] * img[a,b,k] * cols[j,b]
    out = np.einsum("ia,abk,jb->ijk", rows, img.data, cols, optimize=True)
    return Tensor._wrap(np.clip(out, 0.0, 1.0))


def _overlap_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix of interval overlaps between output cell i
    (covering [i*n_in/n_out, (i+1)*n_in/n_out)) and input cell a."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        lo = i * scale
        hi = (i + 1) * scale
        a0 = int(np.floor(lo))
        a1 = min(int(np.ceil(hi)), n_in)
        for a in range(a0, a1):
            m[i, a] = min(hi, a + 1) - max(lo, a)
    return m / scale


def make_windows(samples, window: int = WINDOW) -> list:
    """Sliding windows (stride 1) over one segment's frame samples.

    Returns ``len(samples) - window + 1`` windows; never called across
    segment boundaries because the input is a single segment's list.
    """
    if window != WINDOW:
        raise ShapeError(f"window size is fixed at {WINDOW}")
    if len(samples) < window:
        raise DataError(f"segment of {len(samples)} frames is shorter than "
                        f"the {window}-frame window")
    return [WindowSample(frames=tuple(samples[i:i + window]))
            for i in range(len(samples) - window + 1)]


@dataclass
class NormStats:
    """Per-feature mean and standard deviation from the training split."""

    mean: Tensor
    std: Tensor

    def __post_init__(self):
        if not isinstance(self.mean, Tensor):
            self.mean = Tensor(self.mean)
        if not isinstance(self.std, Tensor):
            self.std = Tensor(self.std)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError(f"inconsistent stats shapes {self.mean.shape} vs {self.std.shape}")
        if float(self.std.data.min()) <= 0.0:
            raise ShapeError("std must be strictly positive")


def fit_norm_stats(train) -> NormStats:
    """Mean/std per feature over the training split.

    Accepts a list of FeatureVector or a 2-d array [n, features]. Features
    with zero variance get std forced to 1 so they pass through unchanged.
    """
    if isinstance(train, (list, tuple)):
        if not train:
            raise DataError("cannot fit normalization stats on an empty set")
        arr = np.stack([fv.values.data for fv in train])
    else:
        arr = train.data if isinstance(train, Tensor) else np.asarray(train, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise DataError(f"expected non-empty [n,features] array, got {arr.shape}")
    mean = arr.mean(axis=0)
    std = np.sqrt(((arr - mean) ** 2).mean(axis=0))
    std[std == 0.0] = 1.0
    return NormStats(mean=Tensor._wrap(mean), std=Tensor._wrap(std))


def _as_array(v):
    if isinstance(v, FeatureVector):
        return v.values.data, v
    if isinstance(v, Tensor):
        return v.data, None
    return np.asarray(v, dtype=np.float64), None


def apply_norm(v, stats: NormStats):
    """Z-score ``v`` (an 11-vector, [n,11] batch, or FeatureVector)."""
    arr, fv = _as_array(v)
    if arr.shape[-1] != stats.mean.shape[0]:
        raise ShapeError(f"feature count {arr.shape[-1]} does not match stats "
                         f"({stats.mean.shape[0]})")
    out = (arr - stats.mean.data) / stats.std.data
    if fv is not None:
        return FeatureVector(values=Tensor._wrap(out), target=fv.target,
                             frame_index=fv.frame_index)
    return Tensor._wrap(out)


def denormalize(v, stats: NormStats):
    """Inverse of :func:`apply_norm`."""
    arr, fv = _as_array(v)
    if arr.shape[-1] != stats.mean.shape[0]:
        raise ShapeError(f"feature count {arr.shape[-1]} does not match stats "
                         f"({stats.mean.shape[0]})")
    out = arr * stats.std.data + stats.mean.data
    if fv is not None:
        return FeatureVector(values=Tensor._wrap(out), target=fv.target,
                             frame_index=fv.frame_index)
    return Tensor._wrap(out)
