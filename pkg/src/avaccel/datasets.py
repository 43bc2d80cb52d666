"""Batched access to segment data for training and evaluation.

A :class:`SampleStore` flattens segments into parallel arrays (one row per
frame that has a target, i.e. every frame except each segment's first).
Images are kept as uint8 when they came off disk — the on-disk pixels are
already quantized, so this is lossless — and converted to float per batch.

Views adapt the store to a model kind: :class:`FrameView` serves single
frames, :class:`WindowView` serves 5-frame sliding windows that never
cross a segment boundary, plus the frame-level accessors that let
evaluation embed each frame once instead of once per overlapping window.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError
from .features import WINDOW, NormStats, apply_norm, segment_feature_vectors
from .records import Segment, read_segment_file
from .tensor import Tensor

__all__ = ["SampleStore", "FrameView", "WindowView", "ArrayDataset",
           "view_for", "list_tar_dirs", "segment_paths", "load_dataset"]


class SampleStore:
    """Parallel arrays of features, targets, and images for many segments."""

    def __init__(self, features: np.ndarray, targets: np.ndarray,
                 images: np.ndarray, seg_bounds: list):
        if features.ndim != 2 or targets.ndim != 2 or images.ndim != 4:
            raise ShapeError("store arrays have wrong ranks")
        if not len(features) == len(targets) == len(images):
            raise ShapeError("store arrays disagree on sample count")
        self.features = features
        self.targets = targets
        self.images = images
        self.seg_bounds = seg_bounds

    def __len__(self) -> int:
        return len(self.features)

    @property
    def image_hw(self):
        return self.images.shape[1], self.images.shape[2]

    @classmethod
    def from_segments(cls, segments, quantize: bool = False) -> "SampleStore":
        """Build a store from in-memory segments.

        ``quantize=True`` stores pixels as uint8 (what disk round-trips
        give); the default keeps exact float images.
        """
        segments = list(segments)
        if not segments:
            raise DataError("cannot build a store from zero segments")
        feats, targs, imgs, bounds = [], [], [], []
        hw = None
        pos = 0
        for seg in segments:
            vectors = segment_feature_vectors(seg.frames)
            for fv, frame in zip(vectors, seg.frames[1:]):
                img = frame.image.data
                if hw is None:
                    hw = img.shape[:2]
                elif img.shape[:2] != hw:
                    raise DataError(
                        f"segment {seg.segment_id} has {img.shape[0]}x{img.shape[1]} "
                        f"images, expected {hw[0]}x{hw[1]}")
                feats.append(fv.values.data)
                targs.append(fv.target.data)
                imgs.append(np.rint(img * 255.0).astype(np.uint8) if quantize
                            else img)
            bounds.append((pos, pos + len(vectors)))
            pos += len(vectors)
        return cls(np.stack(feats), np.stack(targs), np.stack(imgs), bounds)

    def stats_features(self) -> np.ndarray:
        """Raw (unnormalized) feature matrix, for fitting norm stats."""
        return self.features

    def subset(self, n_segments: int) -> "SampleStore":
        """A store over the first ``n_segments`` segments (array views)."""
        if not 1 <= n_segments <= len(self.seg_bounds):
            raise DataError(f"cannot take {n_segments} of {len(self.seg_bounds)} segments")
        stop = self.seg_bounds[n_segments - 1][1]
        return SampleStore(self.features[:stop], self.targets[:stop],
                           self.images[:stop], self.seg_bounds[:n_segments])


def _images_f64(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return np.ascontiguousarray(arr)


class FrameView:
    """Single-frame batches for baseline / cnn / cnn_nn models."""

    def __init__(self, store: SampleStore, kind: str, norm: NormStats):
        if kind not in ("baseline", "cnn", "cnn_nn"):
            raise ShapeError(f"{kind} is not a single-frame model kind")
        self.store = store
        self.kind = kind
        self.norm = norm
        self._feats = apply_norm(store.features, norm).data

    def __len__(self) -> int:
        return len(self.store)

    def batch(self, idxs):
        idxs = np.asarray(idxs)
        targets = Tensor._wrap(self.store.targets[idxs])
        parts = []
        if self.kind != "baseline":
            parts.append(Tensor._wrap(_images_f64(self.store.images[idxs])))
        if self.kind != "cnn":
            parts.append(Tensor._wrap(self._feats[idxs].copy()))
        return tuple(parts), targets


class WindowView:
    """5-frame sliding-window batches for cnn_lstm / advanced models.

    Window ``i`` covers store rows ``base[i] .. base[i]+4``; bases are laid
    out per segment so no window straddles two segments. Targets are the
    full [b, 5, 3] per-step accelerations.
    """

    def __init__(self, store: SampleStore, kind: str, norm: NormStats):
        if kind not in ("cnn_lstm", "advanced"):
            raise ShapeError(f"{kind} is not a windowed model kind")
        self.store = store
        self.kind = kind
        self.norm = norm
        self._feats = apply_norm(store.features, norm).data
        bases = []
        for lo, hi in store.seg_bounds:
            if hi - lo >= WINDOW:
                bases.append(np.arange(lo, hi - WINDOW + 1))
        if not bases:
            raise DataError(f"no segment is long enough for {WINDOW}-frame windows")
        self._bases = np.concatenate(bases)

    def __len__(self) -> int:
        return len(self._bases)

    def window_frame_matrix(self, idxs) -> np.ndarray:
        """Store-row indices [b, 5] of the requested windows."""
        return self._bases[np.asarray(idxs)][:, None] + np.arange(WINDOW)

    def batch(self, idxs):
        rows = self.window_frame_matrix(idxs)
        targets = self.targets_matrix(idxs)
        images = Tensor._wrap(_images_f64(self.store.images[rows]))
        if self.kind == "advanced":
            feats = Tensor._wrap(self._feats[rows].copy())
            return (images, feats), targets
        return (images,), targets

    def targets_matrix(self, idxs) -> Tensor:
        return Tensor._wrap(self.store.targets[self.window_frame_matrix(idxs)])

    def features_matrix(self, idxs) -> Tensor:
        """Normalized [b, 5, 11] features for the requested windows."""
        return Tensor._wrap(self._feats[self.window_frame_matrix(idxs)].copy())

    # -- frame-level access for shared-trunk evaluation --------------------

    @property
    def frame_count(self) -> int:
        return len(self.store)

    def frame_image_batch(self, lo: int, hi: int) -> Tensor:
        return Tensor._wrap(_images_f64(self.store.images[lo:hi]))


class ArrayDataset:
    """Plain (inputs, targets) arrays behind the batch() protocol."""

    def __init__(self, features, targets):
        f = features.data if isinstance(features, Tensor) else np.asarray(
            features, dtype=np.float64)
        t = targets.data if isinstance(targets, Tensor) else np.asarray(
            targets, dtype=np.float64)
        if f.ndim != 2 or t.ndim != 2 or len(f) != len(t):
            raise ShapeError(f"expected matching 2-d arrays, got {f.shape} and {t.shape}")
        self.features = f
        self.targets = t

    def __len__(self) -> int:
        return len(self.features)

    def batch(self, idxs):
        idxs = np.asarray(idxs)
        return ((Tensor._wrap(self.features[idxs]),),
                Tensor._wrap(self.targets[idxs]))


def view_for(store: SampleStore, kind: str, norm: NormStats):
    """The right view class for a model kind."""
    if kind in ("cnn_lstm", "advanced"):
        return WindowView(store, kind, norm)
    return FrameView(store, kind, norm)


# ---------------------------------------------------------------------------
# directory layout: <dataset>/tar_NNN/<segment_id>.avsg


def list_tar_dirs(dataset_dir) -> list:
    """Sorted tar_* subdirectories of a dataset directory."""
    root = Path(dataset_dir)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    tars = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("tar_"))
    if not tars:
        raise DataError(f"no tar_* directories under {root}")
    return tars


def segment_paths(tar_dirs) -> list:
    """All segment files under the given tar directories, sorted within each."""
    paths = []
    for tar in tar_dirs:
        files = sorted(Path(tar).glob("*.avsg"))
        if not files:
            raise DataError(f"no .avsg segments in {tar}")
        paths.extend(files)
    return paths


def load_dataset(tar_dirs) -> SampleStore:
    """Read every segment under ``tar_dirs`` into one uint8-image store."""
    feats, targs, imgs, bounds = [], [], [], []
    hw = None
    pos = 0
    for path in segment_paths(tar_dirs):
        seg = read_segment_file(path)
        vectors = segment_feature_vectors(seg.frames)
        for fv, frame in zip(vectors, seg.frames[1:]):
            img = frame.image.data
            if hw is None:
                hw = img.shape[:2]
            elif img.shape[:2] != hw:
                raise DataError(f"{path} holds {img.shape[0]}x{img.shape[1]} images, "
                                f"expected {hw[0]}x{hw[1]}")
            feats.append(fv.values.data)
            targs.append(fv.target.data)
            imgs.append(np.rint(img * 255.0).astype(np.uint8))
        bounds.append((pos, pos + len(vectors)))
        pos += len(vectors)
    return SampleStore(np.stack(feats), np.stack(targs), np.stack(imgs), bounds)
