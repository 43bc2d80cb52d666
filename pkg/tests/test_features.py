"""Feature extraction: acceleration targets, the 11-vector, windows, scaling."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from avaccel.errors import DataError, ShapeError
from avaccel.features import (FEATURE_NAMES, FrameSample, FeatureVector,
                              WindowSample, apply_norm, build_feature_vector,
                              compute_acceleration, denormalize,
                              downsample_image, fit_norm_stats, make_windows,
                              segment_feature_vectors)
from avaccel.records import FrameRecord
from avaccel.tensor import Tensor, tensor

IMG = np.zeros((4, 4, 3))


def frame(i, v, front=None, front_accel=(0, 0, 0), dist=(0, 0)):
    present = front is not None
    return FrameRecord(
        frame_index=i,
        av_velocity=v,
        front_present=present,
        front_velocity=front if present else (0, 0, 0),
        front_accel=front_accel if present else (0, 0, 0),
        rel_distance=dist if present else (0, 0),
        image=Tensor(IMG),
    )


def test_compute_acceleration_examples():
    assert compute_acceleration((5, 0, 0), (4.5, 0, 0)).tolist() == [0.5, 0, 0]
    assert compute_acceleration((3, 1, 2), (3, 1, 2)).tolist() == [0, 0, 0]
    assert compute_acceleration((0, 0, 0), (1, -2, 0.5)).tolist() == [-1, 2, -0.5]


def test_compute_acceleration_shape():
    with pytest.raises(ShapeError):
        compute_acceleration((1, 2), (3, 4))


def test_feature_order():
    assert FEATURE_NAMES == ("vx", "vy", "vz", "dx", "dy",
                             "vfx", "vfy", "vfz", "afx", "afy", "afz")


def test_build_feature_vector_hand_fixture():
    """Two frames with known kinematics, checked entry by entry."""
    prev = frame(3, (10.0, 0.5, 0.0), front=(8.0, 0.0, 0.0),
                 front_accel=(0.2, 0.0, 0.0), dist=(14.0, -0.5))
    curr = frame(4, (10.4, 0.3, 0.1), front=(8.5, 0.1, 0.0),
                 front_accel=(0.5, 0.1, 0.0), dist=(13.0, -0.4))
    fv = build_feature_vector(curr, prev)
    assert fv.values.tolist() == [10.4, 0.3, 0.1,      # vx, vy, vz
                                  13.0, -0.4,          # dx, dy
                                  8.5, 0.1, 0.0,       # vfx, vfy, vfz
                                  0.5, 0.1, 0.0]       # afx, afy, afz
    np.testing.assert_allclose(fv.target.data, [10.4 - 10.0, 0.3 - 0.5, 0.1 - 0.0],
                               atol=1e-15)
    assert fv.frame_index == 4


def test_front_absent_zeroes_features():
    prev = frame(0, (5.0, 0.0, 0.0))
    curr = frame(1, (5.5, 0.0, 0.0))
    fv = build_feature_vector(curr, prev)
    assert fv.values.tolist()[3:] == [0.0] * 8
    assert fv.values.tolist()[:3] == [5.5, 0.0, 0.0]


def test_stationary_no_front_all_zero():
    fv = build_feature_vector(frame(1, (0, 0, 0)), frame(0, (0, 0, 0)))
    assert not fv.values.data.any()
    assert not fv.target.data.any()


def test_non_consecutive_frames_rejected():
    with pytest.raises(DataError):
        build_feature_vector(frame(5, (1, 0, 0)), frame(3, (1, 0, 0)))


@given(st.lists(st.tuples(st.floats(-30, 30), st.floats(-5, 5), st.floats(-1, 1)),
                min_size=2, max_size=40))
def test_telescoping_identity(velocities):
    """Summing per-frame accelerations recovers v_last - v_first exactly.

    Exact in float64 because every velocity is snapped to the 2^-20 grid
    first, the same grid the scenario generator uses.
    """
    snap = [tuple(np.round(np.asarray(v) * 2 ** 20) / 2 ** 20) for v in velocities]
    accels = [compute_acceleration(b, a).data for a, b in zip(snap, snap[1:])]
    total = np.zeros(3)
    for a in accels:
        total += a
    want = np.asarray(snap[-1]) - np.asarray(snap[0])
    assert total.tolist() == want.tolist()


def test_segment_feature_vectors_drops_first_frame(segments):
    seg = segments[0]
    vecs = segment_feature_vectors(seg.frames)
    assert len(vecs) == len(seg.frames) - 1
    assert vecs[0].frame_index == 1


def test_downsample_constant():
    img = tensor(np.full((8, 8, 3), 0.6))
    out = downsample_image(img, 4, 4)
    assert out.shape == (4, 4, 3)
    np.testing.assert_allclose(out.data, 0.6, atol=1e-12)


def test_downsample_2x2_mean():
    img = tensor(np.array([[[0.0] * 3, [0.0] * 3], [[1.0] * 3, [1.0] * 3]]))
    out = downsample_image(img, 1, 1)
    np.testing.assert_allclose(out.data, 0.5, atol=1e-15)


def test_downsample_identity():
    img = tensor(np.random.default_rng(0).random((6, 6, 3)))
    assert downsample_image(img, 6, 6) == img


def test_downsample_rejects_upsampling():
    with pytest.raises(DataError):
        downsample_image(tensor(np.zeros((4, 4, 3))), 8, 4)


def test_downsample_box_filter_oracle():
    """Integer-ratio case: each output pixel is the mean of its block."""
    rng = np.random.default_rng(1)
    img = rng.random((8, 6, 3))
    out = downsample_image(tensor(img), 4, 3)
    want = img.reshape(4, 2, 3, 2, 3).mean(axis=(1, 3))
    np.testing.assert_allclose(out.data, want, atol=1e-12)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def _samples(n, start=0):
    out = []
    for i in range(start, start + n):
        fv = FeatureVector(values=tensor(np.full(11, float(i))),
                           target=tensor([float(i), 0.0, 0.0]),
                           frame_index=i)
        out.append(FrameSample(feature=fv, image=tensor(IMG)))
    return out


def test_make_windows_counts():
    assert len(make_windows(_samples(5))) == 1
    assert len(make_windows(_samples(200))) == 196
    with pytest.raises(DataError):
        make_windows(_samples(4))


def test_windows_offset_by_one_share_four_frames():
    wins = make_windows(_samples(7))
    assert len(wins) == 3
    first = [fs.feature.frame_index for fs in wins[0].frames]
    second = [fs.feature.frame_index for fs in wins[1].frames]
    assert first[1:] == second[:-1]


def test_window_sample_validation():
    with pytest.raises(ShapeError):
        WindowSample(frames=tuple(_samples(4)))
    jumbled = _samples(3) + _samples(2, start=9)
    with pytest.raises(DataError):
        WindowSample(frames=tuple(jumbled))


def test_window_targets_stack():
    win = make_windows(_samples(5))[0]
    assert win.targets.shape == (5, 3)
    assert win.targets.data[:, 0].tolist() == [0.0, 1.0, 2.0, 3.0, 4.0]


def test_norm_stats_two_point_feature():
    rows = np.zeros((2, 11))
    rows[0, 0], rows[1, 0] = 1.0, 3.0
    stats = fit_norm_stats(rows)
    assert stats.mean.data[0] == 2.0
    assert stats.std.data[0] == 1.0
    normed = apply_norm(tensor(rows), stats)
    assert normed.data[:, 0].tolist() == [-1.0, 1.0]


def test_norm_constant_feature_passthrough():
    rows = np.full((4, 11), 3.5)
    stats = fit_norm_stats(rows)
    assert stats.std.data.tolist() == [1.0] * 11
    out = apply_norm(tensor(rows), stats)
    np.testing.assert_allclose(out.data, 0.0, atol=1e-15)


def test_norm_of_mean_is_zero():
    rng = np.random.default_rng(2)
    rows = rng.random((10, 11))
    stats = fit_norm_stats(rows)
    np.testing.assert_allclose(apply_norm(stats.mean, stats).data, 0.0, atol=1e-12)


def test_norm_empty_rejected():
    with pytest.raises(DataError):
        fit_norm_stats(np.zeros((0, 11)))


@given(st.integers(0, 2 ** 32 - 1))
def test_norm_round_trip(seed):
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((6, 11)) * rng.uniform(0.1, 20) + rng.uniform(-5, 5)
    stats = fit_norm_stats(rows)
    v = tensor(rng.standard_normal(11))
    back = denormalize(apply_norm(v, stats), stats)
    np.testing.assert_allclose(back.data, v.data, atol=1e-12)


def test_norm_broadcasts_over_windows():
    rng = np.random.default_rng(3)
    rows = rng.random((20, 11))
    stats = fit_norm_stats(rows)
    block = tensor(rng.random((2, 5, 11)))
    out = apply_norm(block, stats)
    assert out.shape == (2, 5, 11)
    np.testing.assert_array_equal(out.data[1, 3],
                                  apply_norm(block[1, 3], stats).data)
