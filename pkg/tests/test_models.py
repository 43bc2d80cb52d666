"""The five architectures: shapes, parameter counts, freezing, persistence."""

import numpy as np
import pytest

from avaccel.errors import DataError, NonFiniteError, ShapeError
from avaccel.layers import serial_fields, trainable_fields
from avaccel.models import (MODEL_KINDS, build_advanced, build_baseline,
                            build_cnn, build_cnn_lstm, build_cnn_nn,
                            load_model, predict, save_model)
from avaccel.tensor import Rng, Tensor, tensor
from avaccel.training import (OptimizerState, TrainConfig, mae_grad,
                              optimizer_step)

RNG0 = np.random.default_rng(0)


def build(kind: str, seed: int = 0):
    rng = Rng(seed)
    if kind == "advanced":
        return build_advanced(build_cnn(rng.spawn("base")), rng)
    return {"baseline": build_baseline, "cnn": build_cnn,
            "cnn_nn": build_cnn_nn, "cnn_lstm": build_cnn_lstm}[kind](rng)


def inputs_for(kind: str, b: int = 2, rng=None):
    rng = rng or np.random.default_rng(1)
    img = tensor(rng.random((b, 64, 64, 3)))
    win_img = tensor(rng.random((b, 5, 64, 64, 3)))
    feat = tensor(rng.standard_normal((b, 11)))
    win_feat = tensor(rng.standard_normal((b, 5, 11)))
    return {
        "baseline": (feat,),
        "cnn": (img,),
        "cnn_nn": (img, feat),
        "cnn_lstm": (win_img,),
        "advanced": (win_img, win_feat),
    }[kind]


def out_shape(kind: str, b: int = 2):
    return (b, 5, 3) if kind in ("cnn_lstm", "advanced") else (b, 3)


# --- construction -------------------------------------------------------------


def test_baseline_param_count():
    assert build("baseline").param_count() == (11 * 8 + 8) + (8 * 4 + 4) + (4 * 3 + 3) == 147


def test_cnn_param_count():
    trunk_conv = (3 * 3 * 3 * 8 + 8) + (3 * 3 * 8 * 16 + 16) + (3 * 3 * 16 * 32 + 32)
    trunk_bn = 2 * (8 + 16 + 32)
    trunk_dense = (2048 * 64 + 64) + (64 * 16 + 16)
    head = 16 * 3 + 3
    assert build("cnn").param_count() == trunk_conv + trunk_bn + trunk_dense + head


def test_cnn_nn_param_count():
    cnn_embed = build("cnn").param_count() - (16 * 3 + 3)
    feature_branch = (11 * 8 + 8) + (8 * 4 + 4)
    fuse = (20 * 16 + 16) + (16 * 3 + 3)
    assert build("cnn_nn").param_count() == cnn_embed + feature_branch + fuse


def test_cnn_lstm_param_count():
    cnn_embed = build("cnn").param_count() - (16 * 3 + 3)
    lstm = 4 * (16 * 32 + 32 * 32 + 32)
    tdd = 32 * 3 + 3
    assert build("cnn_lstm").param_count() == cnn_embed + lstm + tdd


def test_advanced_param_counts():
    model = build("advanced")
    frozen = sum(getattr(model.layers[n], f).size
                 for n in model.frozen for f in trainable_fields(model.layers[n]))
    assert frozen == 6144
    assert model.trainable_param_count() == model.param_count() - frozen


def test_window_length_does_not_change_param_count():
    # the trunk is shared across timesteps, so the count has no factor of 5
    assert build("cnn_lstm").param_count() < 2 * build("cnn").param_count()


def test_same_seed_same_init():
    a, b = build("cnn_nn", seed=3), build("cnn_nn", seed=3)
    for name in a.layers:
        for f in serial_fields(a.layers[name]):
            assert getattr(a.layers[name], f) == getattr(b.layers[name], f)


def test_different_seed_different_init():
    a, b = build("baseline", seed=1), build("baseline", seed=2)
    assert a.layers["fc1"].weights != b.layers["fc1"].weights


def test_advanced_requires_cnn_base():
    with pytest.raises(DataError):
        build_advanced(build_baseline(Rng(0)), Rng(1))


# --- forward shapes -----------------------------------------------------------


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_forward_shapes(kind):
    model = build(kind)
    out, _ = model.forward(inputs_for(kind), mode="eval")
    assert out.shape == out_shape(kind)


def test_cnn_embedding_tap():
    model = build("cnn")
    embeds = model.embed_frames(tensor(RNG0.random((3, 64, 64, 3))))
    assert embeds.shape == (3, 16)


def test_fused_width_is_twenty():
    assert build("cnn_nn").layers["fuse1"].weights.shape == (20, 16)
    assert build("advanced").layers["lstm"].w_i.shape[0] == 20


def test_wrong_input_shapes_rejected():
    model = build("cnn")
    with pytest.raises(ShapeError):
        model.forward((tensor(RNG0.random((2, 32, 32, 3))),), mode="eval")
    with pytest.raises(ShapeError):
        build("baseline").forward((tensor(RNG0.random((2, 7))),), mode="eval")


# --- behavioural properties ---------------------------------------------------


def test_feature_branch_is_live():
    """Zeroing the feature input must change the fused model's output."""
    model = build("cnn_nn", seed=5)
    img, feat = inputs_for("cnn_nn")
    out_a, _ = model.forward((img, feat), mode="eval")
    out_b, _ = model.forward((img, tensor(np.zeros((2, 11)))), mode="eval")
    assert np.abs(out_a.data - out_b.data).max() > 1e-8


def test_image_branch_is_live():
    model = build("cnn_nn", seed=5)
    img, feat = inputs_for("cnn_nn")
    other = tensor(np.random.default_rng(9).random((2, 64, 64, 3)))
    out_a, _ = model.forward((img, feat), mode="eval")
    out_b, _ = model.forward((other, feat), mode="eval")
    assert np.abs(out_a.data - out_b.data).max() > 1e-8


def test_lstm_state_evolves_across_identical_frames():
    model = build("cnn_lstm", seed=7)
    frame = RNG0.random((1, 1, 64, 64, 3))
    window = tensor(np.repeat(frame, 5, axis=1))
    out, _ = model.forward((window,), mode="eval")
    assert np.abs(out.data[0, 0] - out.data[0, 4]).max() > 1e-8


@pytest.mark.parametrize("kind", ["cnn_lstm", "advanced"])
def test_batch_permutation_independence(kind):
    model = build(kind, seed=2)
    ins = inputs_for(kind, b=3)
    out, _ = model.forward(ins, mode="eval")
    perm = [2, 0, 1]
    flipped = tuple(Tensor(x.data[perm]) for x in ins)
    out_p, _ = model.forward(flipped, mode="eval")
    np.testing.assert_allclose(out_p.data, out.data[perm], atol=1e-12)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_batch_equals_stacked_singles(kind):
    model = build(kind, seed=4)
    ins = inputs_for(kind, b=3)
    batch = predict(model, ins if len(ins) > 1 else ins[0])
    singles = []
    for i in range(3):
        parts = tuple(x[i] for x in ins)
        singles.append(predict(model, parts if len(parts) > 1 else parts[0]).data)
    np.testing.assert_allclose(batch.data, np.stack(singles), atol=1e-12)


@pytest.mark.parametrize("kind", ["cnn_lstm", "advanced"])
def test_predict_returns_last_step(kind):
    model = build(kind, seed=3)
    ins = inputs_for(kind)
    full, _ = model.forward(ins, mode="eval")
    got = predict(model, ins if len(ins) > 1 else ins[0])
    np.testing.assert_array_equal(got.data, full.data[:, 4, :])


def test_predict_deterministic():
    model = build("cnn")
    x = inputs_for("cnn")[0]
    assert predict(model, x) == predict(model, x)


@pytest.mark.parametrize("kind", ["cnn_lstm", "advanced"])
def test_head_forward_matches_full_forward(kind):
    model = build(kind, seed=6)
    ins = inputs_for(kind, b=2)
    win_img = ins[0]
    full, _ = model.forward(ins, mode="eval")
    flat = win_img.reshape(10, 64, 64, 3)
    embeds = model.embed_frames(flat).reshape(2, 5, 16)
    feats = ins[1] if kind == "advanced" else None
    via_head = model.head_forward(embeds, feats)
    np.testing.assert_allclose(via_head.data, full.data, atol=1e-12)


def test_frozen_params_survive_training_steps():
    model = build("advanced", seed=8)
    ins = inputs_for("advanced")
    target = tensor(np.zeros((2, 5, 3)))
    before = {(n, f): getattr(model.layers[n], f)
              for n in model.frozen for f in serial_fields(model.layers[n])
              if f not in ("running_mean", "running_var")}
    opt = OptimizerState(TrainConfig(epochs=1, learning_rate=0.1))
    for _ in range(3):
        out, ctx = model.forward(ins, mode="train")
        grads = model.backward(mae_grad(out, target), ctx)
        assert not any(name in model.frozen for name in grads)
        optimizer_step(opt, model, grads)
        model.apply_stat_updates(ctx)
    for (n, f), t in before.items():
        assert getattr(model.layers[n], f) == t, f"{n}.{f} drifted"
    # and the trainable layers did move
    assert model.layers["tdd"].weights != tensor(np.zeros((32, 3)))


def test_advanced_does_not_alias_base_params():
    base = build_cnn(Rng(0))
    model = build_advanced(base, Rng(1))
    opt = OptimizerState(TrainConfig(epochs=1, learning_rate=0.1))
    ins = inputs_for("advanced")
    out, ctx = model.forward(ins, mode="train")
    grads = model.backward(mae_grad(out, tensor(np.zeros((2, 5, 3)))), ctx)
    optimizer_step(opt, model, grads)
    # fc1 is trainable in the advanced model; the base must keep its copy
    assert base.layers["fc1"].weights == build_cnn(Rng(0)).layers["fc1"].weights


# --- persistence ---------------------------------------------------------------


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_save_load_round_trip(kind, tmp_path):
    model = build(kind, seed=11)
    path = tmp_path / f"{kind}.avnm"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.kind == kind
    assert loaded.frozen == model.frozen
    for name in model.layers:
        for f in serial_fields(model.layers[name]):
            assert getattr(loaded.layers[name], f) == getattr(model.layers[name], f), \
                f"{name}.{f} not preserved"
    ins = inputs_for(kind)
    a = predict(model, ins if len(ins) > 1 else ins[0])
    b = predict(loaded, ins if len(ins) > 1 else ins[0])
    assert a == b


def test_save_is_deterministic(tmp_path):
    model = build("cnn_lstm", seed=1)
    save_model(model, tmp_path / "a.avnm")
    save_model(model, tmp_path / "b.avnm")
    assert (tmp_path / "a.avnm").read_bytes() == (tmp_path / "b.avnm").read_bytes()


def test_load_missing_file():
    with pytest.raises(DataError, match="avnm"):
        load_model("/nonexistent/model.avnm")


def test_load_rejects_corruption(tmp_path):
    model = build("baseline")
    path = tmp_path / "m.avnm"
    save_model(model, path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0x40
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError):
        load_model(path)


def test_load_rejects_wrong_magic(tmp_path):
    path = tmp_path / "m.avnm"
    model = build("baseline")
    save_model(model, path)
    raw = bytearray(path.read_bytes())
    raw[:5] = b"NOPE!"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError):
        load_model(path)


def test_norm_stats_round_trip(tmp_path):
    from avaccel.features import fit_norm_stats
    model = build("baseline")
    model.norm_stats = fit_norm_stats(np.random.default_rng(0).random((10, 11)))
    path = tmp_path / "m.avnm"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.norm_stats is not None
    assert loaded.norm_stats.mean == model.norm_stats.mean
    assert loaded.norm_stats.std == model.norm_stats.std
