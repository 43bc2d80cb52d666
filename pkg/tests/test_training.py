"""MAE loss, optimizers, and the fit/evaluate loop."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from avaccel.datasets import ArrayDataset
from avaccel.errors import (ConfigError, DataError, NonFiniteError,
                            NumericError, ShapeError)
from avaccel.models import build_baseline
from avaccel.tensor import Rng, Tensor, tensor, zeros
from avaccel.training import (LossReport, OptimizerState, TrainConfig,
                              evaluate, fit, mae_grad, mae_loss,
                              optimizer_step)


def test_mae_identity_is_zero():
    t = tensor([[1.0, -2.0], [0.5, 3.0]])
    assert mae_loss(t, t) == 0.0


def test_mae_hand_example():
    assert mae_loss(tensor([1.0, 2.0, 3.0]), tensor([2.0, 2.0, 2.0])) == pytest.approx(2 / 3)


def test_mae_against_loop_oracle():
    rng = np.random.default_rng(0)
    pred = rng.standard_normal((100, 3))
    target = rng.standard_normal((100, 3))
    total = 0.0
    for i in range(100):
        for j in range(3):
            total += abs(pred[i, j] - target[i, j])
    want = total / 300
    assert abs(mae_loss(tensor(pred), tensor(target)) - want) < 1e-12


def test_mae_zero_only_at_equality():
    a = tensor([1.0, 2.0])
    b = tensor([1.0, 2.0 + 1e-15])
    assert mae_loss(a, b) > 0.0


@given(st.floats(-100, 100))
def test_mae_translation_invariance(c):
    rng = np.random.default_rng(42)
    pred = rng.standard_normal((5, 3))
    target = rng.standard_normal((5, 3))
    base = mae_loss(tensor(pred), tensor(target))
    shifted = mae_loss(tensor(pred + c), tensor(target + c))
    assert shifted == pytest.approx(base, abs=1e-12)


def test_mae_shape_and_empty_errors():
    with pytest.raises(ShapeError):
        mae_loss(zeros((2, 3)), zeros((3, 2)))
    with pytest.raises(ShapeError):
        mae_loss(tensor(np.zeros((0, 3))), tensor(np.zeros((0, 3))))


def test_mae_grad_convention():
    assert mae_grad(tensor([3.0]), tensor([1.0])).tolist() == [1.0]
    assert not mae_grad(tensor([2.0, 2.0]), tensor([2.0, 2.0])).data.any()
    g = mae_grad(tensor([[1.0, 5.0]]), tensor([[2.0, 2.0]]))
    assert g.tolist() == [[-0.5, 0.5]]


# --- optimizers -----------------------------------------------------------------


class OneLayer:
    """Minimal stand-in exposing the layer table the optimizer walks."""

    def __init__(self, weights, bias=None):
        from avaccel.layers import DenseParams
        self.layers = {"fc": DenseParams(weights=tensor(weights),
                                         bias=tensor(bias if bias is not None else [0.0]))}
        self.frozen = frozenset()


def test_sgd_hand_example():
    m = OneLayer([[1.0]])
    opt = OptimizerState(TrainConfig(epochs=1, optimizer="sgd", learning_rate=0.1))
    optimizer_step(opt, m, {"fc": {"weights": tensor([[2.0]]), "bias": tensor([0.0])}})
    assert m.layers["fc"].weights.tolist() == [[0.8]]


def test_sgd_zero_gradient_no_move():
    m = OneLayer([[1.5]])
    opt = OptimizerState(TrainConfig(epochs=1, optimizer="sgd", learning_rate=0.1))
    optimizer_step(opt, m, {"fc": {"weights": zeros((1, 1)), "bias": zeros((1,))}})
    assert m.layers["fc"].weights.tolist() == [[1.5]]


def test_adam_first_step_is_lr_signed():
    """Bias correction makes the first adam update ~ lr * sign(g)."""
    lr = 1e-3
    m = OneLayer([[2.0, -1.0]])
    opt = OptimizerState(TrainConfig(epochs=1, optimizer="adam", learning_rate=lr))
    g = tensor([[0.3, -7.0]])
    optimizer_step(opt, m, {"fc": {"weights": g, "bias": zeros((1,))}})
    got = m.layers["fc"].weights.data
    np.testing.assert_allclose(got, [[2.0 - lr, -1.0 + lr]], atol=lr * 1e-4)
    assert opt.step == 1


def test_adam_step_counter_increments():
    m = OneLayer([[0.0]])
    opt = OptimizerState(TrainConfig(epochs=1))
    for k in range(3):
        optimizer_step(opt, m, {"fc": {"weights": tensor([[1.0]]), "bias": tensor([1.0])}})
        assert opt.step == k + 1


def test_optimizer_missing_grad_rejected():
    m = OneLayer([[1.0]])
    opt = OptimizerState(TrainConfig(epochs=1))
    with pytest.raises(ShapeError, match="no gradients"):
        optimizer_step(opt, m, {})


def test_optimizer_shape_mismatch_rejected():
    m = OneLayer([[1.0]])
    opt = OptimizerState(TrainConfig(epochs=1))
    with pytest.raises(ShapeError):
        optimizer_step(opt, m, {"fc": {"weights": tensor([[1.0, 2.0]]),
                                       "bias": tensor([0.0])}})


# --- configuration ---------------------------------------------------------------


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=1, batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=1, learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=1, optimizer="rmsprop")
    with pytest.raises(ConfigError):
        TrainConfig(epochs=1, beta1=1.0)


def test_loss_report_validation():
    LossReport(epoch=1, train_mae=0.5, val_mae=0.25)
    with pytest.raises(NumericError):
        LossReport(epoch=1, train_mae=-0.1, val_mae=0.0)
    with pytest.raises(NumericError):
        LossReport(epoch=1, train_mae=float("nan"), val_mae=0.0)


# --- the training loop ------------------------------------------------------------


def linear_problem(n=32, seed=0):
    """y = X @ M with a fixed random M; learnable exactly by the baseline net."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 11))
    M = rng.standard_normal((11, 3)) * 0.1
    return ArrayDataset(X, X @ M)


def test_fit_single_sample_single_epoch():
    ds = linear_problem(n=1)
    model, reports = fit(build_baseline(Rng(0)), ds, ds,
                         TrainConfig(epochs=1, batch_size=1, seed=0))
    assert len(reports) == 1
    assert reports[0].epoch == 1


def test_fit_report_count_matches_epochs():
    ds = linear_problem()
    _, reports = fit(build_baseline(Rng(0)), ds, ds,
                     TrainConfig(epochs=7, batch_size=8, seed=1))
    assert [r.epoch for r in reports] == list(range(1, 8))


def test_fit_deterministic_given_seed():
    ds = linear_problem()
    cfg = TrainConfig(epochs=5, batch_size=8, seed=42)
    m1, r1 = fit(build_baseline(Rng(7)), ds, ds, cfg)
    m2, r2 = fit(build_baseline(Rng(7)), ds, ds, cfg)
    assert [(r.train_mae, r.val_mae) for r in r1] == \
        [(r.train_mae, r.val_mae) for r in r2]
    for name in m1.layers:
        assert m1.layers[name].weights == m2.layers[name].weights
        assert m1.layers[name].bias == m2.layers[name].bias


def test_fit_seed_changes_trajectory():
    ds = linear_problem()
    _, r1 = fit(build_baseline(Rng(7)), ds, ds, TrainConfig(epochs=3, seed=1))
    _, r2 = fit(build_baseline(Rng(7)), ds, ds, TrainConfig(epochs=3, seed=2))
    assert [r.train_mae for r in r1] != [r.train_mae for r in r2]


def test_fit_sgd_full_batch_loss_non_increasing():
    """Small-lr full-batch sgd on a linear target never increases the loss."""
    ds = linear_problem()
    cfg = TrainConfig(epochs=20, batch_size=32, seed=0, optimizer="sgd",
                      learning_rate=1e-4, shuffle=False)
    _, reports = fit(build_baseline(Rng(3)), ds, ds, cfg)
    losses = [r.train_mae for r in reports]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_fit_empty_dataset_rejected():
    ds = linear_problem()
    empty = ArrayDataset(np.zeros((0, 11)), np.zeros((0, 3)))
    with pytest.raises(DataError):
        fit(build_baseline(Rng(0)), empty, ds, TrainConfig(epochs=1))


def test_fit_max_steps_caps_optimizer_steps():
    ds = linear_problem(n=32)
    cfg = TrainConfig(epochs=50, batch_size=8, seed=0)  # 4 steps per epoch
    _, reports = fit(build_baseline(Rng(0)), ds, ds, cfg, max_steps=10)
    # 10 steps = 2.5 epochs -> the third epoch finishes its report, then stops
    assert len(reports) == 3


def test_fit_stop_at_train_mae():
    ds = linear_problem()
    cfg = TrainConfig(epochs=500, batch_size=8, seed=0)
    _, reports = fit(build_baseline(Rng(1)), ds, ds, cfg, stop_at_train_mae=0.15)
    assert reports[-1].train_mae < 0.15
    assert len(reports) < 500
    for r in reports[:-1]:
        assert r.train_mae >= 0.15


def test_fit_eval_every_thins_reports_keeps_final_epoch():
    ds = linear_problem()
    cfg = TrainConfig(epochs=7, batch_size=8, seed=0)
    _, reports = fit(build_baseline(Rng(0)), ds, ds, cfg, eval_every=3)
    assert [r.epoch for r in reports] == [3, 6, 7]


def test_fit_eval_every_reports_truncated_epoch():
    ds = linear_problem(n=32)
    cfg = TrainConfig(epochs=50, batch_size=8, seed=0)  # 4 steps per epoch
    _, reports = fit(build_baseline(Rng(0)), ds, ds, cfg, max_steps=10,
                     eval_every=2)
    # the step cap lands mid-epoch-3; that epoch is scored even off-cadence
    assert [r.epoch for r in reports] == [2, 3]


def test_fit_eval_every_does_not_change_weights():
    ds = linear_problem()
    cfg = TrainConfig(epochs=6, batch_size=8, seed=0)
    dense, _ = fit(build_baseline(Rng(3)), ds, ds, cfg)
    thin, _ = fit(build_baseline(Rng(3)), ds, ds, cfg, eval_every=5)
    for name in dense.layers:
        assert np.array_equal(dense.layers[name].weights.data,
                              thin.layers[name].weights.data)
        assert np.array_equal(dense.layers[name].bias.data,
                              thin.layers[name].bias.data)


def test_fit_eval_every_rejects_nonpositive():
    ds = linear_problem()
    cfg = TrainConfig(epochs=2, batch_size=8, seed=0)
    with pytest.raises(ConfigError, match="eval_every"):
        fit(build_baseline(Rng(0)), ds, ds, cfg, eval_every=0)


def test_fit_divergence_names_epoch_and_batch(monkeypatch):
    import avaccel.training as T

    def explode(state, model, grads):
        raise NonFiniteError("synthetic blow-up")

    monkeypatch.setattr(T, "optimizer_step", explode)
    ds = linear_problem()
    with pytest.raises(NumericError, match=r"epoch 1, batch 0") as err:
        fit(build_baseline(Rng(0)), ds, ds, TrainConfig(epochs=1, seed=0))
    assert err.value.epoch == 1
    assert err.value.batch == 0


def test_evaluate_matches_mae_loss():
    ds = linear_problem(n=20)
    model = build_baseline(Rng(5))
    pred, _ = model.forward((Tensor(ds.features),), mode="eval")
    want = mae_loss(pred, Tensor(ds.targets))
    assert evaluate(model, ds) == pytest.approx(want, abs=1e-15)


def test_evaluate_empty_rejected():
    with pytest.raises(DataError):
        evaluate(build_baseline(Rng(0)),
                 ArrayDataset(np.zeros((0, 11)), np.zeros((0, 3))))
