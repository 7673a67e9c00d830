"""Training loop and gradient checks."""

import numpy as np
import pytest

from ccgkit.nn import (
    GradCheckResult,
    LabeledSample,
    TrainConfig,
    build_model,
    grad_check,
    predict_value,
    train_model,
)


def _toy_samples(rng, count=60, n=4):
    """Labels are a simple set statistic the network can learn."""
    out = []
    for _ in range(count):
        xr = rng.uniform(0.0, 1.0, size=(n, 8))
        sr = rng.uniform(0.0, 1.0, size=(n, 8))
        label = float(3.0 * xr[:, 0].sum() - 2.0 * sr[:, 0].sum())
        out.append(LabeledSample(xr, sr, label))
    return out


def test_overfits_small_dataset():
    rng = np.random.default_rng(8)
    samples = _toy_samples(rng, count=60)
    model = build_model("knapsack", 8, 8, seed=0)
    cfg = TrainConfig(epochs=300, batch_size=16, checkpoint_every=10, seed=0)
    result = train_model(model, samples, cfg)
    assert result.best_val_mae < 0.25 * result.label_std
    assert result.best_epoch > 0
    assert len(result.curve) == 300


def test_shuffled_labels_cannot_be_learned():
    """With labels shuffled, validation error stays near the label spread."""
    rng = np.random.default_rng(8)
    samples = _toy_samples(rng, count=60)
    labels = np.array([s.label for s in samples])
    rng.shuffle(labels)
    shuffled = [LabeledSample(s.x_rows, s.xi_rows, float(y)) for s, y in zip(samples, labels)]

    cfg = TrainConfig(epochs=120, batch_size=16, checkpoint_every=10, seed=0)
    honest = train_model(build_model("knapsack", 8, 8, seed=0), samples, cfg)
    garbage = train_model(build_model("knapsack", 8, 8, seed=0), shuffled, cfg)
    assert garbage.best_val_mae > 2.0 * honest.best_val_mae


def test_training_deterministic_for_fixed_seed():
    rng = np.random.default_rng(3)
    samples = _toy_samples(rng, count=40)
    cfg = TrainConfig(epochs=12, batch_size=8, checkpoint_every=4, seed=5)
    r1 = train_model(build_model("knapsack", 8, 8, seed=2), samples, cfg)
    r2 = train_model(build_model("knapsack", 8, 8, seed=2), samples, cfg)
    assert r1.curve == r2.curve
    w1 = r1.model.value_net[0].weight
    w2 = r2.model.value_net[0].weight
    assert np.array_equal(w1, w2)


def test_best_checkpoint_is_restored():
    rng = np.random.default_rng(10)
    samples = _toy_samples(rng, count=50)
    cfg = TrainConfig(epochs=60, batch_size=16, checkpoint_every=10, seed=1)
    result = train_model(build_model("knapsack", 8, 8, seed=1), samples, cfg)
    checkpoint_rows = [r for r in result.curve if r["epoch"] % 10 == 0 or r["epoch"] == 60]
    best_row = min(checkpoint_rows, key=lambda r: r["val_mae"])
    assert result.best_epoch == best_row["epoch"]
    assert result.best_val_mae == pytest.approx(best_row["val_mae"])


def test_mixed_set_sizes_train_together():
    rng = np.random.default_rng(12)
    samples = _toy_samples(rng, count=30, n=3) + _toy_samples(rng, count=30, n=6)
    cfg = TrainConfig(epochs=30, batch_size=16, checkpoint_every=10, seed=0)
    result = train_model(build_model("knapsack", 8, 8, seed=0), samples, cfg)
    assert np.isfinite(result.best_val_mae)


def test_grad_check_random_models():
    """Analytic and numeric gradients agree to 1e-4 away from kinks."""
    rng = np.random.default_rng(42)
    checked = 0
    for seed in range(12):
        model = build_model("knapsack", 5, 5, seed=seed)
        xr = rng.uniform(0.05, 0.95, size=(3, 5))
        sr = rng.uniform(0.05, 0.95, size=(3, 5))
        sample = LabeledSample(xr, sr, float(rng.uniform(-1, 1)))
        res = grad_check(model, sample, step=1e-5)
        assert isinstance(res, GradCheckResult)
        if res.at_kink:
            continue
        checked += 1
        assert res.max_rel_error <= 1e-4, f"seed {seed}: {res.max_rel_error}"
    assert checked >= 6


def test_grad_check_flags_kink():
    """A pre-activation forced to zero must be reported as a subgradient point."""
    model = build_model("knapsack", 4, 4, seed=0)
    layer = model.x_encoder.element_net[0]
    layer.weight[...] = 0.0
    layer.bias[...] = 0.0  # every pre-activation is exactly at the kink
    xr = np.full((2, 4), 0.5)
    sr = np.full((2, 4), 0.5)
    res = grad_check(model, LabeledSample(xr, sr, 0.3))
    assert res.at_kink


def test_grad_check_step_bounds():
    model = build_model("knapsack", 4, 4, seed=0)
    s = LabeledSample(np.ones((2, 4)) * 0.4, np.ones((2, 4)) * 0.6, 0.1)
    with pytest.raises(ValueError):
        grad_check(model, s, step=1e-8)
    with pytest.raises(ValueError):
        grad_check(model, s, step=1e-2)
