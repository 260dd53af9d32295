import numpy as np
import pytest

from percade.baselines import (BaselineError, MLP, cascade_features, fit_linear,
                               fit_mlp, linear_mse, mlp_mse, predict_linear,
                               run_baselines, user_features)
from percade.data import (Cascade, SynthConfig, observe_prefix, split_cascades,
                          synth_generate)
from percade.graphs import Graph, structural_features
from percade.data import Dataset


def _toy_dataset():
    g = Graph(4, [(0, 1), (1, 2), (2, 3), (0, 2)])
    feats = structural_features(g)
    cascades = [Cascade("c0", [0, 1, 2], observed_len=2),
                Cascade("c1", [3, 2], observed_len=1)]
    traits = np.random.default_rng(0).uniform(20, 80, size=(4, 5))
    return Dataset(g, feats, cascades, traits,
                   {"c0": "train", "c1": "test"})


def test_user_features_shape_and_symmetry():
    g = Graph(3, [(0, 1), (1, 2), (0, 2)])
    ds = Dataset(g, structural_features(g),
                 [Cascade("c", [0], observed_len=1)],
                 np.full((3, 5), 50.0), {"c": "train"})
    rows = user_features(ds)
    assert rows.shape == (3, 6)
    # triangle symmetry: all rows identical
    assert np.allclose(rows, rows[0], atol=1e-9)


def test_cascade_features_singleton_prefix():
    ds = _toy_dataset()
    row = cascade_features(ds, ds.cascades[1])
    assert row.shape == (7,)
    assert row[0] == 1.0
    assert np.array_equal(row[1:], ds.features[3])


def test_cascade_features_mean_oracle():
    ds = _toy_dataset()
    row = cascade_features(ds, ds.cascades[0])
    expected = ds.features[[0, 1]].mean(axis=0)
    assert row[0] == 2.0
    assert np.allclose(row[1:], expected, atol=1e-15)


def test_cascade_features_need_prefix():
    ds = _toy_dataset()
    with pytest.raises(BaselineError):
        cascade_features(ds, Cascade("x", [0, 1]))


# ---------------------------------------------------------------------------
# ridge regression


def test_linear_recovers_exact_line():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(30, 3))
    y = 2.0 * x[:, 0] + 1.0
    w = fit_linear(x, y)
    assert abs(w[0] - 2.0) < 1e-6
    assert abs(w[1]) < 1e-6 and abs(w[2]) < 1e-6
    assert abs(w[3] - 1.0) < 1e-6
    assert linear_mse(w, x, y) <= 1e-8


def test_linear_noiseless_targets_fit_below_1e8():
    rng = np.random.default_rng(7)
    for _ in range(10):
        x = rng.normal(size=(25, 4))
        coef = rng.normal(size=4)
        y = x @ coef + rng.normal()
        w = fit_linear(x, y)
        assert linear_mse(w, x, y) <= 1e-8


def test_linear_constant_targets():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(20, 4))
    w = fit_linear(x, np.full(20, 7.5))
    assert np.max(np.abs(w[:4])) < 1e-6
    assert abs(w[4] - 7.5) < 1e-6


def test_linear_matches_independent_solver():
    # oracle: least squares on the ridge-augmented system via numpy lstsq
    rng = np.random.default_rng(3)
    x = rng.normal(size=(20, 6))
    y = rng.normal(size=20)
    ridge = 1e-8
    w = fit_linear(x, y, ridge)
    xb = np.column_stack([x, np.ones(20)])
    aug = np.vstack([xb, np.sqrt(ridge) * np.eye(7)])
    target = np.concatenate([y, np.zeros(7)])
    w_oracle, *_ = np.linalg.lstsq(aug, target, rcond=None)
    assert np.max(np.abs(w - w_oracle)) < 1e-8


def test_linear_multioutput():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(25, 3))
    y = np.column_stack([x @ [1.0, -2.0, 0.5] + 3.0, x @ [0.0, 1.0, 1.0]])
    w = fit_linear(x, y)
    assert np.max(np.abs(predict_linear(w, x) - y)) < 1e-6


def test_linear_needs_two_rows():
    with pytest.raises(BaselineError):
        fit_linear(np.ones((1, 2)), np.ones(1))


# ---------------------------------------------------------------------------
# mlp


def test_mlp_zero_epochs_returns_init():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(10, 3))
    y = rng.normal(size=10)
    a = fit_mlp(x, y, epochs=0, seed=9)
    b = MLP(3, 1, 16, seed=9)
    for pa, pb in zip(a.params(), b.params()):
        assert np.array_equal(pa.data, pb.data)


def test_mlp_beats_linear_on_xor():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 4)
    y = np.array([0.0, 1.0, 1.0, 0.0] * 4)
    w = fit_linear(x, y)
    model = fit_mlp(x, y, hidden=8, epochs=600, learning_rate=5e-2, seed=1)
    assert mlp_mse(model, x, y) < linear_mse(w, x, y)


def test_mlp_seeded_reproducible():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(12, 4))
    y = rng.normal(size=12)
    a = fit_mlp(x, y, epochs=50, seed=3)
    b = fit_mlp(x, y, epochs=50, seed=3)
    for pa, pb in zip(a.params(), b.params()):
        assert np.array_equal(pa.data, pb.data)


# ---------------------------------------------------------------------------
# the full baseline table


def test_run_baselines_on_synthetic():
    cfg = SynthConfig(nodes=40, ba_m=2, cascades=30, base_prob=0.2,
                      w_e=0.4, w_n=0.4, seed=6)
    ds = synth_generate(cfg)
    ds.cascades = [observe_prefix(c, 0.5) for c in ds.cascades]
    ds.split = split_cascades(ds.cascades, 0.2, 0.2, seed=6)
    out = run_baselines(ds, mlp_epochs=50)
    assert set(out) == {"cascade_linear", "cascade_mlp", "trait_linear", "trait_mlp"}
    for rec in out.values():
        assert rec.rmrse >= 0.0 and rec.mape >= 0.0
        assert np.isfinite(rec.rmrse) and np.isfinite(rec.mape)


def test_feature_extraction_pure():
    ds = _toy_dataset()
    a = cascade_features(ds, ds.cascades[0])
    b = cascade_features(ds, ds.cascades[0])
    assert np.array_equal(a, b)
