import warnings

import numpy as np
import pytest

from tiprdc.baselines import (
    PCA,
    BaselineConfig,
    ZeroSensitivityWarning,
    build_autoencoder,
    dp_transform,
    feature_range,
    noisy_transform,
    run_baseline,
    train_autoencoder,
)
from tiprdc.datasets import SyntheticSpec, generate_synthetic
from tiprdc.nn import ConfigError


def test_noisy_std_matches_sigma():
    X = np.zeros((100000, 1))
    out = noisy_transform(X, 2.5, np.random.default_rng(0))
    assert out.std() == pytest.approx(2.5, rel=0.01)
    assert abs(out.mean()) < 0.05


def test_noisy_rejects_nonpositive_sigma():
    with pytest.raises(ConfigError):
        noisy_transform(np.zeros((2, 2)), 0.0, np.random.default_rng(0))


def test_laplace_mean_abs_matches_scale():
    X = np.zeros((100000, 1))
    out = dp_transform(X, epsilon=0.5, sensitivity=2.0, rng=np.random.default_rng(1))
    assert np.mean(np.abs(out)) == pytest.approx(4.0, rel=0.02)


def test_large_epsilon_approaches_identity():
    X = np.random.default_rng(0).standard_normal((50, 3))
    out = dp_transform(X, 1e9, feature_range(X), np.random.default_rng(1))
    np.testing.assert_allclose(out, X, atol=1e-6)


def test_zero_range_feature_warns_and_passes_through():
    X = np.column_stack([np.linspace(0, 1, 10), np.full(10, 3.0)])
    with pytest.warns(ZeroSensitivityWarning, match=r"\[1\]"):
        out = dp_transform(X, 1.0, feature_range(X), np.random.default_rng(0))
    np.testing.assert_array_equal(out[:, 1], 3.0)
    assert not np.allclose(out[:, 0], X[:, 0])


def test_pca_matches_eigh_oracle():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((500, 6)) @ rng.standard_normal((6, 6))
    pca = PCA.fit(Z, 3)
    np.testing.assert_allclose(pca.components @ pca.components.T, np.eye(3), atol=1e-12)
    evals, evecs = np.linalg.eigh(np.cov(Z, rowvar=False))
    evals, evecs = evals[::-1], evecs[:, ::-1]
    np.testing.assert_allclose(pca.explained_variance, evals, rtol=1e-10)
    assert pca.explained_ratio == pytest.approx(evals[:3].sum() / evals.sum(), rel=1e-12)
    for i in range(3):
        assert abs(pca.components[i] @ evecs[:, i]) == pytest.approx(1.0, abs=1e-8)


def test_pca_full_rank_explains_everything():
    Z = np.random.default_rng(1).standard_normal((40, 4))
    assert PCA.fit(Z, 4).explained_ratio == pytest.approx(1.0)


def test_pca_rejects_too_many_components():
    with pytest.raises(ConfigError, match="retained_dim"):
        PCA.fit(np.zeros((10, 3)), 4)


def test_linear_autoencoder_recovers_low_rank_data():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((256, 2)) @ rng.standard_normal((2, 5))
    ae = build_autoencoder(5, (4,), 2, "linear", np.random.default_rng(1))
    assert train_autoencoder(ae, X, 150, 1e-2, 32, np.random.default_rng(2)) < 1e-3


def test_config_validation():
    with pytest.raises(ConfigError):
        BaselineConfig("blur")
    with pytest.raises(ConfigError):
        BaselineConfig("dp", epsilon=0.0)


@pytest.mark.parametrize("kind", ["noisy", "dp", "encoder", "hybrid"])
def test_run_baseline_shapes_and_determinism(kind):
    ds = generate_synthetic(SyntheticSpec(n=300, seed=2))
    cfg = BaselineConfig(kind, sigma=1.0, encoder_epochs=2, encoder_dim=6, retained_dim=3, seed=5)
    a, b = run_baseline(cfg, ds), run_baseline(cfg, ds)
    assert a.train.shape[0] == len(ds.train) and a.test.shape[0] == len(ds.test)
    np.testing.assert_array_equal(a.train, b.train)
    np.testing.assert_array_equal(a.test, b.test)
    if kind == "hybrid":
        assert a.train.shape[1] == 3 and 0 < a.info["explained_ratio"] <= 1


def test_labels():
    assert BaselineConfig("dp", epsilon=0.1).label == "dp@eps=0.1"
    assert BaselineConfig("noisy", sigma=40).label == "noisy@sigma=40"


def test_dp_baseline_records_warnings_without_raising():
    ds = generate_synthetic(SyntheticSpec(n=100))
    ds.train.X[:, 0] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = run_baseline(BaselineConfig("dp", epsilon=1.0), ds)
    assert out.info["warnings"]
