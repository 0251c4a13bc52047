import logging

import numpy as np
import pytest

from arpolib.cluster import (
    ClusterConfig,
    ClusterModel,
    ExtractorConfig,
    FeatureExtractor,
    assign_cluster,
    cluster_montage,
    fit_cluster_model,
    fit_gmm,
    load_cluster_model,
    responsibilities,
    save_cluster_model,
)
from arpolib.internal.errors import ConfigurationError, ShapeError
from arpolib.world import LevelSpec, WorldConfig, make_env, make_state_mask


def purity(clusters, labels):
    total = 0
    for cluster in np.unique(clusters):
        members = labels[clusters == cluster]
        total += np.bincount(members).max()
    return total / len(labels)


def two_blobs(seed=0, n=50):
    rng = np.random.default_rng(seed)
    first = rng.normal(0.0, 1.0, size=(n, 2))
    second = rng.normal(0.0, 1.0, size=(n, 2)) + np.array([100.0, 0.0])
    return np.concatenate([first, second]), np.repeat([0, 1], n)


def style_observations(per_style=30):
    config = WorldConfig(
        n_styles=4,
        grid_size=4,
        image_size=16,
        train_styles=[0, 1, 2],
        test_styles=[3],
    )
    env = make_env(config)
    rng = np.random.default_rng(0)
    images, labels = [], []
    for style in config.train_styles:
        for index in range(per_style):
            env.reset(LevelSpec(index, style, dynamic_phase=int(rng.integers(64))))
            for _ in range(int(rng.integers(4))):
                if env.done:
                    break
                env.step(int(rng.integers(5)))
            images.append(env.observe().image)
            labels.append(style)
    return np.stack(images), np.array(labels)


def test_extractor_is_deterministic():
    images, _ = style_observations(per_style=2)
    first = FeatureExtractor(ExtractorConfig(seed=3))(images)
    second = FeatureExtractor(ExtractorConfig(seed=3))(images)

    assert first.shape == (6, 64)
    assert first.dtype == np.float64
    assert np.array_equal(first, second)


def test_extractor_accepts_single_image():
    images, _ = style_observations(per_style=1)
    extractor = FeatureExtractor()

    assert np.array_equal(extractor(images[0]), extractor(images[:1]))


def test_extractor_histograms_are_normalized():
    images, _ = style_observations(per_style=1)
    config = ExtractorConfig(dim=40, histogram_bins=8)
    features = FeatureExtractor(config)(images)
    histograms = features[:, config.conv_dim :].reshape(len(images), 3, 8)

    np.testing.assert_allclose(histograms.sum(axis=2), 1.0)


def test_extractor_config_needs_conv_features():
    with pytest.raises(ConfigurationError):
        ExtractorConfig(dim=24, histogram_bins=8)


def test_pixel_mask_ignores_other_pixels():
    mask = make_state_mask(4, 4)
    extractor = FeatureExtractor(ExtractorConfig(pixel_mask=mask.tolist()))
    images, _ = style_observations(per_style=1)
    changed = images.copy()
    changed[:, ~mask] = 0.5

    assert np.array_equal(extractor(images), extractor(changed))


def test_pixel_mask_shape_is_checked():
    extractor = FeatureExtractor(ExtractorConfig(pixel_mask=np.ones((8, 8), bool).tolist()))
    with pytest.raises(ShapeError):
        extractor(np.zeros((2, 16, 16, 3), dtype=np.float32))


def test_extractor_rejects_non_rgb():
    with pytest.raises(ShapeError):
        FeatureExtractor()(np.zeros((2, 16, 16), dtype=np.float32))


def test_separated_blobs_are_recovered():
    features, labels = two_blobs()
    model = fit_gmm(features, n_clusters=2, seed=0)

    assert purity(model.predict(features), labels) == 1.0
    assert model.weights.sum() == pytest.approx(1.0, abs=1e-8)
    assert np.all(model.variances >= ClusterConfig().var_floor)


def test_log_likelihood_is_monotone():
    features, _ = two_blobs(seed=1)
    rng = np.random.default_rng(1)
    features = np.concatenate([features, rng.normal(50.0, 20.0, size=(40, 2))])
    model = fit_gmm(features, n_clusters=3, seed=2)

    history = np.array(model.history)
    assert len(history) >= 2
    assert np.all(np.diff(history) >= -1e-8 * np.maximum(1.0, np.abs(history[:-1])))


def test_refit_is_identical():
    features, _ = two_blobs(seed=4)
    first = fit_gmm(features, n_clusters=2, seed=7)
    second = fit_gmm(features, n_clusters=2, seed=7)

    assert np.array_equal(first.means, second.means)
    assert np.array_equal(first.variances, second.variances)
    assert first.history == second.history


def test_degenerate_components_reduce_clusters(caplog):
    features = np.repeat([[0.0, 0.0], [1.0, 1.0]], 10, axis=0)
    with caplog.at_level(logging.WARNING, logger="arpolib"):
        model = fit_gmm(features, n_clusters=3, seed=0, config=ClusterConfig(n_init=2))

    assert model.n_clusters == 2
    assert "reducing the number of clusters from 3 to 2" in caplog.text


def test_identical_points_collapse_to_one_cluster(caplog):
    features = np.full((20, 3), 0.5)
    config = ClusterConfig(n_init=2)
    with caplog.at_level(logging.WARNING, logger="arpolib"):
        model = fit_gmm(features, n_clusters=3, seed=0, config=config)

    assert model.n_clusters == 1
    assert "from 3 to 2" in caplog.text and "from 2 to 1" in caplog.text
    np.testing.assert_allclose(model.means, [[0.5, 0.5, 0.5]])
    np.testing.assert_allclose(model.variances, config.var_floor)
    assert np.all(model.predict(features) == 0)


def test_ties_go_to_lower_index():
    model = ClusterModel(
        weights=np.array([0.5, 0.5]),
        means=np.zeros((2, 3)),
        variances=np.ones((2, 3)),
    )
    features = np.random.default_rng(0).normal(size=(10, 3))

    np.testing.assert_allclose(model.feature_responsibilities(features), 0.5)
    assert np.all(model.predict(features) == 0)


def test_responsibilities_reject_wrong_dimension():
    model = ClusterModel(np.array([1.0]), np.zeros((1, 3)), np.ones((1, 3)))
    with pytest.raises(ShapeError):
        model.feature_responsibilities(np.zeros((4, 2)))


def test_world_styles_are_recovered():
    images, labels = style_observations()
    model = fit_cluster_model(
        images, FeatureExtractor(), seed=0, config=ClusterConfig(n_clusters=3)
    )

    clusters = assign_cluster(model, images)
    assert clusters.shape == (len(images),)
    assert purity(clusters, labels) >= 0.9
    assert isinstance(assign_cluster(model, images[0]), int)
    np.testing.assert_allclose(responsibilities(model, images).sum(axis=1), 1.0)


def test_cluster_model_save_load(tmp_path):
    images, _ = style_observations(per_style=10)
    config = ClusterConfig(n_clusters=3, n_init=2)
    model = fit_cluster_model(images, FeatureExtractor(ExtractorConfig(seed=5)), 0, config)
    save_cluster_model(model, tmp_path / "cluster.npz")
    loaded = load_cluster_model(tmp_path / "cluster.npz")

    assert loaded.extractor.config == model.extractor.config
    assert loaded.history == model.history
    assert np.array_equal(assign_cluster(loaded, images), assign_cluster(model, images))


def test_cluster_montage(tmp_path):
    images, _ = style_observations(per_style=5)
    config = ClusterConfig(n_clusters=3, n_init=2)
    model = fit_cluster_model(images, FeatureExtractor(), 0, config)
    clusters = cluster_montage(model, images, tmp_path / "montage.png", per_cluster=4)

    assert (tmp_path / "montage.png").stat().st_size > 0
    assert clusters.shape == (len(images),)
