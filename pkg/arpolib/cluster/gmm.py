import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from scipy.special import logsumexp

from arpolib.cluster.extractor import ExtractorConfig, FeatureExtractor
from arpolib.cluster.extractor_base import FeatureExtractorBase, extract_features
from arpolib.internal.errors import (
    CheckpointError,
    ClusteringError,
    ConfigurationError,
    ShapeError,
)

__all__ = [
    "ClusterConfig",
    "ClusterModel",
    "fit_gmm",
    "fit_cluster_model",
    "responsibilities",
    "assign_cluster",
    "save_cluster_model",
    "load_cluster_model",
]

logger = logging.getLogger(__name__)

CLUSTER_FORMAT_VERSION = 1
# A component holding less than this many points' worth of responsibility is empty.
EMPTY_COMPONENT_MASS = 0.5
DUPLICATE_TOLERANCE = 1e-6
# Relative slack of the log-likelihood monotonicity check, absorbs rounding only.
MONOTONICITY_SLACK = 1e-8


@dataclass
class ClusterConfig:
    """
    Config for the Gaussian mixture

    n_clusters: requested number of components.
    max_iter: maximum number of EM iterations of a single run.
    tol: EM stops when the mean log-likelihood improves by less than tol.
    n_init: number of k-means++ seeded runs, the most likely one is kept.
    var_floor: lower bound of every variance.
    max_retries: re-initialisations of degenerate components before
        the number of components is reduced.
    """

    n_clusters: int = 3
    max_iter: int = 200
    tol: float = 1e-6
    n_init: int = 10
    var_floor: float = 1e-6
    max_retries: int = 3

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ConfigurationError(
                f"Number of clusters has to be positive, got {self.n_clusters}."
            )
        if self.max_iter < 1 or self.n_init < 1:
            raise ConfigurationError("EM needs at least one run of one iteration.")
        if self.var_floor <= 0:
            raise ConfigurationError(
                f"Variance floor has to be positive, got {self.var_floor}."
            )
        if self.max_retries < 0:
            raise ConfigurationError(
                f"Number of retries cannot be negative, got {self.max_retries}."
            )


@dataclass
class ClusterModel:
    """
    Diagonal Gaussian mixture over extractor features.

    weights: (k,) mixing weights summing to 1.
    means: (k, d) component means.
    variances: (k, d) diagonal covariances, floored.
    extractor: extractor producing the features, None for raw feature models.
    log_likelihood: mean log-likelihood of the training features.
    history: mean log-likelihood after every EM iteration of the kept run.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    extractor: Optional[FeatureExtractorBase] = None
    log_likelihood: float = float("-inf")
    history: List[float] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def feature_responsibilities(self, features: np.ndarray) -> np.ndarray:
        """
        :param features: (n, d) features.
        :return: (n, k) posterior component probabilities, rows sum to 1.
        """
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.dim:
            raise ShapeError(
                f"Expected features of shape (n, {self.dim}), got {features.shape}."
            )
        log_joint = _log_joint(features, self.weights, self.means, self.variances)
        return np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))

    def predict(self, features: np.ndarray) -> np.ndarray:
        """
        :return: (n,) most probable components, ties resolved to the lower index.
        """
        return np.argmax(self.feature_responsibilities(features), axis=1)


def _log_joint(x, weights, means, variances) -> np.ndarray:
    """
    :return: (n, k) log p(x, component).
    """
    log_normaliser = np.sum(np.log(2.0 * np.pi * variances), axis=1)
    distances = np.sum((x[:, None, :] - means[None]) ** 2 / variances[None], axis=2)
    return np.log(weights)[None] - 0.5 * (log_normaliser[None] + distances)


def _kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        distances = np.min(
            np.sum((x[:, None, :] - np.array(centers)[None]) ** 2, axis=2), axis=1
        )
        total = distances.sum()
        probabilities = distances / total if total > 0 else None
        centers.append(x[rng.choice(len(x), p=probabilities)])
    return np.array(centers)


def _degenerate_components(
    weights: np.ndarray, means: np.ndarray, variances: np.ndarray, n_points: int
) -> List[int]:
    """
    :return: Components which are empty or duplicate a lower-indexed component.
    """
    atol = DUPLICATE_TOLERANCE * (1.0 + np.max(np.abs(means)))
    degenerate = []
    for i in range(len(weights)):
        if weights[i] * n_points < EMPTY_COMPONENT_MASS:
            degenerate.append(i)
            continue
        for j in range(i):
            if np.allclose(means[i], means[j], rtol=0.0, atol=atol) and np.allclose(
                variances[i], variances[j], rtol=0.0, atol=atol
            ):
                degenerate.append(i)
                break
    return degenerate


def _em_run(
    x: np.ndarray,
    k: int,
    config: ClusterConfig,
    rng: np.random.Generator,
) -> Optional[ClusterModel]:
    """
    One k-means++ seeded EM run.
    :return: Fitted mixture, None if degenerate components survived every retry.
    """
    n_points = len(x)
    global_variance = np.maximum(x.var(axis=0), config.var_floor)
    means = _kmeans_plus_plus(x, k, rng)
    variances = np.tile(global_variance, (k, 1))
    weights = np.full(k, 1.0 / k)
    retries = 0
    history: List[float] = []

    for _ in range(config.max_iter):
        log_joint = _log_joint(x, weights, means, variances)
        log_marginal = logsumexp(log_joint, axis=1)
        log_likelihood = float(log_marginal.mean())
        if history:
            previous = history[-1]
            if log_likelihood < previous - MONOTONICITY_SLACK * max(1.0, abs(previous)):
                raise ClusteringError(
                    f"EM log-likelihood decreased from {previous} to {log_likelihood}."
                )
        history.append(log_likelihood)
        if len(history) > 1 and log_likelihood - history[-2] < config.tol:
            break

        resp = np.exp(log_joint - log_marginal[:, None])
        mass = resp.sum(axis=0)
        safe_mass = np.maximum(mass, np.finfo(np.float64).tiny)
        weights = mass / n_points
        means = resp.T @ x / safe_mass[:, None]
        variances = np.stack(
            [resp[:, j] @ (x - means[j]) ** 2 / safe_mass[j] for j in range(k)]
        )
        variances = np.maximum(variances, config.var_floor)

        degenerate = _degenerate_components(weights, means, variances, n_points)
        if degenerate:
            retries += 1
            if retries > config.max_retries:
                return None
            for component in degenerate:
                means[component] = x[rng.integers(n_points)]
                variances[component] = global_variance
            weights = np.full(k, 1.0 / k)
            history = []
    return ClusterModel(
        weights=weights / weights.sum(),
        means=means,
        variances=variances,
        log_likelihood=history[-1] if history else float("-inf"),
        history=history,
    )


def fit_gmm(
    features: np.ndarray,
    n_clusters: Optional[int] = None,
    seed: int = 0,
    config: ClusterConfig = ClusterConfig(),
    extractor: Optional[FeatureExtractorBase] = None,
) -> ClusterModel:
    """
    Fit a diagonal Gaussian mixture with EM.
    Every run is seeded with k-means++, the run with the highest likelihood is kept.
    When degenerate components survive all retries of every run the number
    of components is reduced by one and a warning is logged.

    :param features: (n, d) features.
    :param n_clusters: Requested number of components, config.n_clusters by default.
    :param seed: Seed of the initialisation.
    :param config: Mixture configuration.
    :param extractor: Extractor the features came from, stored in the model.
    :return: Fitted model, identical for identical features and seed.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ShapeError(f"Expected non-empty features of shape (n, d), got {x.shape}.")
    k = config.n_clusters if n_clusters is None else n_clusters
    if k < 1:
        raise ConfigurationError(f"Number of clusters has to be positive, got {k}.")
    rng = np.random.default_rng(seed)

    while True:
        best = None
        if k <= len(x):
            for _ in range(config.n_init):
                model = _em_run(x, k, config, rng)
                if model is not None and (
                    best is None or model.log_likelihood > best.log_likelihood
                ):
                    best = model
        if best is not None:
            break
        if k == 1:
            raise ClusteringError("Could not fit even a single mixture component.")
        logger.warning(
            f"Degenerate components persisted after {config.max_retries} retries, "
            f"reducing the number of clusters from {k} to {k - 1}"
        )
        k -= 1

    best.extractor = extractor
    logger.debug(
        f"Fitted {k} clusters, log-likelihood {best.log_likelihood:.6f} "
        f"after {len(best.history)} iterations"
    )
    return best


def fit_cluster_model(
    images: np.ndarray,
    extractor: FeatureExtractorBase,
    seed: int = 0,
    config: ClusterConfig = ClusterConfig(),
) -> ClusterModel:
    """
    Extract features of the images and fit a mixture on them.
    """
    return fit_gmm(
        extract_features(extractor, images),
        config.n_clusters,
        seed,
        config,
        extractor,
    )


def responsibilities(model: ClusterModel, images: np.ndarray) -> np.ndarray:
    """
    :param model: Cluster model with an extractor.
    :param images: Batch (n, H, W, 3) or single image.
    :return: (n, k) posterior probabilities.
    """
    if model.extractor is None:
        raise ClusteringError("The cluster model has no feature extractor.")
    return model.feature_responsibilities(extract_features(model.extractor, images))


def assign_cluster(model: ClusterModel, images: np.ndarray) -> Union[int, np.ndarray]:
    """
    :param model: Cluster model with an extractor.
    :param images: Single image (H, W, 3) or batch (n, H, W, 3).
    :return: Cluster of the image, or (n,) clusters of the batch.
        Ties go to the lower index.
    """
    clusters = np.argmax(responsibilities(model, images), axis=1)
    return int(clusters[0]) if np.ndim(images) == 3 else clusters


def save_cluster_model(model: ClusterModel, path: Union[str, Path]):
    """
    Only models without an extractor or with a ``FeatureExtractor`` can be saved.
    """
    if model.extractor is not None and not isinstance(model.extractor, FeatureExtractor):
        raise CheckpointError(
            f"Cannot save an extractor of type {type(model.extractor).__name__}."
        )
    extractor = "" if model.extractor is None else json.dumps(model.extractor.describe())
    with open(path, "wb") as f:
        np.savez(
            f,
            format_version=CLUSTER_FORMAT_VERSION,
            weights=model.weights,
            means=model.means,
            variances=model.variances,
            log_likelihood=model.log_likelihood,
            history=np.array(model.history, dtype=np.float64),
            extractor=extractor,
        )


def load_cluster_model(path: Union[str, Path]) -> ClusterModel:
    """
    :raises CheckpointError: if the file has another format version.
    """
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != CLUSTER_FORMAT_VERSION:
            raise CheckpointError(
                f"Cluster file {path} has format version {version}, "
                f"this library reads version {CLUSTER_FORMAT_VERSION}."
            )
        extractor = str(data["extractor"])
        return ClusterModel(
            weights=data["weights"],
            means=data["means"],
            variances=data["variances"],
            extractor=(
                FeatureExtractor(ExtractorConfig(**json.loads(extractor)))
                if extractor
                else None
            ),
            log_likelihood=float(data["log_likelihood"]),
            history=data["history"].tolist(),
        )
