from pathlib import Path
from typing import Union

import numpy as np
from matplotlib.figure import Figure

from arpolib.cluster.gmm import ClusterModel, assign_cluster
from arpolib.internal.image import check_image_batch

__all__ = ["cluster_montage"]


def cluster_montage(
    model: ClusterModel,
    images: np.ndarray,
    path: Union[str, Path],
    per_cluster: int = 8,
) -> np.ndarray:
    """
    Save a PNG with one row of sample observations per cluster.

    :param model: Cluster model with an extractor.
    :param images: Observations to pick the samples from.
    :param path: Destination PNG file.
    :param per_cluster: Number of samples shown per cluster.
    :return: (n,) cluster of every image.
    """
    images = check_image_batch(images)
    clusters = np.atleast_1d(assign_cluster(model, images))
    figure = Figure(figsize=(per_cluster, model.n_clusters + 0.5))
    axes = figure.subplots(model.n_clusters, per_cluster, squeeze=False)
    for cluster in range(model.n_clusters):
        members = np.flatnonzero(clusters == cluster)[:per_cluster]
        axes[cluster, 0].set_ylabel(f"cluster {cluster}")
        for column in range(per_cluster):
            axis = axes[cluster, column]
            axis.set_xticks([])
            axis.set_yticks([])
            if column < len(members):
                axis.imshow(np.clip(images[members[column]], 0.0, 1.0))
    figure.tight_layout()
    figure.savefig(path)
    return clusters
