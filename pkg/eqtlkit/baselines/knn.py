"""K-nearest-neighbor imputation of missing responses, and MT fitted on the imputed matrix."""
from __future__ import annotations
import logging

import numpy as np
from sklearn.metrics.pairwise import nan_euclidean_distances

from eqtlkit.DataSet import DataSet
from eqtlkit.baselines.mt import fit_mt
from eqtlkit.config import PenaltyConfig, SolverConfig

LOGGER = logging.getLogger(__name__)

DEFAULT_NEIGHBORS = 20


def knn_impute(data: DataSet, k: int = DEFAULT_NEIGHBORS) -> np.ndarray:
    """Fill y_ij by the inverse-distance weighted mean of column j over the k nearest subjects observing j.

    Distances are Euclidean over the columns both subjects observe, scaled up by
    q / (number of shared columns). Ties in distance go to the lower subject index.
    Neighbors at distance zero are averaged with equal weights.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    completed = data.observed_Y()
    if data.is_complete:
        return completed
    D = nan_euclidean_distances(np.where(data.mask, data.Y, np.nan))
    col_means = data.observed_column_means()
    fallbacks = 0
    for i in np.flatnonzero(~data.mask.all(axis=1)):
        donors_any = np.isfinite(D[i])
        donors_any[i] = False
        for j in data.missing_index(i):
            donors = np.flatnonzero(donors_any & data.mask[:, j])
            if len(donors) == 0:
                completed[i, j] = col_means[j]
                fallbacks += 1
                continue
            dist = D[i, donors]
            nearest = np.argsort(dist, kind="stable")[:k]
            dist, values = dist[nearest], data.Y[donors[nearest], j]
            if np.any(dist == 0):
                completed[i, j] = values[dist == 0].mean()
            else:
                w = 1.0 / dist
                completed[i, j] = float(w @ values) / w.sum()
    if fallbacks:
        LOGGER.info("%d missing entries had no neighbor sharing an observed column; used column means", fallbacks)
    return completed


def fit_knn_mt(
    data: DataSet,
    pen: PenaltyConfig,
    cfg: SolverConfig = SolverConfig(),
    k: int = DEFAULT_NEIGHBORS,
) -> np.ndarray:
    """MT with constant weights on the KNN-completed response matrix."""
    return fit_mt(data.with_responses(knn_impute(data, k)), pen, cfg)
