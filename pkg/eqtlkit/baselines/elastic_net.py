"""Tissue-by-tissue elastic net tuned per response on a validation set."""
from __future__ import annotations
import logging
import warnings
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import Field, validator
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import enet_path

from eqtlkit.BaseModel import BaseModel
from eqtlkit.DataSet import DataSet, HoldoutSet
from eqtlkit.array_types import Matrix, MaskedVector, NonNegativeFloat, PositiveInt, UnitInterval
from eqtlkit.metrics import column_r2

LOGGER = logging.getLogger(__name__)


class EnGrid(BaseModel):
    """Per-response tuning grid. Without explicit `lambdas`, each (response, alpha) gets
    `n_lambdas` log-spaced values from its null threshold down by `lambda_ratio`."""

    alphas: List[UnitInterval] = [0.25, 0.5, 0.75, 1.0]
    lambdas: Optional[List[NonNegativeFloat]] = None
    n_lambdas: PositiveInt = 20
    lambda_ratio: float = Field(1e-3, gt=0.0, lt=1.0)
    tol: float = Field(1e-7, gt=0.0)
    max_iter: PositiveInt = 10000

    @validator("alphas")
    def nonempty(cls, v):
        if not v:
            raise ValueError("At least one alpha is required")
        return sorted(set(v))


class ElasticNetFit(BaseModel):
    beta: Matrix
    alpha: MaskedVector = Field(title="Selected mixing parameter per response")
    lambda_: MaskedVector = Field(title="Selected penalty per response, in standardized units")
    valid_r2: MaskedVector = Field(title="Validation R2 of the selected point per response")
    intercept: MaskedVector = Field(title="Intercept of the selected point per response, on the scale of data.Y")
    flagged: List[int] = Field([], title="Responses without observed validation entries (zero weights)")


def _standardize(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and scale over the given rows only."""
    center = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - center) / sd, center, sd


def en_null_threshold(X, y, alpha: float) -> float:
    """Smallest lambda with an all-zero elastic net solution, in the units of the standardized X."""
    Xs, _, _ = _standardize(np.asarray(X, dtype=float))
    if alpha <= 0:
        return np.inf
    y = np.asarray(y, dtype=float)
    return float(np.abs(Xs.T @ (y - y.mean())).max()) / (len(y) * alpha)


def _column_path(Xs: np.ndarray, y: np.ndarray, alpha: float, lambdas: np.ndarray, grid: EnGrid) -> np.ndarray:
    """Coefficients (p x len(lambdas)) along a descending lambda path; zero lambda is least squares."""
    coefs = np.zeros((Xs.shape[1], len(lambdas)))
    positive = lambdas > 0
    if positive.any():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            _, path, _ = enet_path(
                Xs, y, l1_ratio=alpha, alphas=lambdas[positive], tol=grid.tol, max_iter=grid.max_iter
            )
        coefs[:, positive] = path
    if (~positive).any():
        coefs[:, ~positive] = np.linalg.lstsq(Xs, y, rcond=None)[0][:, None]
    return coefs


def _fit_column(
    k: int, data: DataSet, valid: HoldoutSet, grid: EnGrid
) -> Tuple[np.ndarray, float, float, float, float]:
    rows = data.mask[:, k]
    X_k, y_k = data.X[rows], data.Y[rows, k]
    vrows = valid.mask[:, k]
    if not vrows.any():
        return np.zeros(data.p), np.nan, np.nan, np.nan, np.nan
    Xs, x_center, sd = _standardize(X_k)
    baseline = float(y_k.mean())
    best: Tuple[float, float, float] = (-np.inf, -np.inf, -np.inf)
    best_beta, best_intercept = np.zeros(data.p), baseline
    for alpha in grid.alphas:
        if grid.lambdas is not None:
            lambdas = np.sort(np.asarray(grid.lambdas, dtype=float))[::-1]
        else:
            lam_max = en_null_threshold(X_k, y_k, alpha) if alpha > 0 else en_null_threshold(X_k, y_k, 1.0)
            lambdas = lam_max * np.logspace(0, np.log10(grid.lambda_ratio), grid.n_lambdas)
        coefs = _column_path(Xs, y_k - baseline, alpha, lambdas, grid) / sd[:, None]
        intercepts = baseline - x_center @ coefs
        preds = valid.X[vrows] @ coefs + intercepts
        for i, lam in enumerate(lambdas):
            r2 = column_r2(valid.Y[vrows, k], preds[:, i], baseline)
            # ties go to the larger penalty, then the larger alpha
            key = (r2 if np.isfinite(r2) else -np.inf, lam, alpha)
            if key > best:
                best, best_beta, best_intercept = key, coefs[:, i], float(intercepts[i])
    return best_beta, best[2], best[1], best[0], best_intercept


def fit_en(data: DataSet, valid: HoldoutSet, grid: EnGrid = EnGrid(), n_jobs: int = 1) -> ElasticNetFit:
    """Elastic net per response on its observed training rows, tuned by validation R2.

    Predictors and the response are centered, and predictors scaled to unit standard
    deviation, over the observed rows of each response. Weights are mapped back to the
    scale of `data.X`; the intercept is reported separately and is close to zero for
    data centered at load, so `beta` alone is what gets archived.
    """
    if valid.q != data.q or valid.X.shape[1] != data.p:
        raise ValueError("Validation set does not match the training dimensions")
    columns = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fit_column)(k, data, valid, grid) for k in range(data.q)
    )
    beta = np.column_stack([c[0] for c in columns])
    alpha = np.array([c[1] for c in columns])
    flagged = np.flatnonzero(np.isnan(alpha)).tolist()
    if flagged:
        LOGGER.warning("Responses %s have no observed validation entries; their weights are zero", flagged)
    return ElasticNetFit(
        beta=beta,
        alpha=alpha,
        lambda_=np.array([c[2] for c in columns]),
        valid_r2=np.array([c[3] for c in columns]),
        intercept=np.array([c[4] for c in columns]),
        flagged=flagged,
    )


def fit_oracle_en(
    data: DataSet, Y_complete, valid: HoldoutSet, grid: EnGrid = EnGrid(), n_jobs: int = 1
) -> ElasticNetFit:
    """Elastic net on the fully observed training responses."""
    return fit_en(data.with_responses(Y_complete), valid, grid, n_jobs)
