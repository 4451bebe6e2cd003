"""Prediction accuracy and support-recovery metrics for fitted weight matrices.

Import this module rather than its functions in test files: pytest would collect
`test_r2` as a test otherwise.
"""
from __future__ import annotations
import logging
from typing import Dict, List, Optional

import numpy as np
from pydantic import Field, root_validator

from eqtlkit.BaseModel import BaseModel
from eqtlkit.DataSet import HoldoutSet
from eqtlkit.array_types import MaskedVector

LOGGER = logging.getLogger(__name__)

ZERO_TOL = 1e-12
LD_THRESHOLD = 0.60


class R2Result(BaseModel):
    per_tissue: MaskedVector = Field(title="Test-set R2 per response, NaN where flagged")
    average: float = Field(title="Mean over unflagged responses")
    flagged: List[int] = Field([], title="Responses without observed entries or with zero baseline error")


class MetricReport(BaseModel):
    method: str = ""
    fold: Optional[int] = None
    r2: R2Result
    ld_tpr: Optional[float] = Field(None, ge=0.0, le=1.0)
    model_size: Optional[float] = Field(None, ge=0.0, le=1.0, title="Unset when no weights were given")

    @root_validator(skip_on_failure=True)
    def r2_at_most_one(cls, values):
        finite = values["r2"].per_tissue[np.isfinite(values["r2"].per_tissue)]
        if np.any(finite > 1.0 + 1e-12):
            raise ValueError("R2 cannot exceed 1")
        return values

    @property
    def average_r2(self) -> float:
        return self.r2.average

    def long_rows(self, **keys) -> List[Dict]:
        """One row per metric, extra `keys` prepended (method, setting, replication, ...)."""
        base = dict(method=self.method, **keys)
        if self.fold is not None:
            base["fold"] = self.fold
        rows = [dict(base, metric="test_r2", value=self.r2.average)]
        if self.ld_tpr is not None:
            rows.append(dict(base, metric="ld_tpr", value=self.ld_tpr))
        if self.model_size is not None:
            rows.append(dict(base, metric="model_size", value=self.model_size))
        return rows


def column_r2(y_true, y_pred, baseline: float) -> float:
    """1 - ||y - yhat||^2 / ||y - baseline||^2, NaN for an empty or constant-at-baseline column."""
    y_true = np.asarray(y_true, dtype=float)
    if y_true.size == 0:
        return np.nan
    denom = float(np.sum((y_true - baseline) ** 2))
    if denom == 0:
        return np.nan
    return 1.0 - float(np.sum((y_true - np.asarray(y_pred, dtype=float)) ** 2)) / denom


def r2_from_predictions(Y_true, Y_pred, train_col_means, mask=None) -> R2Result:
    Y_true = np.asarray(Y_true, dtype=float)
    Y_pred = np.asarray(Y_pred, dtype=float)
    mask = np.isfinite(Y_true) if mask is None else np.asarray(mask, dtype=bool)
    means = np.asarray(train_col_means, dtype=float)
    per = np.array([column_r2(Y_true[mask[:, k], k], Y_pred[mask[:, k], k], means[k]) for k in range(Y_true.shape[1])])
    flagged = np.flatnonzero(~np.isfinite(per)).tolist()
    if flagged:
        LOGGER.debug("R2 undefined for responses %s", flagged)
    average = float(np.nanmean(per)) if len(flagged) < len(per) else np.nan
    return R2Result(per_tissue=per, average=average, flagged=flagged)


def test_r2(beta_hat, X_test, Y_test, train_col_means, mask=None) -> R2Result:
    """Test-set R2 per tissue against the training means, over observed test entries."""
    return r2_from_predictions(Y_test, np.asarray(X_test) @ np.asarray(beta_hat), train_col_means, mask)


def selected_entries(beta_hat, zero_tol: float = ZERO_TOL) -> np.ndarray:
    """Entries counted as selected: |beta| >= zero_tol."""
    return np.abs(np.asarray(beta_hat, dtype=float)) >= zero_tol


def ld_adjusted_tpr(beta_hat, support_star, X, cor_threshold: float = LD_THRESHOLD) -> float:
    """Share of true eQTLs (j, k) with some selected l in tissue k and |Cor(X_l, X_j)| > cor_threshold."""
    support = np.asarray(support_star, dtype=bool)
    if not support.any():
        raise ValueError("LD-adjusted TPR is undefined for an empty true support")
    selected = selected_entries(beta_hat)
    with np.errstate(invalid="ignore", divide="ignore"):
        cor = np.corrcoef(np.asarray(X, dtype=float), rowvar=False)
    proxy = np.abs(np.atleast_2d(np.nan_to_num(cor, nan=0.0))) > cor_threshold
    np.fill_diagonal(proxy, True)
    discovered = (proxy.astype(np.int64).T @ selected.astype(np.int64)) > 0
    return float(discovered[support].mean())


def model_size(beta_hat, zero_tol: float = ZERO_TOL) -> float:
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.size == 0:
        return 0.0
    return float(np.count_nonzero(selected_entries(beta_hat, zero_tol))) / beta_hat.size


def evaluate(
    beta_hat,
    test: HoldoutSet,
    train_col_means,
    method: str = "",
    support_star=None,
    X_cor=None,
    fold: Optional[int] = None,
) -> MetricReport:
    """All metrics for one fitted weight matrix. TPR needs the true support and the design used for LD."""
    r2 = test_r2(beta_hat, test.X, test.Y, train_col_means, test.mask)
    tpr = None
    if support_star is not None:
        tpr = ld_adjusted_tpr(beta_hat, support_star, test.X if X_cor is None else X_cor)
    return MetricReport(method=method, fold=fold, r2=r2, ld_tpr=tpr, model_size=model_size(beta_hat))
