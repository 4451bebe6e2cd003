from __future__ import annotations
import logging
from typing import List, Tuple

import numpy as np
from pydantic import Field, root_validator
from scipy.linalg import cho_solve

from eqtlkit.BaseModel import BaseModel
from eqtlkit.DataSet import DataSet, MissingnessPattern, group_patterns
from eqtlkit.ModelFit import ModelFit, cholesky
from eqtlkit.array_types import Matrix, Vector

LOGGER = logging.getLogger(__name__)

PSD_TOL = 1e-10


class EStepStats(BaseModel):
    """Conditional moments of the missing responses given the observed ones under the current fit."""

    patterns: List[MissingnessPattern] = Field(repr=False)
    mu: List[Vector] = Field(repr=False, title="Conditional means of each subject's missing responses")
    V: List[Matrix] = Field(repr=False, title="Conditional covariance of the missing block, one per pattern")
    Ybar: Matrix = Field(title="Observed responses completed with conditional means")
    S: Matrix = Field(title="Expected residual cross-product matrix divided by n")

    @root_validator(skip_on_failure=True)
    def check_surrogate(cls, values):
        S = values["S"]
        if np.abs(S - S.T).max() > 0:
            raise ValueError("S must be exactly symmetric")
        if S.size and np.linalg.eigvalsh(S)[0] < -PSD_TOL * max(1.0, np.abs(S).max()):
            raise ValueError("S is not positive semidefinite")
        if len(values["V"]) != len(values["patterns"]):
            raise ValueError("One conditional covariance per missingness pattern is required")
        return values

    def pattern_covariances(self) -> List[Tuple[MissingnessPattern, np.ndarray]]:
        return list(zip(self.patterns, self.V))


def _gain(sigma: np.ndarray, o: np.ndarray, m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """K = Sigma_mo Sigma_o^{-1} and V = Sigma_m - K Sigma_om for one pattern."""
    factor = cholesky(sigma[np.ix_(o, o)], f"Sigma submatrix for observed responses {o.tolist()}")
    sigma_om = sigma[np.ix_(o, m)]
    K = cho_solve(factor, sigma_om).T
    V = sigma[np.ix_(m, m)] - K @ sigma_om
    return K, 0.5 * (V + V.T)


def conditional_moments(
    fit: ModelFit,
    x_i,
    y_obs,
    o_i,
    m_i,
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of y_{i,m} given y_{i,o} under the normal model of `fit`."""
    o = np.asarray(o_i, dtype=np.intp)
    m = np.asarray(m_i, dtype=np.intp)
    if len(o) == 0:
        raise ValueError("At least one observed response is required")
    if len(m) == 0:
        return np.zeros(0), np.zeros((0, 0))
    x_i = np.asarray(x_i, dtype=float)
    K, V = _gain(fit.sigma, o, m)
    mean = x_i @ fit.beta
    mu = mean[m] + K @ (np.asarray(y_obs, dtype=float) - mean[o])
    return mu, V


def build_estep_stats(fit: ModelFit, data: DataSet) -> EStepStats:
    n, q = data.n, data.q
    fitted = data.X @ fit.beta
    # completed residuals: observed residuals, or conditional means minus fitted values
    resid = np.zeros((n, q))
    Ybar = np.zeros((n, q))
    V_sum = np.zeros((q, q))
    mu: List[np.ndarray] = [np.zeros(0)] * n
    V_list = []
    for pattern in data.patterns:
        o, m, rows = pattern.observed, pattern.missing, pattern.rows
        r_o = data.Y[np.ix_(rows, o)] - fitted[np.ix_(rows, o)]
        resid[np.ix_(rows, o)] = r_o
        Ybar[np.ix_(rows, o)] = data.Y[np.ix_(rows, o)]
        if len(m) == 0:
            V_list.append(np.zeros((0, 0)))
            continue
        K, V = _gain(fit.sigma, o, m)
        r_m = r_o @ K.T
        mu_rows = fitted[np.ix_(rows, m)] + r_m
        resid[np.ix_(rows, m)] = r_m
        Ybar[np.ix_(rows, m)] = mu_rows
        V_sum[np.ix_(m, m)] += len(rows) * V
        V_list.append(V)
        for k, i in enumerate(rows):
            mu[i] = mu_rows[k]
    S = (resid.T @ resid + V_sum) / n
    S = 0.5 * (S + S.T)
    LOGGER.debug("E-step over %d subjects in %d missingness patterns", n, len(data.patterns))
    return EStepStats(patterns=data.patterns, mu=mu, V=V_list, Ybar=Ybar, S=S)


def complete_responses(fit: ModelFit, X, Y, mask) -> Tuple[np.ndarray, List[Tuple[MissingnessPattern, np.ndarray]]]:
    """Observed entries kept and missing ones replaced by their conditional means, with the
    conditional covariance of the missing block per pattern.

    Unlike the E-step this accepts held-out subjects: a subject with nothing observed gets
    the marginal mean X beta and covariance Sigma.
    """
    X = np.asarray(X, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    fitted = X @ fit.beta
    completed = np.where(mask, Y, fitted)
    covariances: List[Tuple[MissingnessPattern, np.ndarray]] = []
    for pattern in group_patterns(mask):
        o, m, rows = pattern.observed, pattern.missing, pattern.rows
        if len(m) == 0:
            covariances.append((pattern, np.zeros((0, 0))))
            continue
        if len(o) == 0:
            covariances.append((pattern, np.array(fit.sigma)))
            continue
        K, V = _gain(fit.sigma, o, m)
        r_o = np.asarray(Y, dtype=float)[np.ix_(rows, o)] - fitted[np.ix_(rows, o)]
        completed[np.ix_(rows, m)] = fitted[np.ix_(rows, m)] + r_o @ K.T
        covariances.append((pattern, V))
    return completed, covariances
