"""Exact multi-tissue (MT) estimator: missingness-weighted least squares with the sparse-group penalty."""
from __future__ import annotations
import logging
from typing import Optional

import numpy as np
from pydantic import validator

from eqtlkit.BaseModel import BaseModel
from eqtlkit.DataSet import DataSet
from eqtlkit.array_types import Matrix
from eqtlkit.beta_step import ProxGradResult, accelerated_prox_grad, null_penalty_threshold, power_iteration
from eqtlkit.config import PenaltyConfig, SolverConfig

LOGGER = logging.getLogger(__name__)


class MissingnessWeights(BaseModel):
    """M with M_ik = n_k^{-1/2} where y_ik is observed and 0 elsewhere."""

    M: Matrix

    @validator("M")
    def unit_columns(cls, M):
        if np.any(M < 0):
            raise ValueError("Missingness weights must be nonnegative")
        sums = (M**2).sum(axis=0)
        if not np.allclose(sums, 1.0, rtol=0, atol=1e-12):
            raise ValueError(f"Column sums of squared weights must equal 1, got {sums}")
        return M

    @classmethod
    def from_mask(cls, mask) -> "MissingnessWeights":
        mask = np.asarray(mask, dtype=bool)
        n_k = mask.sum(axis=0)
        if np.any(n_k == 0):
            raise ValueError("Every response column needs at least one observed subject")
        return cls(M=np.where(mask, 1.0 / np.sqrt(np.maximum(n_k, 1)), 0.0))

    @classmethod
    def constant(cls, n: int, q: int) -> "MissingnessWeights":
        return cls(M=np.full((n, q), 1.0 / np.sqrt(n)))

    @property
    def W(self) -> np.ndarray:
        """Entrywise squared weights, the effective per-entry weights of the residuals."""
        return self.M**2


class MtProblem:
    """(1/2n) ||(Y - X B) o M||_F^2, the smooth part of the MT objective."""

    def __init__(self, data: DataSet, weights: MissingnessWeights):
        if weights.M.shape != (data.n, data.q):
            raise ValueError(f"Weights of shape {weights.M.shape} do not match responses {(data.n, data.q)}")
        self.X = data.X
        self.Y = data.observed_Y()
        self.W = weights.W
        self.n = data.n

    def smooth(self, beta: np.ndarray) -> float:
        R = self.Y - self.X @ beta
        return 0.5 * float(np.sum(self.W * R * R)) / self.n

    def gradient(self, beta: np.ndarray) -> np.ndarray:
        return -(self.X.T @ ((self.Y - self.X @ beta) * self.W)) / self.n

    def lipschitz(self) -> float:
        X = self.X
        return power_iteration(lambda v: X.T @ (X @ v), X.shape[1]) * float(self.W.max()) / self.n


def run_mt(
    data: DataSet,
    pen: PenaltyConfig,
    cfg: SolverConfig = SolverConfig(),
    weights: Optional[MissingnessWeights] = None,
    beta_init: Optional[np.ndarray] = None,
) -> ProxGradResult:
    weights = weights or MissingnessWeights.from_mask(data.mask)
    prob = MtProblem(data, weights)
    init = np.zeros((data.p, data.q)) if beta_init is None else np.asarray(beta_init, dtype=float)
    result = accelerated_prox_grad(prob.smooth, prob.gradient, pen, init, prob.lipschitz(), cfg, solver="mt")
    LOGGER.debug("MT (%s): objective %.6g", pen, result.objective)
    return result


def fit_mt(
    data: DataSet,
    pen: PenaltyConfig,
    cfg: SolverConfig = SolverConfig(),
    beta_init: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Minimize (1/2n)||(Y - XB) o M||_F^2 + lambda_beta P_alpha(B); lambda_omega is ignored."""
    return run_mt(data, pen, cfg, beta_init=beta_init).beta


def fit_oracle_mt(
    data: DataSet,
    Y_complete,
    pen: PenaltyConfig,
    cfg: SolverConfig = SolverConfig(),
    beta_init: Optional[np.ndarray] = None,
) -> np.ndarray:
    """MT on the fully observed responses (constant weights n^{-1/2})."""
    return fit_mt(data.with_responses(Y_complete), pen, cfg, beta_init=beta_init)


def mt_null_threshold(data: DataSet, alpha: float, weights: Optional[MissingnessWeights] = None) -> float:
    weights = weights or MissingnessWeights.from_mask(data.mask)
    prob = MtProblem(data, weights)
    return null_penalty_threshold(prob.gradient(np.zeros((data.p, data.q))), alpha)
