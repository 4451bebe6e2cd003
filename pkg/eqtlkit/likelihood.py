"""Observed-data negative log-likelihood and the penalized objective of the joint estimator."""
import math

import numpy as np
from scipy.linalg import cho_solve

from eqtlkit.DataSet import DataSet
from eqtlkit.ModelFit import ModelFit, chol_logdet, cholesky
from eqtlkit.config import PenaltyConfig


def observed_nll(fit: ModelFit, data: DataSet) -> float:
    """(1/n) sum_i [ r_io' Sigma_oi^{-1} r_io + log det Sigma_oi ] over observed entries only.

    One Cholesky factorization per missingness pattern.
    """
    sigma = fit.sigma
    terms = []
    for pattern in data.patterns:
        o, rows = pattern.observed, pattern.rows
        factor = cholesky(sigma[np.ix_(o, o)], f"Sigma submatrix for observed responses {o.tolist()}")
        resid = data.Y[np.ix_(rows, o)] - data.X[rows] @ fit.beta[:, o]
        quad = np.sum(resid * cho_solve(factor, resid.T).T)
        terms.append(quad + len(rows) * chol_logdet(factor))
    return math.fsum(terms) / data.n


def penalty_beta(beta, alpha: float) -> float:
    """sum_j { alpha * sum_k |b_jk| + (1 - alpha) * ||b_j.||_2 }"""
    beta = np.asarray(beta, dtype=float)
    l1 = np.abs(beta).sum()
    group = np.linalg.norm(beta, axis=1).sum() if beta.size else 0.0
    return float(alpha * l1 + (1.0 - alpha) * group)


def penalty_omega(omega, penalize_diagonal: bool = True) -> float:
    omega = np.asarray(omega, dtype=float)
    total = np.abs(omega).sum()
    if not penalize_diagonal:
        total -= np.abs(np.diag(omega)).sum()
    return float(total)


def penalized_objective(
    fit: ModelFit,
    data: DataSet,
    pen: PenaltyConfig,
    penalize_omega_diagonal: bool = True,
) -> float:
    value = observed_nll(fit, data)
    if pen.lambda_beta:
        value += pen.lambda_beta * penalty_beta(fit.beta, pen.alpha)
    if pen.lambda_omega:
        value += pen.lambda_omega * penalty_omega(fit.omega, penalize_omega_diagonal)
    return value
