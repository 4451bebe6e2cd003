"""l1-penalized Gaussian precision estimation for the Omega step of the ECM loop."""
from __future__ import annotations
import logging
import warnings

import numpy as np
from pydantic import Field, validator
from sklearn.covariance import graphical_lasso
from sklearn.exceptions import ConvergenceWarning

from eqtlkit.BaseModel import BaseModel
from eqtlkit.ModelFit import DegenerateCovarianceError, chol_logdet, cholesky, spd_inverse
from eqtlkit.SolverOutcome import NonConvergenceError, SolverOutcome
from eqtlkit.array_types import Matrix, NonNegativeFloat, PositiveInt, Tolerance
from eqtlkit.likelihood import penalty_omega

LOGGER = logging.getLogger(__name__)


class UnboundedProblemError(ValueError):
    """The penalized likelihood has no minimizer (e.g. singular S without penalty)."""


class GlassoProblem(BaseModel):
    S: Matrix
    lambda_omega: NonNegativeFloat = 0.0
    penalize_diagonal: bool = True
    tol: Tolerance = 1e-6
    max_iters: PositiveInt = 500

    @validator("S")
    def symmetric(cls, S):
        if S.shape[0] != S.shape[1] or S.shape[0] < 1:
            raise ValueError(f"S must be a non-empty square matrix, got {S.shape}")
        if np.abs(S - S.T).max() > 1e-10 * max(1.0, np.abs(S).max()):
            raise ValueError("S must be symmetric")
        return S


class PrecisionEstimate(BaseModel):
    omega: Matrix
    sigma: Matrix
    outcome: SolverOutcome = Field(repr=False)
    kkt_residual: float = 0.0


def glasso_objective(S, omega, lambda_omega: float, penalize_diagonal: bool = True) -> float:
    """tr(S Omega) - log det Omega + lambda * sum |omega_jk|"""
    factor = cholesky(np.asarray(omega), "omega")
    value = float(np.sum(np.asarray(S) * omega)) - chol_logdet(factor)
    return value + lambda_omega * penalty_omega(omega, penalize_diagonal)


def kkt_residual(S, omega, sigma, lambda_omega: float, penalize_diagonal: bool = True, zero_tol: float = 0.0) -> float:
    """Largest violation of the stationarity conditions S - Omega^{-1} + lambda * d|Omega| = 0."""
    grad = np.asarray(S) - np.asarray(sigma)
    lam = np.full(grad.shape, float(lambda_omega))
    if not penalize_diagonal:
        np.fill_diagonal(lam, 0.0)
    nonzero = np.abs(omega) > zero_tol
    active = np.abs(grad + lam * np.sign(omega))
    inactive = np.maximum(np.abs(grad) - lam, 0.0)
    return float(np.where(nonzero, active, inactive).max())


def _finish(omega: np.ndarray, prob: GlassoProblem, outcome: SolverOutcome) -> PrecisionEstimate:
    omega = 0.5 * (omega + omega.T)
    sigma = spd_inverse(omega, "omega")
    residual = kkt_residual(prob.S, omega, sigma, prob.lambda_omega, prob.penalize_diagonal)
    return PrecisionEstimate(omega=omega, sigma=sigma, outcome=outcome, kkt_residual=residual)


def solve_glasso(prob: GlassoProblem) -> PrecisionEstimate:
    """Minimize tr(S Omega) - log det Omega + lambda * P(Omega) over positive definite Omega.

    Penalizing the diagonal adds lambda * tr(Omega), which is the unpenalized-diagonal
    problem on S + lambda * I; the column-wise lasso sweeps run in scikit-learn.
    """
    S, lam = np.array(prob.S), prob.lambda_omega
    q = S.shape[0]

    if lam == 0:
        try:
            omega = spd_inverse(S, "S")
        except DegenerateCovarianceError as exc:
            raise UnboundedProblemError("lambda_omega = 0 requires a positive definite S") from exc
        return _finish(omega, prob, SolverOutcome(solver="glasso", status="converged", residual=0.0))

    shifted = S + lam * np.eye(q) if prob.penalize_diagonal else S
    if np.any(np.diag(shifted) <= 0):
        raise UnboundedProblemError("Zero variance on an unpenalized diagonal entry of S")

    off = np.abs(S - np.diag(np.diag(S)))
    if q == 1 or off.max() <= lam:
        # every off-diagonal is thresholded: the problem decouples per coordinate
        omega = np.diag(1.0 / np.diag(shifted))
        return _finish(omega, prob, SolverOutcome(solver="glasso", status="converged", residual=0.0))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        try:
            _, omega, n_iter = graphical_lasso(
                shifted,
                alpha=lam,
                mode="cd",
                tol=prob.tol,
                enet_tol=min(prob.tol, 1e-8),
                max_iter=prob.max_iters,
                return_n_iter=True,
            )
        except FloatingPointError as exc:
            raise DegenerateCovarianceError(f"Graphical lasso left the positive definite cone: {exc}") from exc

    not_converged = [w for w in caught if issubclass(w.category, ConvergenceWarning) and "graphical_lasso" in str(w.message)]
    if not_converged:
        outcome = SolverOutcome(
            solver="glasso",
            status="max-iterations",
            iterations=n_iter,
            message=str(not_converged[-1].message),
        )
        raise NonConvergenceError(outcome, last_iterate=_finish(omega, prob, outcome))

    estimate = _finish(omega, prob, SolverOutcome(solver="glasso", status="converged", iterations=n_iter))
    LOGGER.debug("glasso: %d sweeps, kkt residual %.2e", n_iter, estimate.kkt_residual)
    return estimate
