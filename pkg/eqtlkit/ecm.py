"""Penalized expectation-conditional-maximization for the joint (Cov-MT) estimator.

Each iteration computes the conditional moments of the missing responses (E-step),
re-estimates the precision matrix by the graphical lasso on the expected residual
cross-products, then re-estimates the coefficients by accelerated proximal gradient
on the completed responses. Both conditional steps can only lower the expected
complete-data objective, so the observed-data penalized objective never increases.
"""
from __future__ import annotations
import logging
import time
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import Field
from scipy.stats import norm

from eqtlkit.BaseModel import BaseModel
from eqtlkit.DataSet import DataSet, HoldoutSet, MissingnessPattern
from eqtlkit.ModelFit import DimensionMismatchError, ModelFit
from eqtlkit.SolverOutcome import NonConvergenceError, SolverOutcome
from eqtlkit.beta_step import BetaProblem, ProxGradResult, null_penalty_threshold, grad_h, run_beta_step
from eqtlkit.config import PenaltyConfig, SolverConfig
from eqtlkit.estep import build_estep_stats, complete_responses
from eqtlkit.glasso import GlassoProblem, PrecisionEstimate, glasso_objective, solve_glasso
from eqtlkit.likelihood import penalized_objective

LOGGER = logging.getLogger(__name__)

MIN_INITIAL_VARIANCE = 1e-4
MONOTONE_TOL = 1e-9


class EcmIteration(BaseModel):
    iteration: int
    objective: float = Field(title="Penalized observed-data objective after the iteration")
    beta_change: float = Field(title="Frobenius norm of the coefficient update")
    omega_change: float = Field(title="Frobenius norm of the precision update")
    estep_seconds: float
    omega_step_seconds: float
    beta_step_seconds: float
    omega_kept: bool = Field(False, title="The graphical lasso update was rejected as no improvement")
    beta_outcome: Optional[SolverOutcome] = Field(None, repr=False)
    omega_outcome: Optional[SolverOutcome] = Field(None, repr=False)


class EcmTrace(BaseModel):
    initial_objective: float
    iterations: List[EcmIteration] = []
    outcome: SolverOutcome

    @property
    def objectives(self) -> np.ndarray:
        return np.array([self.initial_objective] + [it.objective for it in self.iterations])

    @property
    def final_objective(self) -> float:
        return float(self.objectives[-1])

    @property
    def converged(self) -> bool:
        return self.outcome.converged

    def is_monotone(self, tol: float = MONOTONE_TOL) -> bool:
        obj = self.objectives
        return bool(np.all(np.diff(obj) <= tol * np.maximum(1.0, np.abs(obj[:-1]))))

    @property
    def seconds(self) -> float:
        return sum(it.estep_seconds + it.omega_step_seconds + it.beta_step_seconds for it in self.iterations)

    def summary(self) -> dict:
        """Run outcome without timings, so that archives depend only on the inputs."""
        return dict(
            status=self.outcome.status,
            iterations=len(self.iterations),
            initial_objective=self.initial_objective,
            final_objective=self.final_objective,
        )


def initial_fit(data: DataSet) -> ModelFit:
    """beta = 0 and a diagonal precision from the column variances of the mean-completed responses."""
    Y0 = np.where(data.mask, data.Y, data.observed_column_means())
    var = np.var(Y0, axis=0, ddof=1 if data.n > 1 else 0)
    omega = np.diag(1.0 / np.maximum(var, MIN_INITIAL_VARIANCE))
    return ModelFit(beta=np.zeros((data.p, data.q)), omega=omega)


def covmt_null_threshold(data: DataSet, alpha: float, init: Optional[ModelFit] = None) -> float:
    """lambda_beta above which the first coefficient step from `init` returns all zeros."""
    init = init or initial_fit(data)
    stats = build_estep_stats(init, data)
    prob = BetaProblem(X=data.X, Ybar=stats.Ybar, Omega=init.omega)
    return null_penalty_threshold(grad_h(np.zeros((data.p, data.q)), prob), alpha)


def _omega_step(S: np.ndarray, fit: ModelFit, pen: PenaltyConfig, cfg: SolverConfig) -> Tuple[PrecisionEstimate, bool]:
    prob = GlassoProblem(
        S=S,
        lambda_omega=pen.lambda_omega,
        penalize_diagonal=cfg.penalize_omega_diagonal,
        tol=cfg.glasso_tol,
        max_iters=cfg.max_glasso_iters,
    )
    try:
        estimate = solve_glasso(prob)
    except NonConvergenceError as exc:
        LOGGER.warning("Precision step did not converge: %s", exc.outcome)
        estimate = exc.last_iterate
    # keep the previous precision unless the new one lowers the graphical lasso objective
    new = glasso_objective(S, estimate.omega, pen.lambda_omega, cfg.penalize_omega_diagonal)
    old = glasso_objective(S, fit.omega, pen.lambda_omega, cfg.penalize_omega_diagonal)
    if new > old:
        kept = PrecisionEstimate(omega=fit.omega, sigma=fit.sigma, outcome=estimate.outcome, kkt_residual=estimate.kkt_residual)
        return kept, True
    return estimate, False


def _beta_step(prob: BetaProblem, beta: np.ndarray) -> ProxGradResult:
    try:
        return run_beta_step(prob, beta)
    except NonConvergenceError as exc:
        LOGGER.warning("Coefficient step did not converge: %s", exc.outcome)
        return exc.last_iterate


def fit_covmt(
    data: DataSet,
    pen: PenaltyConfig,
    cfg: SolverConfig = SolverConfig(),
    init: Optional[ModelFit] = None,
) -> Tuple[ModelFit, EcmTrace]:
    """Minimize the penalized observed-data negative log-likelihood by penalized ECM.

    Returns the last fit and its trace. A fit that hit `max_ecm_iters` is returned with
    `trace.outcome.status == "max-iterations"` rather than raised.
    """
    fit = init or initial_fit(data)
    if fit.beta.shape != (data.p, data.q):
        raise ValueError(f"Initial fit has beta of shape {fit.beta.shape}, expected {(data.p, data.q)}")
    F_old = penalized_objective(fit, data, pen, cfg.penalize_omega_diagonal)
    initial_objective = F_old
    records: List[EcmIteration] = []
    status = "max-iterations"
    rel_change = float("nan")

    for k in range(1, cfg.max_ecm_iters + 1):
        t0 = time.perf_counter()
        stats = build_estep_stats(fit, data)
        t1 = time.perf_counter()
        precision, omega_kept = _omega_step(stats.S, fit, pen, cfg)
        t2 = time.perf_counter()
        prob = BetaProblem(X=data.X, Ybar=stats.Ybar, Omega=precision.omega, pen=pen, cfg=cfg)
        step = _beta_step(prob, fit.beta)
        beta = step.beta if prob.objective(step.beta) <= prob.objective(fit.beta) else fit.beta
        t3 = time.perf_counter()

        new_fit = ModelFit(beta=beta, omega=precision.omega, sigma=precision.sigma)
        F_new = penalized_objective(new_fit, data, pen, cfg.penalize_omega_diagonal)
        records.append(
            EcmIteration(
                iteration=k,
                objective=F_new,
                beta_change=float(np.linalg.norm(new_fit.beta - fit.beta)),
                omega_change=float(np.linalg.norm(new_fit.omega - fit.omega)),
                estep_seconds=t1 - t0,
                omega_step_seconds=t2 - t1,
                beta_step_seconds=t3 - t2,
                omega_kept=omega_kept,
                beta_outcome=step.outcome,
                omega_outcome=precision.outcome,
            )
        )
        LOGGER.debug("ECM iteration %d: objective %.10g (change %.3e)", k, F_new, F_new - F_old)
        scale = max(1.0, abs(F_old))
        rel_change = abs(F_old - F_new) / scale
        if F_new - F_old > MONOTONE_TOL * scale:
            LOGGER.warning("ECM iteration %d increased the objective by %.3e", k, F_new - F_old)
        fit = new_fit
        if rel_change <= cfg.ecm_tol:
            status = "converged"
            break
        F_old = F_new

    outcome = SolverOutcome(
        solver="ecm",
        status=status,
        iterations=len(records),
        residual=rel_change,
    )
    trace = EcmTrace(initial_objective=initial_objective, iterations=records, outcome=outcome)
    if outcome.converged:
        LOGGER.info(
            "Cov-MT (%s) converged in %d ECM iterations (%.2fs), objective %.6g",
            pen, len(records), trace.seconds, trace.final_objective,
        )
    else:
        LOGGER.warning("Cov-MT (%s) stopped after %d ECM iterations without converging", pen, len(records))
    return fit, trace


def predict(fit: ModelFit, X_new) -> np.ndarray:
    return fit.predict(X_new)


def impute(fit: ModelFit, data: Union[DataSet, HoldoutSet], return_covariances: bool = False):
    """Observed entries unchanged, missing entries replaced by their conditional means.

    With `return_covariances`, also returns the conditional covariance of the missing
    block for each missingness pattern. Held-out subjects without any observed response
    get the marginal prediction.
    """
    if fit.beta.shape != (data.X.shape[1], data.Y.shape[1]):
        raise DimensionMismatchError(f"Fit of shape {fit.beta.shape} does not match data {(data.X.shape[1], data.Y.shape[1])}")
    completed, covariances = complete_responses(fit, data.X, data.Y, data.mask)
    if return_covariances:
        return completed, covariances
    return completed


def prediction_intervals(fit: ModelFit, data: Union[DataSet, HoldoutSet], level: float = 0.95) -> Tuple[np.ndarray, np.ndarray]:
    """Normal intervals for missing entries; observed entries get zero width."""
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    completed, covariances = impute(fit, data, return_covariances=True)
    z = norm.ppf(0.5 * (1.0 + level))
    half = np.zeros(completed.shape)
    pattern: MissingnessPattern
    for pattern, V in covariances:
        if len(pattern.missing) == 0:
            continue
        sd = np.sqrt(np.clip(np.diag(V), 0.0, None))
        half[np.ix_(pattern.rows, pattern.missing)] = z * sd
    return completed - half, completed + half
