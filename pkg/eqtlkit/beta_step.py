"""Coefficient step of the ECM loop: accelerated proximal gradient on the
Omega-weighted residual sum of squares with the sparse-group penalty."""
from __future__ import annotations
import logging
import math
from typing import Callable, Optional

import numpy as np
from pydantic import Field, root_validator
from scipy.optimize import brentq

from eqtlkit.BaseModel import BaseModel
from eqtlkit.ModelFit import DimensionMismatchError, cholesky
from eqtlkit.SolverOutcome import NonConvergenceError, SolverOutcome
from eqtlkit.array_types import Matrix
from eqtlkit.config import PenaltyConfig, SolverConfig
from eqtlkit.likelihood import penalty_beta

LOGGER = logging.getLogger(__name__)

POWER_ITERS = 50
POWER_TOL = 1e-8
# optimistic start of the backtracking rule, in shrink steps above the Lipschitz step
BACKTRACK_HEADROOM = 3
MAX_BACKTRACKS = 60


def sparse_group_prox(delta, t_l1: float, t_group: float) -> np.ndarray:
    """argmin_B 1/2 ||B - delta||^2 + t_l1 ||B||_1 + t_group sum_j ||B_j.||_2, row by row."""
    delta = np.asarray(delta, dtype=float)
    soft = np.sign(delta) * np.maximum(np.abs(delta) - t_l1, 0.0)
    if t_group <= 0:
        return soft
    norms = np.linalg.norm(soft, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, np.maximum(1.0 - t_group / norms, 0.0), 0.0)
    return soft * scale


def power_iteration(matvec: Callable[[np.ndarray], np.ndarray], dim: int, iters: int = POWER_ITERS, tol: float = POWER_TOL) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite operator."""
    if dim == 0:
        return 0.0
    v = np.random.default_rng(0).standard_normal(dim)
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(iters):
        w = matvec(v)
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        new_value = float(v @ w)
        v = w / norm
        if abs(new_value - value) <= tol * max(1.0, abs(new_value)):
            return max(new_value, float(norm))
        value = new_value
    return max(value, float(norm))


def null_penalty_threshold(grad_at_zero, alpha: float) -> float:
    """Smallest lambda whose sparse-group prox maps every row of -grad_at_zero to zero.

    Row j is zeroed iff ||soft(g_j, lambda*alpha)||_2 <= lambda*(1 - alpha).
    """
    G = np.atleast_2d(np.abs(np.asarray(grad_at_zero, dtype=float)))
    best = 0.0
    for g in G:
        gmax, gnorm = g.max(initial=0.0), float(np.linalg.norm(g))
        if gnorm == 0:
            continue
        if alpha >= 1:
            lam = gmax
        elif alpha <= 0:
            lam = gnorm
        else:
            excess = lambda lam: float(np.linalg.norm(np.maximum(g - lam * alpha, 0.0))) - lam * (1.0 - alpha)
            upper = min(gmax / alpha, gnorm / (1.0 - alpha))
            lam = upper if excess(upper) > 0 else brentq(excess, 0.0, upper, xtol=1e-14, rtol=1e-12)
        best = max(best, lam)
    return best


class ProxGradResult(BaseModel):
    beta: Matrix
    objective: float
    lipschitz: float = Field(title="Curvature constant of the accepted steps (step size is its inverse)")
    outcome: SolverOutcome = Field(repr=False)


def accelerated_prox_grad(
    smooth: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    pen: PenaltyConfig,
    beta_init: np.ndarray,
    lipschitz: float,
    cfg: SolverConfig,
    solver: str,
) -> ProxGradResult:
    """Minimize smooth(B) + lambda_beta * P_alpha(B) by momentum-extrapolated proximal gradient steps.

    The momentum is reset whenever the objective would increase, so accepted iterates
    never increase the objective. A step is accepted only if it satisfies the quadratic
    upper bound of `smooth` around the extrapolation point; otherwise the step shrinks.
    """
    lam, alpha = pen.lambda_beta, pen.alpha

    def prox(V: np.ndarray, L: float) -> np.ndarray:
        return sparse_group_prox(V, lam * alpha / L, lam * (1.0 - alpha) / L)

    def total(B: np.ndarray, h: float) -> float:
        return h + lam * penalty_beta(B, alpha) if lam else h

    L = max(lipschitz, np.finfo(float).tiny)
    if cfg.step_size_rule == "backtracking":
        L *= cfg.backtracking_shrink**BACKTRACK_HEADROOM

    x = np.array(beta_init, dtype=float)
    F_x = total(x, smooth(x))
    y, t = x, 1.0
    backtracks = restarts = 0
    residual = math.inf

    for it in range(1, cfg.max_prox_iters + 1):
        g, h_y = gradient(y), smooth(y)
        for _ in range(MAX_BACKTRACKS):
            x_new = prox(y - g / L, L)
            d = x_new - y
            h_new = smooth(x_new)
            bound = h_y + float(np.sum(g * d)) + 0.5 * L * float(np.sum(d * d))
            if h_new <= bound + 1e-12 * max(1.0, abs(bound)):
                break
            L /= cfg.backtracking_shrink
            backtracks += 1
        else:
            outcome = SolverOutcome(solver=solver, status="failed", iterations=it, message="no step satisfies the quadratic bound")
            raise NonConvergenceError(outcome, last_iterate=ProxGradResult(beta=x, objective=F_x, lipschitz=L, outcome=outcome))
        F_new = total(x_new, h_new)

        if F_new > F_x + 1e-14 * max(1.0, abs(F_x)):
            restarts += 1
            if y is not x:
                y, t = x, 1.0
                continue
            # a plain step from x did not descend
            fixed = prox(x - gradient(x) / L, L)
            residual = float(np.linalg.norm(x - fixed)) / max(1.0, float(np.linalg.norm(x)))
            status = "converged" if residual <= cfg.prox_tol else "failed"
            outcome = SolverOutcome(
                solver=solver, status=status, iterations=it, residual=residual, message="objective stalled"
            )
            result = ProxGradResult(beta=x, objective=F_x, lipschitz=L, outcome=outcome)
            if status == "converged":
                return result
            raise NonConvergenceError(outcome, last_iterate=result)

        change = float(np.linalg.norm(x_new - x)) / max(1.0, float(np.linalg.norm(x_new)))
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, F_x, t = x_new, F_new, t_new

        if change <= cfg.prox_tol:
            # cheap test passed; confirm with the fixed-point residual at x
            fixed = prox(x - gradient(x) / L, L)
            residual = float(np.linalg.norm(x - fixed)) / max(1.0, float(np.linalg.norm(x)))
            if residual <= cfg.prox_tol:
                LOGGER.debug(
                    "%s: converged in %d iterations (%d backtracks, %d restarts), objective %.6g",
                    solver, it, backtracks, restarts, F_x,
                )
                return ProxGradResult(
                    beta=x,
                    objective=F_x,
                    lipschitz=L,
                    outcome=SolverOutcome(solver=solver, status="converged", iterations=it, residual=residual),
                )
            y, t = x, 1.0

    outcome = SolverOutcome(
        solver=solver,
        status="max-iterations",
        iterations=cfg.max_prox_iters,
        residual=residual if math.isfinite(residual) else None,
        message=f"{backtracks} backtracks, {restarts} restarts",
    )
    raise NonConvergenceError(outcome, last_iterate=ProxGradResult(beta=x, objective=F_x, lipschitz=L, outcome=outcome))


class BetaProblem(BaseModel):
    """h(B) = (1/n) tr{(Ybar - X B) Omega (Ybar - X B)'} plus lambda_beta * P_alpha(B)."""

    X: Matrix
    Ybar: Matrix
    Omega: Matrix
    pen: PenaltyConfig = PenaltyConfig()
    cfg: SolverConfig = SolverConfig()

    @root_validator(skip_on_failure=True)
    def check_dimensions(cls, values):
        X, Ybar, Omega = values["X"], values["Ybar"], values["Omega"]
        if X.shape[0] != Ybar.shape[0]:
            raise DimensionMismatchError(f"X has {X.shape[0]} rows but Ybar has {Ybar.shape[0]}")
        q = Ybar.shape[1]
        if Omega.shape != (q, q):
            raise DimensionMismatchError(f"Omega must be {q}x{q}, got {Omega.shape}")
        cholesky(Omega, "Omega")
        return values

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def residual(self, beta: np.ndarray) -> np.ndarray:
        return self.Ybar - self.X @ beta

    def h(self, beta: np.ndarray) -> float:
        R = self.residual(beta)
        return float(np.sum((R @ self.Omega) * R)) / self.n

    def objective(self, beta: np.ndarray) -> float:
        return self.h(beta) + self.pen.lambda_beta * penalty_beta(beta, self.pen.alpha)

    def lipschitz(self) -> float:
        """(2/n) lambda_max(X'X) lambda_max(Omega)"""
        X = self.X
        l_x = power_iteration(lambda v: X.T @ (X @ v), X.shape[1])
        l_omega = power_iteration(lambda v: self.Omega @ v, self.Omega.shape[0])
        return 2.0 / self.n * l_x * l_omega

    def null_threshold(self) -> float:
        return null_penalty_threshold(grad_h(np.zeros((self.X.shape[1], self.Ybar.shape[1])), self), self.pen.alpha)


def grad_h(beta, prob: BetaProblem) -> np.ndarray:
    """-(2/n) X'(Ybar - X beta) Omega"""
    return -(2.0 / prob.n) * (prob.X.T @ prob.residual(np.asarray(beta, dtype=float))) @ prob.Omega


def run_beta_step(prob: BetaProblem, beta_init: Optional[np.ndarray] = None) -> ProxGradResult:
    if beta_init is None:
        beta_init = np.zeros((prob.X.shape[1], prob.Ybar.shape[1]))
    elif np.shape(beta_init) != (prob.X.shape[1], prob.Ybar.shape[1]):
        raise DimensionMismatchError(f"beta_init has shape {np.shape(beta_init)}")
    return accelerated_prox_grad(
        prob.h,
        lambda B: grad_h(B, prob),
        prob.pen,
        np.asarray(beta_init, dtype=float),
        prob.lipschitz(),
        prob.cfg,
        solver="beta-prox",
    )


def solve_beta(prob: BetaProblem, beta_init: Optional[np.ndarray] = None) -> np.ndarray:
    return run_beta_step(prob, beta_init).beta
