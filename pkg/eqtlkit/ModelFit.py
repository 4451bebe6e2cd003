from __future__ import annotations
from typing import Optional, Tuple

import numpy as np
from pydantic import root_validator
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from eqtlkit.BaseModel import BaseModel
from eqtlkit.array_types import Matrix

SYMMETRY_TOL = 1e-10
INVERSE_TOL = 1e-8


class DegenerateCovarianceError(np.linalg.LinAlgError):
    """A covariance or precision (sub)matrix that should be positive definite is not."""


class DimensionMismatchError(ValueError):
    pass


def cholesky(A: np.ndarray, what: str = "matrix") -> Tuple[np.ndarray, bool]:
    """Lower Cholesky factor usable with `cho_solve`, or DegenerateCovarianceError."""
    try:
        return cho_factor(A, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise DegenerateCovarianceError(f"{what} of size {np.shape(A)} is not positive definite") from exc


def chol_logdet(factor: Tuple[np.ndarray, bool]) -> float:
    return 2.0 * float(np.log(np.diag(factor[0])).sum())


def spd_inverse(A: np.ndarray, what: str = "matrix") -> np.ndarray:
    factor = cholesky(A, what)
    inv = cho_solve(factor, np.eye(A.shape[0]))
    return 0.5 * (inv + inv.T)


class ModelFit(BaseModel):
    """Coefficients beta (p x q) with the error precision omega (q x q) and its cached inverse sigma."""

    beta: Matrix
    omega: Matrix
    sigma: Optional[Matrix] = None

    @root_validator(skip_on_failure=True)
    def check_precision(cls, values):
        beta, omega, sigma = values["beta"], values["omega"], values.get("sigma")
        q = beta.shape[1]
        if omega.shape != (q, q):
            raise ValueError(f"omega must be {q}x{q} to match beta, got {omega.shape}")
        asym = np.abs(omega - omega.T).max()
        if asym > SYMMETRY_TOL * max(1.0, np.abs(omega).max()):
            raise ValueError(f"omega is not symmetric (max asymmetry {asym:.2e})")
        if sigma is None:
            sigma = spd_inverse(omega, "omega")
            sigma.setflags(write=False)
            values["sigma"] = sigma
        else:
            cholesky(omega, "omega")
            if sigma.shape != omega.shape:
                raise ValueError(f"sigma shape {sigma.shape} differs from omega shape {omega.shape}")
            err = np.abs(sigma @ omega - np.eye(q)).max()
            if err > INVERSE_TOL:
                raise ValueError(f"sigma is not the inverse of omega (max error {err:.2e})")
        return values

    @classmethod
    def from_sigma(cls, beta, sigma) -> "ModelFit":
        sigma = 0.5 * (np.asarray(sigma, dtype=float) + np.asarray(sigma, dtype=float).T)
        return cls(beta=beta, omega=spd_inverse(sigma, "sigma"), sigma=sigma)

    @classmethod
    def identity(cls, p: int, q: int) -> "ModelFit":
        return cls(beta=np.zeros((p, q)), omega=np.eye(q), sigma=np.eye(q))

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @property
    def q(self) -> int:
        return self.beta.shape[1]

    def with_beta(self, beta) -> "ModelFit":
        return ModelFit(beta=beta, omega=self.omega, sigma=self.sigma)

    def predict(self, X_new) -> np.ndarray:
        X_new = np.asarray(X_new, dtype=float)
        if X_new.ndim != 2 or X_new.shape[1] != self.p:
            raise DimensionMismatchError(
                f"Expected a matrix with {self.p} predictor columns, got shape {X_new.shape}"
            )
        return X_new @ self.beta
