from __future__ import annotations
import gzip
import io
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import Field, root_validator

from eqtlkit.BaseModel import BaseModel
from eqtlkit.DataSet import DataSet
from eqtlkit.ModelFit import DimensionMismatchError, ModelFit, cholesky
from eqtlkit.config import PenaltyConfig, SolverConfig

LOGGER = logging.getLogger(__name__)

ARCHIVE_FORMAT = 1
Triplet = Tuple[str, str, float]


def _tool_version() -> str:
    from eqtlkit import __version__

    return __version__


def lower_triangle(A: np.ndarray) -> List[float]:
    return np.asarray(A)[np.tril_indices(A.shape[0])].tolist()


def from_lower_triangle(values: List[float], q: int) -> np.ndarray:
    A = np.zeros((q, q))
    A[np.tril_indices(q)] = values
    return A + np.tril(A, -1).T


class WeightSetArchive(BaseModel):
    """Fitted eQTL weights with everything needed to apply them to raw genotypes.

    Nonzero weights are stored as (predictor, response, weight) triplets and the
    precision matrix as its lower triangle, row by row.
    """

    archive_format: int = ARCHIVE_FORMAT
    tool_version: str = Field(default_factory=_tool_version)
    method: str
    predictor_names: List[str]
    response_names: List[str]
    weights: List[Triplet] = Field(repr=False)
    omega_lower: List[float] = Field(repr=False)
    x_center: Optional[List[float]] = Field(None, repr=False)
    x_scale: Optional[List[float]] = Field(None, repr=False)
    y_center: Optional[List[float]] = Field(None, repr=False)
    y_scale: Optional[List[float]] = Field(None, repr=False)
    penalty: Optional[PenaltyConfig] = None
    solver: SolverConfig = SolverConfig()
    trace_summary: Dict[str, Any] = Field({}, repr=False)
    valid_r2: Optional[float] = None
    dataset_hash: str

    @root_validator(skip_on_failure=True)
    def check_contents(cls, values):
        p, q = len(values["predictor_names"]), len(values["response_names"])
        if len(values["omega_lower"]) != q * (q + 1) // 2:
            raise ValueError(f"omega_lower needs {q * (q + 1) // 2} entries for {q} responses")
        cholesky(from_lower_triangle(values["omega_lower"], q), "Archived precision matrix")
        predictors, responses = set(values["predictor_names"]), set(values["response_names"])
        for snp, gene, _ in values["weights"]:
            if snp not in predictors or gene not in responses:
                raise ValueError(f"Weight for unknown pair ({snp}, {gene})")
        for key, size in (("x_center", p), ("x_scale", p), ("y_center", q), ("y_scale", q)):
            if values.get(key) is not None and len(values[key]) != size:
                raise ValueError(f"{key} has {len(values[key])} entries, expected {size}")
        return values

    @classmethod
    def from_fit(
        cls,
        fit: ModelFit,
        data: DataSet,
        method: str,
        penalty: Optional[PenaltyConfig] = None,
        solver: SolverConfig = SolverConfig(),
        trace_summary: Optional[Dict[str, Any]] = None,
        valid_r2: Optional[float] = None,
    ) -> "WeightSetArchive":
        if fit.beta.shape != (data.p, data.q):
            raise DimensionMismatchError(f"Fit of shape {fit.beta.shape} does not match data {(data.p, data.q)}")
        rows, cols = np.nonzero(fit.beta)
        weights = [(data.predictor_names[j], data.response_names[k], float(fit.beta[j, k])) for j, k in zip(rows, cols)]

        def listed(v):
            return None if v is None else v.tolist()

        return cls(
            method=method,
            predictor_names=data.predictor_names,
            response_names=data.response_names,
            weights=weights,
            omega_lower=lower_triangle(fit.omega),
            x_center=listed(data.x_center),
            x_scale=listed(data.x_scale),
            y_center=listed(data.y_center),
            y_scale=listed(data.y_scale),
            penalty=penalty,
            solver=solver,
            trace_summary=trace_summary or {},
            valid_r2=valid_r2,
            dataset_hash=data.dataset_hash(),
        )

    @property
    def p(self) -> int:
        return len(self.predictor_names)

    @property
    def q(self) -> int:
        return len(self.response_names)

    def beta(self) -> np.ndarray:
        index = {name: j for j, name in enumerate(self.predictor_names)}
        column = {name: k for k, name in enumerate(self.response_names)}
        B = np.zeros((self.p, self.q))
        for snp, gene, w in self.weights:
            B[index[snp], column[gene]] = w
        return B

    def omega(self) -> np.ndarray:
        return from_lower_triangle(self.omega_lower, self.q)

    def to_fit(self) -> ModelFit:
        return ModelFit(beta=self.beta(), omega=self.omega())

    def standardize_X(self, X_raw) -> np.ndarray:
        X = np.asarray(X_raw, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise DimensionMismatchError(f"Expected {self.p} predictor columns, got shape {X.shape}")
        if self.x_center is not None:
            X = (X - np.asarray(self.x_center)) / np.asarray(self.x_scale)
        return X

    def standardize_Y(self, Y_raw) -> np.ndarray:
        Y = np.asarray(Y_raw, dtype=float)
        if self.y_center is not None:
            Y = (Y - np.asarray(self.y_center)) / np.asarray(self.y_scale)
        return Y

    def unstandardize_Y(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if self.y_center is not None:
            Y = Y * np.asarray(self.y_scale) + np.asarray(self.y_center)
        return Y

    def predict_raw(self, X_raw) -> np.ndarray:
        """Predicted expression on the original scale from genotypes on the original scale."""
        return self.unstandardize_Y(self.standardize_X(X_raw) @ self.beta())

    def save(self, path: Union[str, Path]) -> None:
        text = self.json()
        path = Path(path)
        if path.suffix == ".gz":
            # zero mtime and no stored name keep the bytes reproducible
            with path.open("wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
                with io.TextIOWrapper(gz, encoding="utf-8") as fh:
                    fh.write(text)
        else:
            path.write_text(text, encoding="utf-8")
        LOGGER.info("Saved %s weight set (%d nonzero weights) to %s", self.method, len(self.weights), path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "WeightSetArchive":
        path = Path(path)
        if path.suffix == ".gz":
            with gzip.open(path, "rt", encoding="utf-8") as fh:
                return cls.parse_raw(fh.read())
        return cls.parse_file(path)
