from __future__ import annotations
import hashlib
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field, PrivateAttr, root_validator, validator

from eqtlkit.BaseModel import BaseModel
from eqtlkit.array_types import BoolMatrix, IndexVector, MaskedMatrix, Matrix, Vector

LOGGER = logging.getLogger(__name__)


class MissingnessPattern(BaseModel):
    """Subjects sharing one set of observed response columns."""

    observed: IndexVector
    missing: IndexVector
    rows: IndexVector

    def __str__(self) -> str:
        return f"observed={self.observed.tolist()} ({len(self.rows)} subjects)"


def group_patterns(mask: np.ndarray) -> List[MissingnessPattern]:
    """Group rows of a boolean mask by identical observed sets, in lexicographic pattern order."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[0] == 0:
        return []
    uniq, inverse = np.unique(mask, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    cols = np.arange(mask.shape[1])
    return [
        MissingnessPattern(
            observed=cols[row],
            missing=cols[~row],
            rows=np.flatnonzero(inverse == g),
        )
        for g, row in enumerate(uniq)
    ]


def standardize_columns(
    A: np.ndarray,
    mask: Optional[np.ndarray] = None,
    names: Optional[Sequence[str]] = None,
    ddof: int = 1,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center columns to mean 0 and scale to unit sample standard deviation over observed entries.

    Constant columns are rejected. A column with a single observed entry is only centered.
    """
    A = np.asarray(A, dtype=float)
    mask = np.ones(A.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=0)
    filled = np.where(mask, A, 0.0)
    center = filled.sum(axis=0) / np.maximum(counts, 1)
    dev = np.where(mask, A - center, 0.0)
    scale = np.ones(A.shape[1])
    for j in range(A.shape[1]):
        if counts[j] <= ddof:
            continue
        sd = np.sqrt((dev[:, j] ** 2).sum() / (counts[j] - ddof))
        if not sd > 0:
            label = names[j] if names is not None else str(j)
            raise ValueError(f"Column '{label}' is constant over its observed entries")
        scale[j] = sd
    out = np.where(mask, dev / scale, A)
    return out, center, scale


class HoldoutSet(BaseModel):
    """Held-out subjects (validation or test). Columns may be entirely unobserved."""

    X: Matrix
    Y: MaskedMatrix
    mask: BoolMatrix
    subject_ids: List[str] = Field(default_factory=list, repr=False)

    @root_validator(skip_on_failure=True)
    def check_shapes(cls, values):
        X, Y, mask = values["X"], values["Y"], values["mask"]
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if mask.shape != Y.shape:
            raise ValueError(f"mask shape {mask.shape} differs from Y shape {Y.shape}")
        return values

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.Y.shape[1]


class DataSet(BaseModel):
    """Genotypes X (n x p), expression Y (n x q) and the observation mask of Y.

    Entries of Y where `mask` is False are never read by any estimator.
    """

    X: Matrix
    Y: MaskedMatrix
    mask: BoolMatrix
    subject_ids: List[str] = Field(default_factory=list, repr=False)
    predictor_names: List[str] = Field(default_factory=list, repr=False)
    response_names: List[str] = Field(default_factory=list, repr=False)
    x_center: Optional[Vector] = Field(None, repr=False)
    x_scale: Optional[Vector] = Field(None, repr=False)
    y_center: Optional[Vector] = Field(None, repr=False)
    y_scale: Optional[Vector] = Field(None, repr=False)

    _patterns: Optional[List[MissingnessPattern]] = PrivateAttr(None)

    @root_validator(skip_on_failure=True)
    def check_invariants(cls, values):
        X, Y, mask = values["X"], values["Y"], values["mask"]
        n, q = Y.shape
        if X.shape[0] != n:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {n}")
        if mask.shape != Y.shape:
            raise ValueError(f"mask shape {mask.shape} differs from Y shape {Y.shape}")
        if n == 0 or q == 0:
            raise ValueError("DataSet needs at least one subject and one response")
        empty_rows = np.flatnonzero(~mask.any(axis=1))
        if len(empty_rows):
            raise ValueError(f"Subjects without any observed response: rows {empty_rows[:10].tolist()}")
        empty_cols = np.flatnonzero(~mask.any(axis=0))
        if len(empty_cols):
            raise ValueError(f"Responses without any observed subject: columns {empty_cols.tolist()}")
        if not np.all(np.isfinite(Y[mask])):
            raise ValueError("Observed responses must be finite")
        return values

    @root_validator(skip_on_failure=True)
    def default_names(cls, values):
        n, p = values["X"].shape
        q = values["Y"].shape[1]
        for key, size, prefix in (
            ("subject_ids", n, "subject"),
            ("predictor_names", p, "x"),
            ("response_names", q, "y"),
        ):
            names = values.get(key) or [f"{prefix}{i + 1}" for i in range(size)]
            if len(names) != size:
                raise ValueError(f"{key} has {len(names)} entries, expected {size}")
            values[key] = list(names)
        return values

    @validator("subject_ids")
    def unique_subjects(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("Duplicate subject ids")
        return v

    @classmethod
    def from_arrays(
        cls,
        X,
        Y,
        mask=None,
        *,
        standardize: bool = False,
        subject_ids: Optional[Sequence[str]] = None,
        predictor_names: Optional[Sequence[str]] = None,
        response_names: Optional[Sequence[str]] = None,
    ) -> "DataSet":
        """Build a DataSet; `mask` defaults to the non-NaN entries of Y."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        mask = ~np.isnan(Y) if mask is None else np.asarray(mask, dtype=bool)
        kwargs = {}
        if standardize:
            X, x_center, x_scale = standardize_columns(X, names=predictor_names)
            Y, y_center, y_scale = standardize_columns(Y, mask, names=response_names)
            kwargs = dict(x_center=x_center, x_scale=x_scale, y_center=y_center, y_scale=y_scale)
        return cls(
            X=X,
            Y=Y,
            mask=mask,
            subject_ids=list(subject_ids or []),
            predictor_names=list(predictor_names or []),
            response_names=list(response_names or []),
            **kwargs,
        )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]

    @property
    def n_k(self) -> np.ndarray:
        return self.mask.sum(axis=0)

    def observed_index(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.mask[i])

    def missing_index(self, i: int) -> np.ndarray:
        return np.flatnonzero(~self.mask[i])

    @property
    def patterns(self) -> List[MissingnessPattern]:
        if self._patterns is None:
            self._patterns = group_patterns(self.mask)
        return self._patterns

    @property
    def is_complete(self) -> bool:
        return bool(self.mask.all())

    def observed_Y(self, fill: float = 0.0) -> np.ndarray:
        """Y with masked entries replaced by `fill`."""
        return np.where(self.mask, self.Y, fill)

    def observed_column_means(self) -> np.ndarray:
        return self.observed_Y().sum(axis=0) / self.n_k

    def _normalization(self):
        return dict(x_center=self.x_center, x_scale=self.x_scale, y_center=self.y_center, y_scale=self.y_scale)

    def subset(self, rows) -> "DataSet":
        rows = np.asarray(rows)
        return DataSet(
            X=self.X[rows],
            Y=self.Y[rows],
            mask=self.mask[rows],
            subject_ids=[self.subject_ids[i] for i in np.arange(self.n)[rows]],
            predictor_names=self.predictor_names,
            response_names=self.response_names,
            **self._normalization(),
        )

    def holdout(self, rows) -> HoldoutSet:
        rows = np.asarray(rows)
        return HoldoutSet(
            X=self.X[rows],
            Y=self.Y[rows],
            mask=self.mask[rows],
            subject_ids=[self.subject_ids[i] for i in np.arange(self.n)[rows]],
        )

    def with_responses(self, Y, mask=None) -> "DataSet":
        """Same subjects and genotypes with a replacement response matrix (complete unless `mask`)."""
        Y = np.asarray(Y, dtype=float)
        return DataSet(
            X=self.X,
            Y=Y,
            mask=np.ones(Y.shape, dtype=bool) if mask is None else mask,
            subject_ids=self.subject_ids,
            predictor_names=self.predictor_names,
            response_names=self.response_names,
            **self._normalization(),
        )

    def dataset_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.X).tobytes())
        digest.update(np.ascontiguousarray(self.observed_Y()).tobytes())
        digest.update(np.ascontiguousarray(self.mask).tobytes())
        return digest.hexdigest()
