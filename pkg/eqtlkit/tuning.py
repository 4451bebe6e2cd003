"""Validation-set tuning of the penalty parameters and the k-fold evaluation protocol."""
from __future__ import annotations
import logging
import math

try:
    from typing import Literal
except ImportError:
    from typing_extensions import Literal  # type: ignore
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import Field, validator
from tqdm import tqdm

from eqtlkit.BaseModel import BaseModel
from eqtlkit.DataSet import DataSet, HoldoutSet
from eqtlkit.ModelFit import DegenerateCovarianceError, ModelFit
from eqtlkit.SolverOutcome import NonConvergenceError
from eqtlkit.array_types import IndexVector, Matrix, NonNegativeFloat, PositiveInt, UnitInterval
from eqtlkit.baselines import EnGrid, ElasticNetFit, fit_en, fit_oracle_en, knn_impute, mt_null_threshold, run_mt
from eqtlkit.baselines.knn import DEFAULT_NEIGHBORS
from eqtlkit.config import PenaltyConfig, SolverConfig
from eqtlkit.ecm import EcmTrace, covmt_null_threshold, fit_covmt
from eqtlkit.glasso import UnboundedProblemError
from eqtlkit.metrics import MetricReport, evaluate, r2_from_predictions

LOGGER = logging.getLogger(__name__)

Method = Literal["covmt", "mt", "en", "knn-mt", "or-mt", "or-en"]
METHODS: Tuple[str, ...] = ("covmt", "mt", "en", "knn-mt", "or-mt", "or-en")
ZERO_TOL = 1e-12

# failures of a single grid point that leave the rest of the grid usable
FIT_ERRORS = (NonConvergenceError, DegenerateCovarianceError, UnboundedProblemError, FloatingPointError, ValueError)


class TuningGrid(BaseModel):
    """Penalty grid. Without explicit `lambda_betas`, each alpha gets `n_lambda_beta`
    log-spaced values from the null threshold down by `lambda_ratio`."""

    alphas: List[UnitInterval] = [0.25, 0.5, 0.75, 1.0]
    lambda_betas: Optional[List[NonNegativeFloat]] = None
    n_lambda_beta: PositiveInt = 20
    lambda_ratio: float = Field(1e-3, gt=0.0, lt=1.0)
    lambda_omegas: List[NonNegativeFloat] = [0.01, 0.05, 0.1, 0.2, 0.4]
    knn_neighbors: PositiveInt = DEFAULT_NEIGHBORS

    @validator("alphas", "lambda_omegas")
    def nonempty_sorted(cls, v):
        if not v:
            raise ValueError("Grid values must not be empty")
        return sorted(set(v))

    @validator("lambda_betas")
    def nonempty_path(cls, v):
        if v is not None and not v:
            raise ValueError("lambda_betas must not be empty")
        return None if v is None else sorted(set(v), reverse=True)

    def lambda_path(self, lambda_max: float) -> List[float]:
        if self.lambda_betas is not None:
            return list(self.lambda_betas)
        if lambda_max <= 0:
            return [0.0]
        return list(lambda_max * np.logspace(0, math.log10(self.lambda_ratio), self.n_lambda_beta))

    def en_grid(self) -> EnGrid:
        return EnGrid(alphas=self.alphas, n_lambdas=self.n_lambda_beta, lambda_ratio=self.lambda_ratio)


class GridPoint(BaseModel):
    alpha: float
    lambda_beta: float
    lambda_omega: float
    valid_r2: float = math.nan
    status: str = "ok"
    message: Optional[str] = None
    response: Optional[int] = Field(None, title="Response index, for per-response (elastic net) selections")


class GridSearchError(RuntimeError):
    """Every grid point failed. Carries the failed points."""

    def __init__(self, method: str, failures: List[GridPoint]):
        self.failures = failures
        reasons = "; ".join(f"({p.alpha:g}, {p.lambda_beta:g}, {p.lambda_omega:g}): {p.message}" for p in failures[:5])
        super().__init__(f"All {len(failures)} grid points failed for {method}: {reasons}")


class GridSearchResult(BaseModel):
    method: str
    fit: ModelFit
    best: Optional[PenaltyConfig] = Field(None, title="Selected penalties (None for per-response selection)")
    valid_r2: float
    table: List[GridPoint] = Field([], repr=False)
    trace: Optional[EcmTrace] = Field(None, repr=False)
    en: Optional[ElasticNetFit] = Field(None, repr=False)

    @property
    def beta(self) -> np.ndarray:
        return self.fit.beta

    def table_frame(self) -> pd.DataFrame:
        return pd.DataFrame([p.dict() for p in self.table])


def _selection_key(r2: float, pen: PenaltyConfig) -> Tuple[float, float, float, float]:
    # ties go to the larger lambda_beta (sparser), then the larger lambda_omega, then the larger alpha
    return (r2 if math.isfinite(r2) else -math.inf, pen.lambda_beta, pen.lambda_omega, pen.alpha)


def _valid_r2(beta: np.ndarray, valid: HoldoutSet, train_means: np.ndarray) -> float:
    return r2_from_predictions(valid.Y, valid.X @ beta, train_means, valid.mask).average


def _run_path(
    method: str,
    train: DataSet,
    valid: HoldoutSet,
    alpha: float,
    lambda_omega: float,
    lambdas: List[float],
    cfg: SolverConfig,
):
    """Fit one warm-started lambda_beta path; returns the table rows and the best point of the path."""
    train_means = train.observed_column_means()
    rows: List[GridPoint] = []
    best = None
    warm_fit: Optional[ModelFit] = None
    for lam in lambdas:
        pen = PenaltyConfig(alpha=alpha, lambda_beta=lam, lambda_omega=lambda_omega)
        trace = None
        try:
            if method == "covmt":
                fit, trace = fit_covmt(train, pen, cfg, init=warm_fit)
            else:
                beta0 = None if warm_fit is None else warm_fit.beta
                fit = ModelFit.identity(train.p, train.q).with_beta(run_mt(train, pen, cfg, beta_init=beta0).beta)
        except FIT_ERRORS as exc:
            LOGGER.warning("%s failed at %s: %s", method, pen, exc)
            rows.append(GridPoint(alpha=alpha, lambda_beta=lam, lambda_omega=lambda_omega, status="failed", message=str(exc)))
            continue
        warm_fit = fit
        r2 = _valid_r2(fit.beta, valid, train_means)
        rows.append(GridPoint(alpha=alpha, lambda_beta=lam, lambda_omega=lambda_omega, valid_r2=r2))
        key = _selection_key(r2, pen)
        if best is None or key > best[0]:
            best = (key, pen, fit, trace, r2)
    return rows, best


def _penalized_search(
    method: str, train: DataSet, valid: HoldoutSet, grid: TuningGrid, cfg: SolverConfig, progress: bool
) -> GridSearchResult:
    omegas = grid.lambda_omegas if method == "covmt" else [0.0]
    paths = []
    for alpha in grid.alphas:
        lam_max = covmt_null_threshold(train, alpha) if method == "covmt" else mt_null_threshold(train, alpha)
        for lambda_omega in omegas:
            paths.append((alpha, lambda_omega, grid.lambda_path(lam_max)))
    solver = "covmt" if method == "covmt" else "mt"
    results = Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
        delayed(_run_path)(solver, train, valid, alpha, lambda_omega, lambdas, cfg)
        for alpha, lambda_omega, lambdas in tqdm(paths, desc=f"{method} grid", disable=not progress)
    )
    table = [row for rows, _ in results for row in rows]
    candidates = [best for _, best in results if best is not None]
    if not candidates:
        raise GridSearchError(method, table)
    _, pen, fit, trace, r2 = max(candidates, key=lambda c: c[0])
    LOGGER.info("%s: selected %s with validation R2 %.4f", method, pen, r2)
    return GridSearchResult(method=method, fit=fit, best=pen, valid_r2=r2, table=table, trace=trace)


def _en_search(train: DataSet, valid: HoldoutSet, grid: TuningGrid, cfg: SolverConfig, Y_complete=None) -> GridSearchResult:
    if Y_complete is None:
        en = fit_en(train, valid, grid.en_grid(), n_jobs=cfg.n_jobs)
    else:
        en = fit_oracle_en(train, Y_complete, valid, grid.en_grid(), n_jobs=cfg.n_jobs)
    table = [
        GridPoint(
            alpha=en.alpha[k],
            lambda_beta=en.lambda_[k],
            lambda_omega=0.0,
            valid_r2=en.valid_r2[k],
            status="flagged" if k in en.flagged else "ok",
            response=k,
        )
        for k in range(train.q)
    ]
    fit = ModelFit.identity(train.p, train.q).with_beta(en.beta)
    r2 = _valid_r2(en.beta, valid, train.observed_column_means())
    LOGGER.info("en: per-response selection with validation R2 %.4f", r2)
    return GridSearchResult(method="en", fit=fit, valid_r2=r2, table=table, en=en)


def grid_search(
    train: DataSet,
    valid: HoldoutSet,
    method: Method,
    grid: TuningGrid = TuningGrid(),
    cfg: SolverConfig = SolverConfig(),
    Y_complete=None,
    progress: bool = False,
) -> GridSearchResult:
    """Fit every grid point on `train` and keep the one with the best validation R2 averaged over responses.

    Paths over lambda_beta (largest first) are warm-started within each (alpha, lambda_omega)
    and run concurrently. The oracle methods need the complete training responses `Y_complete`.
    """
    if method not in METHODS:
        raise ValueError(f"Unknown method {method!r}, expected one of {', '.join(METHODS)}")
    if method.startswith("or-") and Y_complete is None:
        raise ValueError(f"{method} needs the complete training responses")
    if valid.X.shape[1] != train.p or valid.q != train.q:
        raise ValueError("Validation set does not match the training dimensions")

    if method == "en":
        return _en_search(train, valid, grid, cfg)
    if method == "or-en":
        result = _en_search(train, valid, grid, cfg, Y_complete)
        return result.copy(update=dict(method=method))
    if method == "knn-mt":
        train = train.with_responses(knn_impute(train, grid.knn_neighbors))
    elif method == "or-mt":
        train = train.with_responses(Y_complete)
    result = _penalized_search(method, train, valid, grid, cfg, progress)
    return result.copy(update=dict(method=method))


class FoldResult(BaseModel):
    fold: int
    valid_fold: int
    test_rows: IndexVector = Field(repr=False)
    predictions: Matrix = Field(repr=False)
    report: MetricReport
    best: Optional[PenaltyConfig] = None
    omega: Matrix = Field(repr=False)


class CVResult(BaseModel):
    method: str
    assignment: IndexVector = Field(repr=False, title="Fold of every subject")
    folds: List[FoldResult]

    @property
    def reports(self) -> List[MetricReport]:
        return [f.report for f in self.folds]

    @property
    def mean_r2(self) -> float:
        return float(np.nanmean([f.report.r2.average for f in self.folds]))

    @property
    def omega_support_frequency(self) -> np.ndarray:
        """Fraction of folds whose selected precision links each pair of responses."""
        support = np.array([np.abs(f.omega) > ZERO_TOL for f in self.folds], dtype=float)
        freq = support.mean(axis=0)
        np.fill_diagonal(freq, 1.0)
        return freq

    def report_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row for f in self.folds for row in f.report.long_rows()])


def assign_folds(n: int, folds: int, seed: int) -> np.ndarray:
    """Balanced random fold labels 0..folds-1, deterministic in `seed`."""
    if not 3 <= folds <= n:
        raise ValueError(f"Need 3 <= folds <= n ({n}), got {folds}")
    labels = np.empty(n, dtype=np.intp)
    labels[np.random.default_rng(seed).permutation(n)] = np.arange(n) % folds
    return labels


def kfold_cv(
    data: DataSet,
    method: Method,
    grid: TuningGrid = TuningGrid(),
    folds: int = 5,
    cfg: SolverConfig = SolverConfig(),
    progress: bool = False,
) -> CVResult:
    """Each fold serves once as test fold; the next fold (cyclically) validates, the rest train."""
    if method.startswith("or-"):
        raise ValueError("Oracle methods need complete responses and are not available in cross-validation")
    assignment = assign_folds(data.n, folds, cfg.seed)
    results = []
    for t in tqdm(range(folds), desc=f"{method} folds", disable=not progress):
        v = (t + 1) % folds
        test_rows = np.flatnonzero(assignment == t)
        valid_rows = np.flatnonzero(assignment == v)
        train_rows = np.flatnonzero((assignment != t) & (assignment != v))
        try:
            train = data.subset(train_rows)
        except ValueError as exc:
            raise ValueError(f"Training folds for test fold {t} violate the data invariants: {exc}") from exc
        search = grid_search(train, data.holdout(valid_rows), method, grid, cfg)
        test = data.holdout(test_rows)
        report = evaluate(search.beta, test, train.observed_column_means(), method=method, fold=t)
        LOGGER.info("Fold %d (validation fold %d): test R2 %.4f", t, v, report.average_r2)
        results.append(
            FoldResult(
                fold=t,
                valid_fold=v,
                test_rows=test_rows,
                predictions=test.X @ search.beta,
                report=report,
                best=search.best,
                omega=search.fit.omega,
            )
        )
    return CVResult(method=method, assignment=assignment, folds=results)
