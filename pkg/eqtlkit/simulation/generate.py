"""Synthetic multi-tissue expression data with shared and tissue-specific eQTLs,
block-correlated errors, R2-targeted noise and Bernoulli missingness."""
from __future__ import annotations
import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import Field
from scipy.stats import norm

from eqtlkit.BaseModel import BaseModel
from eqtlkit.DataSet import DataSet, HoldoutSet, standardize_columns
from eqtlkit.array_types import BoolMatrix, IndexVector, Matrix
from eqtlkit.simulation.config import DEFAULT_BLOCK_EDGES, ConfigurationError, SimConfig, SimTruth
from eqtlkit.tsv import read_matrix

LOGGER = logging.getLogger(__name__)

MAF_RANGE = (0.05, 0.5)
MAX_ATTEMPTS = 100


def _synthetic_dosages(n: int, p: int, ld_corr: float, rng: np.random.Generator) -> np.ndarray:
    """AR(1) latent normal per subject, thresholded per SNP into 0/1/2 allele counts under
    Hardy-Weinberg proportions for a uniform minor-allele frequency."""
    Z = np.empty((n, p))
    Z[:, 0] = rng.standard_normal(n)
    innovation = np.sqrt(1.0 - ld_corr**2)
    for j in range(1, p):
        Z[:, j] = ld_corr * Z[:, j - 1] + innovation * rng.standard_normal(n)
    maf = rng.uniform(*MAF_RANGE, size=p)
    upper = norm.ppf(1.0 - maf**2)
    lower = norm.ppf((1.0 - maf) ** 2)
    return (Z > lower).astype(float) + (Z > upper).astype(float)


def prune_correlated(X, threshold: float = 0.95) -> np.ndarray:
    """Greedy left-to-right pruning: keep a column unless |Cor| with a kept column exceeds threshold."""
    X = np.asarray(X, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        cor = np.abs(np.atleast_2d(np.corrcoef(X, rowvar=False)))
    cor = np.nan_to_num(cor, nan=0.0)
    kept: List[int] = []
    for j in range(X.shape[1]):
        if not kept or cor[j, kept].max() <= threshold:
            kept.append(j)
    return np.array(kept, dtype=np.intp)


def gen_design(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Standardized n x p genotype design, synthetic or drawn from the rows of a genotype file."""
    if cfg.x_source == "file":
        _, _, G = read_matrix(cfg.genotype_path)
        if G.shape[0] < cfg.n:
            raise ConfigurationError(f"{cfg.genotype_path} has {G.shape[0]} subjects, {cfg.n} requested")
        G = G[np.sort(rng.choice(G.shape[0], cfg.n, replace=False))]
        G = G[:, G.std(axis=0) > 0]
        if cfg.prune_threshold is not None:
            G = G[:, prune_correlated(G, cfg.prune_threshold)]
        if G.shape[1] < cfg.p:
            raise ConfigurationError(f"Only {G.shape[1]} usable predictors in {cfg.genotype_path}, {cfg.p} requested")
        G = G[:, : cfg.p]
    else:
        G = _synthetic_dosages(cfg.n, cfg.p, cfg.ld_corr, rng)
        for _ in range(MAX_ATTEMPTS):
            constant = np.flatnonzero(G.std(axis=0) == 0)
            if not len(constant):
                break
            G[:, constant] = _synthetic_dosages(cfg.n, len(constant), cfg.ld_corr, rng)
        else:
            raise ConfigurationError("Could not draw non-constant genotype columns; increase n")
    X, _, _ = standardize_columns(G)
    return X


def gen_beta_star(cfg: SimConfig, rng: np.random.Generator) -> SimTruth:
    """beta* = B o S + B o U with s shared rows in S and disjoint private rows per tissue in U."""
    p, q, s, k = cfg.p, cfg.q, cfg.s, cfg.per_tissue_eqtls
    private = k - s
    if q * private > p - s:
        raise ConfigurationError(
            f"{q} tissues x {private} private eQTLs need {q * private} free predictors, only {p - s} available"
        )
    B = rng.standard_normal((p, q))
    shared = np.sort(rng.choice(p, size=s, replace=False))
    support = np.zeros((p, q), dtype=bool)
    support[shared] = True
    free = rng.permutation(np.setdiff1d(np.arange(p), shared))
    for col in range(q):
        support[free[col * private : (col + 1) * private], col] = True
    return SimTruth(beta_star=np.where(support, B, 0.0), support=support, shared_rows=shared)


def gen_sigma_E(rho: float, q: int, block_edges: Sequence[int] = DEFAULT_BLOCK_EDGES) -> np.ndarray:
    """Unit-diagonal error correlation: rho + 0.2 within the first block, rho within the second, 0 elsewhere."""
    if not 0 <= rho < 0.8:
        raise ConfigurationError(f"rho must be in [0, 0.8), got {rho}")
    first, second = block_edges
    if q < second:
        raise ConfigurationError(f"The block layout needs q >= {second}, got q = {q}; pass smaller block_edges")
    sigma = np.zeros((q, q))
    sigma[:first, :first] = rho + 0.2
    sigma[first:second, first:second] = rho
    np.fill_diagonal(sigma, 1.0)
    if np.linalg.eigvalsh(sigma)[0] <= 0:
        raise ConfigurationError(f"Error correlation with rho = {rho} is not positive definite")
    return sigma


def gen_noise_scale(beta_star, X, sigma_E, r2: float) -> np.ndarray:
    """d_k = sqrt(v_k (1 - r2) / (r2 sigma_kk)) with v_k the empirical variance of X beta*_k."""
    if not 0 < r2 < 1:
        raise ConfigurationError(f"r2 must be in (0, 1), got {r2}")
    v = np.var(np.asarray(X) @ np.asarray(beta_star), axis=0)
    if np.any(v == 0):
        raise ConfigurationError(f"Tissues {np.flatnonzero(v == 0).tolist()} have no genetic signal")
    return np.sqrt(v * (1.0 - r2) / (r2 * np.diag(np.asarray(sigma_E))))


class SimulatedData(BaseModel):
    train: DataSet
    valid: HoldoutSet
    test: HoldoutSet
    Y_train_complete: Matrix = Field(repr=False, title="Training responses before masking, for the oracle methods")
    X: Matrix = Field(repr=False, title="Full design over all subjects")
    Y: Matrix = Field(repr=False, title="Complete responses over all subjects")
    mask: BoolMatrix = Field(repr=False, title="Observation mask over all subjects (test rows complete)")
    truth: SimTruth
    train_rows: IndexVector = Field(repr=False)
    valid_rows: IndexVector = Field(repr=False)
    test_rows: IndexVector = Field(repr=False)

    @property
    def split_labels(self) -> List[str]:
        labels = [""] * len(self.X)
        for name, rows in (("train", self.train_rows), ("valid", self.valid_rows), ("test", self.test_rows)):
            for i in rows:
                labels[i] = name
        return labels


def _draw_mask(n: int, q: int, miss_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli mask redrawn for empty columns and subjects until each has an observed entry."""
    mask = rng.random((n, q)) >= miss_prob
    for _ in range(MAX_ATTEMPTS):
        empty_cols = np.flatnonzero(~mask.any(axis=0))
        empty_rows = np.flatnonzero(~mask.any(axis=1))
        if not len(empty_cols) and not len(empty_rows):
            return mask
        mask[:, empty_cols] = rng.random((n, len(empty_cols))) >= miss_prob
        mask[empty_rows] = rng.random((len(empty_rows), q)) >= miss_prob
    raise ConfigurationError(f"Could not draw a training mask with observations in every column and subject "
                             f"after {MAX_ATTEMPTS} attempts (miss_prob = {miss_prob})")


def gen_dataset(cfg: SimConfig, truth: SimTruth, rng: np.random.Generator, X: Optional[np.ndarray] = None) -> SimulatedData:
    """Y = X beta* + E with E ~ N(0, D Sigma_E D); train and validation responses masked, test complete.

    X comes centered from `gen_design` and E has mean zero, so Y is centered in expectation and
    left on the scale of beta*. Files written from it are centered again when loaded.
    """
    if truth.sigma_E is None or truth.D_E is None:
        raise ConfigurationError("SimTruth needs sigma_E and D_E before generating responses")
    X = gen_design(cfg, rng) if X is None else np.asarray(X, dtype=float)
    if X.shape != (cfg.n, cfg.p):
        raise ConfigurationError(f"Design of shape {X.shape}, expected {(cfg.n, cfg.p)}")
    cov = truth.D_E[:, None] * truth.sigma_E * truth.D_E[None, :]
    E = rng.standard_normal((cfg.n, cfg.q)) @ np.linalg.cholesky(cov).T
    Y = X @ truth.beta_star + E

    order = rng.permutation(cfg.n)
    train_rows = np.sort(order[: cfg.n_train])
    valid_rows = np.sort(order[cfg.n_train : cfg.n_train + cfg.n_valid])
    test_rows = np.sort(order[cfg.n_train + cfg.n_valid :])

    mask = np.ones((cfg.n, cfg.q), dtype=bool)
    mask[train_rows] = _draw_mask(cfg.n_train, cfg.q, cfg.miss_prob, rng)
    mask[valid_rows] = rng.random((cfg.n_valid, cfg.q)) >= cfg.miss_prob

    ids = [f"subject{i + 1}" for i in range(cfg.n)]
    train = DataSet.from_arrays(
        X[train_rows],
        np.where(mask[train_rows], Y[train_rows], np.nan),
        mask[train_rows],
        subject_ids=[ids[i] for i in train_rows],
    )

    def holdout(rows: np.ndarray) -> HoldoutSet:
        return HoldoutSet(X=X[rows], Y=np.where(mask[rows], Y[rows], np.nan), mask=mask[rows], subject_ids=[ids[i] for i in rows])

    LOGGER.debug("Simulated %d subjects, %.1f%% of training responses observed", cfg.n, 100 * mask[train_rows].mean())
    return SimulatedData(
        train=train,
        valid=holdout(valid_rows),
        test=holdout(test_rows),
        Y_train_complete=Y[train_rows],
        X=X,
        Y=Y,
        mask=mask,
        truth=truth,
        train_rows=train_rows,
        valid_rows=valid_rows,
        test_rows=test_rows,
    )


def simulate(cfg: SimConfig, X: Optional[np.ndarray] = None) -> SimulatedData:
    """One replication, deterministic in `cfg.seed`."""
    rng = np.random.default_rng(cfg.seed)
    X = gen_design(cfg, rng) if X is None else X
    truth = gen_beta_star(cfg, rng)
    sigma_E = gen_sigma_E(cfg.rho, cfg.q, cfg.block_edges)
    D_E = gen_noise_scale(truth.beta_star, X, sigma_E, cfg.r2)
    truth = SimTruth(
        beta_star=truth.beta_star, support=truth.support, shared_rows=truth.shared_rows, sigma_E=sigma_E, D_E=D_E
    )
    return gen_dataset(cfg, truth, rng, X)
