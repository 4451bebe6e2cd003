from __future__ import annotations
try:
    from typing import Literal
except ImportError:
    from typing_extensions import Literal  # type: ignore
from typing import List, Optional

import numpy as np
from pydantic import Field, root_validator, validator

from eqtlkit.BaseModel import BaseModel
from eqtlkit.array_types import BoolMatrix, IndexVector, Matrix, PositiveInt, UnitInterval, Vector


class ConfigurationError(ValueError):
    """A simulation setup that cannot be generated as requested."""


XSource = Literal["synthetic-normal", "file"]
DEFAULT_BLOCK_EDGES = [10, 20]


class SimConfig(BaseModel):
    """Generator parameters. Defaults follow the reference setting: 620 subjects split
    400/110/110, 29 tissues with 20 eQTLs each, 15 of them shared."""

    n: PositiveInt = 620
    p: PositiveInt = 1178
    q: PositiveInt = 29
    s: int = Field(15, ge=0, title="Shared eQTLs (rows nonzero in every tissue)")
    per_tissue_eqtls: PositiveInt = 20
    rho: float = Field(0.5, ge=0.0, lt=0.8, title="Within-block error correlation of the second block")
    r2: float = Field(0.1, gt=0.0, lt=1.0, title="Target population R2 per tissue")
    miss_prob: float = Field(0.55, ge=0.0, lt=1.0)
    seed: int = 0
    n_train: PositiveInt = 400
    n_valid: PositiveInt = 110
    n_test: PositiveInt = 110
    x_source: XSource = "synthetic-normal"
    genotype_path: Optional[str] = None
    ld_corr: UnitInterval = Field(0.7, title="Lag-one correlation of the latent synthetic design")
    prune_threshold: Optional[UnitInterval] = Field(None, title="Drop genotype-file predictors correlated above this")
    block_edges: List[PositiveInt] = Field(DEFAULT_BLOCK_EDGES, title="Ends of the two correlated error blocks")

    @validator("block_edges")
    def two_increasing_edges(cls, v):
        if len(v) != 2 or not v[0] < v[1]:
            raise ValueError("block_edges needs two increasing values (end of block 1, end of block 2)")
        return v

    @root_validator(skip_on_failure=True)
    def check_consistency(cls, values):
        if not values["s"] <= values["per_tissue_eqtls"] <= values["p"]:
            raise ValueError("Need 0 <= s <= per_tissue_eqtls <= p")
        if values["n_train"] + values["n_valid"] + values["n_test"] != values["n"]:
            raise ValueError("n_train + n_valid + n_test must equal n")
        if values["x_source"] == "file" and not values.get("genotype_path"):
            raise ValueError("x_source 'file' needs genotype_path")
        return values


class SimTruth(BaseModel):
    beta_star: Matrix
    support: BoolMatrix
    shared_rows: IndexVector = Field(repr=False)
    sigma_E: Optional[Matrix] = Field(None, repr=False)
    D_E: Optional[Vector] = None

    @root_validator(skip_on_failure=True)
    def support_matches(cls, values):
        if values["support"].shape != values["beta_star"].shape:
            raise ValueError("support and beta_star shapes differ")
        if np.any((values["beta_star"] != 0) & ~values["support"]):
            raise ValueError("beta_star has nonzeros outside the support")
        return values
