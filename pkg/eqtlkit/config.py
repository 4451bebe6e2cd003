from __future__ import annotations
import logging
from pathlib import Path

try:
    from typing import Literal
except ImportError:
    from typing_extensions import Literal  # type: ignore
from typing import Dict, Type, TypeVar, Union

from pydantic import Field
from pydantic.fields import SHAPE_LIST, SHAPE_SEQUENCE, SHAPE_TUPLE_ELLIPSIS
from eqtlkit.BaseModel import BaseModel
from eqtlkit.array_types import NonNegativeFloat, PositiveInt, Tolerance, UnitInterval

LOGGER = logging.getLogger(__name__)
M = TypeVar("M", bound=BaseModel)

StepSizeRule = Literal["fixed-lipschitz", "backtracking"]


class PenaltyConfig(BaseModel):
    """Tuning triple (alpha, lambda_beta, lambda_omega) of the penalized likelihood."""

    alpha: UnitInterval = Field(0.5, title="Mix between entrywise l1 (1) and row-wise group (0) penalties")
    lambda_beta: NonNegativeFloat = Field(0.0, title="Penalty weight on the coefficient matrix")
    lambda_omega: NonNegativeFloat = Field(0.0, title="Penalty weight on the precision matrix")

    def __str__(self) -> str:
        return f"alpha={self.alpha:g}, lambda_beta={self.lambda_beta:g}, lambda_omega={self.lambda_omega:g}"


class SolverConfig(BaseModel):
    max_ecm_iters: PositiveInt = 200
    ecm_tol: Tolerance = Field(1e-6, title="Relative change of the penalized objective between ECM iterations")
    max_prox_iters: PositiveInt = 2000
    prox_tol: Tolerance = Field(1e-6, title="Relative fixed-point residual of the proximal gradient solver")
    step_size_rule: StepSizeRule = "fixed-lipschitz"
    backtracking_shrink: float = Field(0.5, gt=0.0, lt=1.0)
    glasso_tol: Tolerance = 1e-6
    max_glasso_iters: PositiveInt = 500
    penalize_omega_diagonal: bool = True
    seed: int = 0
    n_jobs: int = Field(1, title="Worker threads for grid paths, folds and replications (-1: all cores)")


def read_flat_config(path: Union[str, Path]) -> Dict[str, str]:
    """Read a flat `key = value` file. Lines starting with `#` and blank lines are skipped."""
    flat: Dict[str, str] = {}
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{i}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if key in flat:
            raise ValueError(f"{path}:{i}: duplicate key {key!r}")
        flat[key] = value.strip()
    return flat


def config_section(model: Type[M], flat: Dict[str, str], **overrides) -> M:
    """Build `model` from the keys of `flat` that name its fields; comma-separated values fill list fields."""
    values = {}
    for name, field in model.__fields__.items():
        if name not in flat:
            continue
        raw = flat[name]
        if field.shape in (SHAPE_LIST, SHAPE_SEQUENCE, SHAPE_TUPLE_ELLIPSIS):
            values[name] = [v.strip() for v in raw.split(",") if v.strip()]
        elif raw.lower() in ("none", ""):
            values[name] = None
        else:
            values[name] = raw
    values.update({k: v for k, v in overrides.items() if v is not None})
    return model.parse_obj(values)


def warn_unknown_keys(flat: Dict[str, str], *models: Type[BaseModel]) -> None:
    known = set()
    for model in models:
        known.update(model.__fields__)
    for key in sorted(set(flat) - known):
        LOGGER.warning("Ignoring unknown configuration key '%s'", key)
