from __future__ import annotations
from typing import TYPE_CHECKING, Any, ClassVar

import numpy as np
from pydantic import ConstrainedFloat, ConstrainedInt


class UnitInterval(ConstrainedFloat):
    ge = 0.0
    le = 1.0


class NonNegativeFloat(ConstrainedFloat):
    ge = 0.0


class Tolerance(ConstrainedFloat):
    gt = 0.0


class PositiveInt(ConstrainedInt):
    ge = 1


class _ArrayType:
    """Validates array-likes into read-only numpy arrays of a fixed rank and dtype."""

    ndim: ClassVar[int] = 2
    dtype: ClassVar[Any] = float
    allow_nan: ClassVar[bool] = False

    @classmethod
    def __get_validators__(cls):
        # one or more validators may be yielded which will be called in the
        # order to validate the input
        yield cls.validate
        yield cls.validate_finite

    @classmethod
    def __modify_schema__(cls, field_schema):
        field_schema.update(type="array", description=f"{cls.ndim}-d numeric array")

    @classmethod
    def validate(cls, v: Any) -> np.ndarray:
        try:
            arr = np.array(v, dtype=cls.dtype)
        except (TypeError, ValueError) as exc:
            raise TypeError(f"{cls.__name__} expects a numeric array-like") from exc
        if arr.ndim != cls.ndim:
            raise ValueError(f"{cls.__name__} must have {cls.ndim} dimension(s), got shape {arr.shape}")
        arr.setflags(write=False)
        return arr

    @classmethod
    def validate_finite(cls, arr: np.ndarray) -> np.ndarray:
        if cls.allow_nan or arr.dtype.kind not in "fc":
            return arr
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{cls.__name__} contains non-finite entries")
        return arr


if TYPE_CHECKING:
    Matrix = np.ndarray
    MaskedMatrix = np.ndarray
    Vector = np.ndarray
    MaskedVector = np.ndarray
    BoolMatrix = np.ndarray
    IndexVector = np.ndarray
else:

    class Matrix(_ArrayType):
        ndim = 2

    class MaskedMatrix(_ArrayType):
        """Real matrix whose masked-out entries may hold anything, NaN included."""

        ndim = 2
        allow_nan = True

    class Vector(_ArrayType):
        ndim = 1

    class MaskedVector(_ArrayType):
        ndim = 1
        allow_nan = True

    class BoolMatrix(_ArrayType):
        ndim = 2
        dtype = bool

    class IndexVector(_ArrayType):
        ndim = 1
        dtype = np.intp
