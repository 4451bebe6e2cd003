import numpy as np
import pydantic


def _encode_array(arr: np.ndarray):
    if arr.dtype.kind != "f":
        return arr.tolist()
    if arr.ndim > 1:
        return [_encode_array(row) for row in arr]
    # JSON has no NaN literal we can rely on
    return [None if np.isnan(v) else float(v) for v in arr]


class BaseModel(pydantic.BaseModel):
    """Immutable pydantic model that may hold numpy arrays."""

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False
        copy_on_model_validation = "none"
        json_encoders = {
            np.ndarray: _encode_array,
            np.floating: float,
            np.integer: int,
            np.bool_: bool,
        }

    def __eq__(self, other: object) -> bool:
        if type(self) is not type(other):
            return False
        for k, v in self.__dict__.items():
            w = other.__dict__.get(k)
            if isinstance(v, np.ndarray) or isinstance(w, np.ndarray):
                if not (isinstance(v, np.ndarray) and isinstance(w, np.ndarray)):
                    return False
                if v.shape != w.shape or not np.array_equal(v, w, equal_nan=v.dtype.kind == "f"):
                    return False
            elif v != w:
                return False
        return True

    def __repr_args__(self):
        for k, v in super().__repr_args__():
            if isinstance(v, np.ndarray):
                # shapes only: no huge matrices in the terminal or notebook
                yield k, _ShapeRepr(v)
            else:
                yield k, v


class _ShapeRepr:
    def __init__(self, arr: np.ndarray) -> None:
        self.arr = arr

    def __repr__(self) -> str:
        return f"array<{self.arr.dtype}>{self.arr.shape}"
