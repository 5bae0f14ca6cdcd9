"""Result containers shared by the solvers and the oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import Mac

METHODS = ("haroutunian", "sphere_packing", "grid_oracle")


@dataclass(frozen=True, eq=False)
class ExponentResult:
    value: float
    witness_p: np.ndarray
    witness_v: Mac
    method: str
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.value >= 0 or math.isnan(self.value)):
            raise ValueError(f"exponent must be nonnegative, got {self.value}")

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "converged": self.converged,
            "witness_p": np.asarray(self.witness_p).tolist(),
            "witness_v": self.witness_v.w.tolist(),
            "diagnostics": self.diagnostics,
        }


def jsonable(obj, digits: int = 12):
    """Plain-JSON copy of obj: floats rounded to `digits` significant digits, inf/nan as strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{digits}g}")
    return obj
