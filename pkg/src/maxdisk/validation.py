"""Input coercion shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np
from shapely.geometry import Polygon

from .domain import PlanarDomain, _as_polygon
from .exceptions import EmptyInput, InputRejected
from .weierstrass import ImmersionField, WeierstrassData


def check_points(z, allow_empty: bool = False) -> np.ndarray:
    """Complex 1-d array from complex scalars, complex arrays or (N, 2) real arrays."""
    a = np.asarray(z)
    if a.dtype.kind in "fiu" and a.ndim == 2 and a.shape[1] == 2:
        a = a[:, 0] + 1j * a[:, 1]
    a = np.asarray(a, dtype=complex).reshape(-1)
    if a.size == 0 and not allow_empty:
        raise EmptyInput("no points given")
    if not np.all(np.isfinite(a)):
        raise InputRejected("points must be finite")
    return a


def check_field(X) -> ImmersionField:
    if isinstance(X, ImmersionField):
        return X
    if isinstance(X, WeierstrassData):
        return ImmersionField(X)
    raise InputRejected(f"expected ImmersionField or WeierstrassData, got {type(X).__name__}")


def check_polygon(P) -> Polygon:
    poly = _as_polygon(P)
    if poly.is_empty or not poly.is_valid:
        raise InputRejected("polygon is empty or invalid")
    return poly


def check_domain(O) -> PlanarDomain:
    if isinstance(O, PlanarDomain):
        return O
    return PlanarDomain(check_polygon(O))


def check_positive(name: str, value) -> float:
    v = float(value)
    if not (np.isfinite(v) and v > 0):
        raise InputRejected(f"{name} must be positive, got {value}")
    return v

