"""Linear algebra of Lorentz-Minkowski 3-space L^3 = (R^3, dx1^2 + dx2^2 - dx3^2).

Vectors are plain ``(..., 3)`` float arrays for the vectorised paths; ``LVec3``
is the small immutable value type returned by scalar APIs.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidFrame, NotOnH2, NotTimelikeUp, SingularFrame

FRAME_TOL = 1e-12
SIGNATURE = np.array([1.0, 1.0, -1.0])
INFINITY = complex(math.inf, 0.0)


class LVec3(NamedTuple):
    x1: float
    x2: float
    x3: float

    @property
    def array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    def lorentz_norm_sq(self) -> float:
        return self.x1 * self.x1 + self.x2 * self.x2 - self.x3 * self.x3

    def euclid_norm_sq(self) -> float:
        return self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3

    @classmethod
    def of(cls, v) -> "LVec3":
        a = np.asarray(v, dtype=float).reshape(3)
        return cls(float(a[0]), float(a[1]), float(a[2]))


def lorentz_inner(a, b):
    """<a, b> = a1 b1 + a2 b2 - a3 b3, broadcast over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] - a[..., 2] * b[..., 2]
    return float(out) if out.ndim == 0 else out


def lorentz_norm_sq(v):
    return lorentz_inner(v, v)


def euclid_norm(v):
    out = np.linalg.norm(np.asarray(v, dtype=float), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def causal_character(v, tol: float = 1e-12) -> str:
    """'spacelike', 'timelike' or 'lightlike'; the zero vector is spacelike.

    ``tol`` is relative to the Euclidean norm squared, so (1, 1, sqrt 2) counts
    as lightlike despite rounding in sqrt(2)**2.
    """
    a = np.asarray(v, dtype=float).reshape(3)
    e2 = float(a @ a)
    if e2 == 0.0:
        return "spacelike"
    q = lorentz_norm_sq(a)
    if abs(q) <= tol * e2:
        return "lightlike"
    return "spacelike" if q > 0 else "timelike"


def on_h2(p, tol: float = 1e-9) -> bool:
    a = np.asarray(p, dtype=float).reshape(3)
    return abs(lorentz_norm_sq(a) + 1.0) < tol * max(1.0, float(a @ a)) and abs(a[2]) >= 1.0 - tol


def stereographic(p, tol: float = 1e-9) -> complex:
    """sigma(x) = (x1 + i x2) / (1 - x3) on H^2, with sigma(0, 0, 1) = infinity."""
    a = np.asarray(p, dtype=float).reshape(3)
    if not on_h2(a, tol):
        raise NotOnH2(f"{tuple(a)} is not on the hyperbolic sphere")
    if abs(a[2] - 1.0) <= tol and abs(a[0]) <= tol and abs(a[1]) <= tol:
        return INFINITY
    return complex(a[0], a[1]) / (1.0 - a[2])


def inverse_stereographic(w: complex) -> LVec3:
    """Inverse of ``stereographic``; |w| < 1 lands on H^2_-, |w| > 1 on H^2_+."""
    if cmath.isinf(w):
        return LVec3(0.0, 0.0, 1.0)
    m = abs(w) ** 2
    if abs(m - 1.0) < 1e-15:
        raise NotOnH2("the unit circle is not in the image of sigma")
    x3 = (m + 1.0) / (m - 1.0)
    xy = 2.0 * w / (1.0 - m)
    return LVec3(xy.real, xy.imag, x3)


@dataclass(frozen=True, eq=False)
class Frame:
    """Ordered L^3-orthonormal basis {u, v, w} (w timelike).

    Validity is checked once at construction. ``peculiar`` additionally
    requires <u, v>_0 = <v, w>_0 = 0 and v horizontal.
    """

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    peculiar: bool = False

    def __post_init__(self):
        for name in ("u", "v", "w"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        bad = self.defects()
        if bad:
            raise InvalidFrame("; ".join(bad))

    def relations(self) -> dict[str, float]:
        """Residuals of the five L^3 relations, plus the two Euclidean ones if peculiar."""
        u, v, w = self.u, self.v, self.w
        res = {
            "<u,v>": lorentz_inner(u, v),
            "<u,w>": lorentz_inner(u, w),
            "<v,w>": lorentz_inner(v, w),
            "|u|^2-1": lorentz_inner(u, u) - 1.0,
            "|v|^2-1": lorentz_inner(v, v) - 1.0,
            "|w|^2+1": lorentz_inner(w, w) + 1.0,
        }
        if self.peculiar:
            res["<u,v>_0"] = float(u @ v)
            res["<v,w>_0"] = float(v @ w)
            res["v.x3"] = float(v[2])
        return res

    def defects(self, tol: float = FRAME_TOL) -> list[str]:
        # scale by component size so frames with large boost stay valid
        scale = max(1.0, float(np.max(np.abs(np.stack([self.u, self.v, self.w]))))) ** 2
        return [f"{k}={r:.3g}" for k, r in self.relations().items() if abs(r) > tol * scale]

    @property
    def matrix(self) -> np.ndarray:
        """Columns u, v, w: canonical coordinates = matrix @ frame coordinates."""
        return np.column_stack([self.u, self.v, self.w])

    @property
    def eta(self) -> float:
        """Euclidean length of u (>= 1 for peculiar frames)."""
        return float(np.linalg.norm(self.u))

    def coords(self, x) -> np.ndarray:
        """Coordinates of (an array of) vectors in this frame."""
        return frame_change_coords(x, self)

    def combine(self, c) -> np.ndarray:
        return np.asarray(c) @ self.matrix.T

    def to_dict(self) -> dict:
        return {"u": self.u.tolist(), "v": self.v.tolist(), "w": self.w.tolist(), "peculiar": self.peculiar}

    @classmethod
    def from_dict(cls, d: dict) -> "Frame":
        return cls(np.array(d["u"]), np.array(d["v"]), np.array(d["w"]), bool(d.get("peculiar", False)))


CANONICAL = Frame(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]), peculiar=True)


def frame_change_coords(x, frame: Frame) -> np.ndarray:
    """Solve x = c1 u + c2 v + c3 w. Works for real or complex x of shape (..., 3).

    ``c[..., :2]`` is the v_(*,S) projection.
    """
    m = frame.matrix
    if np.linalg.cond(m) > 1e12:
        raise SingularFrame("basis matrix is numerically singular")
    x = np.asarray(x)
    flat = x.reshape(-1, 3).T
    c = np.linalg.solve(m, flat).T
    return c.reshape(x.shape)


def peculiar_frame(s: float, theta: float) -> Frame:
    """Peculiar frame whose timelike vector is (-s cos t, -s sin t, sqrt(s^2 + 1))."""
    c, sn = math.cos(theta), math.sin(theta)
    r = math.sqrt(s * s + 1.0)
    return Frame(
        np.array([r * c, r * sn, -s]),
        np.array([-sn, c, 0.0]),
        np.array([-s * c, -s * sn, r]),
        peculiar=True,
    )


def peculiar_frame_from_normal(w3, theta_hint: float = 0.0, tol: float = 1e-9) -> Frame:
    """Peculiar frame with w = w3 for a future unit timelike w3 in H^2_+.

    At the pole (s = 0) the angle is not determined by w3 and ``theta_hint``
    is used.
    """
    a = np.asarray(w3, dtype=float).reshape(3)
    if not (abs(lorentz_norm_sq(a) + 1.0) < tol * max(1.0, float(a @ a)) and a[2] >= 1.0 - tol):
        raise NotTimelikeUp(f"{tuple(a)} is not in H^2_+")
    s = math.hypot(a[0], a[1])
    theta = math.atan2(-a[1], -a[0]) if s > 0 else theta_hint
    return peculiar_frame(s, theta)


def horizontal_frame(e2) -> Frame:
    """Peculiar frame {e1, e2, (0, 0, 1)} for a horizontal unit vector e2."""
    a = np.asarray(e2, dtype=float).reshape(3)
    phi = math.atan2(a[1], a[0])
    return peculiar_frame(0.0, phi - math.pi / 2)
