"""Translated hyperboloid shells b(r) = (0, 0, r) + H^2_- and the solid regions B(r).

Every containment question reduces to the scalar level ``r_star``:
p in B(r) iff r_star(p) < r, p in b(r) iff r_star(p) == r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .exceptions import BadShellOrder, EmptyInput, NotInE
from .lorentz import Frame, LVec3, peculiar_frame_from_normal

E_TOL = 1e-12


def r_star(p):
    """Level of the shell through p: x3 + sqrt(x1^2 + x2^2 + 1)."""
    a = np.asarray(p, dtype=float)
    out = a[..., 2] + np.sqrt(a[..., 0] ** 2 + a[..., 1] ** 2 + 1.0)
    return float(out) if out.ndim == 0 else out


def in_B(p, r: float):
    """Membership in B(r) straight from the defining inequalities."""
    a = np.asarray(p, dtype=float)
    q = a[..., 0] ** 2 + a[..., 1] ** 2 - (a[..., 2] - r) ** 2
    return (q < -1.0) & (a[..., 2] <= r - 1.0)


def in_E(p, r: float, tol: float = E_TOL):
    a = np.asarray(p, dtype=float)
    return (a[..., 0] ** 2 + a[..., 1] ** 2 > 0) & (a[..., 2] <= r - 1.0 + tol)


@dataclass(frozen=True)
class CylCoords:
    s: float
    t: float
    theta: float

    def point(self, r: float) -> LVec3:
        return LVec3(self.t * math.cos(self.theta), self.t * math.sin(self.theta), r - math.sqrt(self.s**2 + 1.0))


def _cyl(p, r: float):
    a = np.asarray(p, dtype=float)
    if not np.all(in_E(a, r)):
        raise NotInE(f"point(s) outside E({r})")
    t = np.hypot(a[..., 0], a[..., 1])
    theta = np.arctan2(a[..., 1], a[..., 0])
    s = np.sqrt(np.maximum((r - a[..., 2]) ** 2 - 1.0, 0.0))
    return s, t, theta


def cyl_coords(p, r: float) -> CylCoords:
    s, t, th = _cyl(np.asarray(p, dtype=float).reshape(3), r)
    return CylCoords(float(s), float(t), float(th))


def proj_horizontal(p, r: float):
    """P_H^r: slide p horizontally onto b(r), keeping theta and x3."""
    a = np.asarray(p, dtype=float)
    s, _, th = _cyl(a, r)
    return np.stack([s * np.cos(th), s * np.sin(th), a[..., 2]], axis=-1)


def normal_horizontal(p, r: float):
    """N_H^r(p) = (cos theta, sin theta, 0)."""
    _, _, th = _cyl(p, r)
    return np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=-1)


def normal_gauss(p, r: float):
    """N_N^r(p) = (-s cos theta, -s sin theta, sqrt(s^2 + 1)), in H^2_+."""
    s, _, th = _cyl(p, r)
    return np.stack([-s * np.cos(th), -s * np.sin(th), np.sqrt(s * s + 1.0)], axis=-1)


def mu(r1: float, r2: float) -> float:
    """Sup of |p - P_H^{r2}(p)| over b(r1) cap E(r2)."""
    if not r1 < r2:
        raise BadShellOrder(f"need r1 < r2, got {r1}, {r2}")
    d = r2 - r1
    return math.sqrt(d * d + 2.0 * d)


def tangent_frame(z0, r2: float) -> Frame:
    """Peculiar frame whose w is N_N^{r2}(z0); {u, v} spans the tangent plane of
    b(r2) at P_H^{r2}(z0)."""
    a = np.asarray(z0, dtype=float).reshape(3)
    n = normal_gauss(a, r2)
    return peculiar_frame_from_normal(n, theta_hint=math.atan2(a[1], a[0]))


@dataclass(frozen=True)
class SeparationCertificate:
    margin: float
    argmin: tuple
    window: float
    step: float
    passed: bool


def tangent_plane_separation(z0, r1: float, r2: float, window: float = 1e3, step: float = 0.1,
                             n_angles: int = 256) -> SeparationCertificate:
    """Minimum of r_star - (r1 - 1) over the plane through z0 parallel to the
    tangent plane of b(r2) at P_H^{r2}(z0).

    The plane is scanned on a polar grid (radii up to ``window``; spacing
    ``step`` near the origin, geometric beyond) and the best cell is polished
    with Nelder-Mead inside the window.
    """
    if not r1 < r2:
        raise BadShellOrder(f"need r1 < r2, got {r1}, {r2}")
    a = np.asarray(z0, dtype=float).reshape(3)
    if not bool(in_E(a, r2)) or r_star(a) <= r1:
        raise NotInE("z0 must lie in E(r2) outside closure(B(r1))")
    fr = tangent_frame(a, r2)
    near = np.arange(0.0, min(window, 50.0) + step / 2, step)
    far = np.geomspace(max(near[-1], step), window, 200) if window > near[-1] else np.empty(0)
    radii = np.concatenate([near, far])
    ang = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    R, A = np.meshgrid(radii, ang, indexing="ij")
    pts = a + (R * np.cos(A))[..., None] * fr.u + (R * np.sin(A))[..., None] * fr.v
    vals = r_star(pts)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    x0 = np.array([R[k] * math.cos(A[k]), R[k] * math.sin(A[k])])

    def f(c):
        c = np.clip(c, -window, window)
        return r_star(a + c[0] * fr.u + c[1] * fr.v)

    res = optimize.minimize(f, x0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
    best = min(float(vals[k]), float(res.fun))
    c = res.x if res.fun <= vals[k] else x0
    margin = best - (r1 - 1.0)
    return SeparationCertificate(margin, tuple(a + c[0] * fr.u + c[1] * fr.v), window, step, margin >= 0)


def distance_to_B(c, r: float) -> float:
    """Euclidean distance from c to closure(B(r)) (0 inside).

    closure(B(r)) is the hypograph of the concave profile x3 = r - sqrt(h^2 + 1),
    so the nearest point lies in the meridian plane of c and the squared
    distance is convex along it.
    """
    a = np.asarray(c, dtype=float).reshape(3)
    if r_star(a) <= r:
        return 0.0
    hc = math.hypot(a[0], a[1])
    zc = a[2]

    def d2(h):
        return (h - hc) ** 2 + (zc - r + math.sqrt(h * h + 1.0)) ** 2

    hi = hc + abs(zc - r) + 2.0
    lo = -hi
    res = optimize.minimize_scalar(d2, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    return math.sqrt(min(res.fun, d2(hc)))


def _ray_lambda(z, d, r2: float, tol: float = 1e-12) -> float:
    """Smallest lambda >= 0 beyond which the unit ball around z + lambda d misses closure(B(r2))."""

    def g(lam):
        return distance_to_B(z + lam * d, r2) - 1.0

    # distance to a convex set is convex along a line
    hi = 1.0
    while g(hi) <= 0 or g(hi) < g(hi / 2):
        hi *= 2.0
        if hi > 1e12:
            raise NotInE("ray never leaves the shell")
    res = optimize.minimize_scalar(g, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12})
    lam_min, g_min = float(res.x), float(res.fun)
    if g(0.0) < g_min:
        lam_min, g_min = 0.0, g(0.0)
    if g_min > 0:
        return 0.0
    return float(optimize.brentq(g, lam_min, hi, xtol=tol))


def escape_bound_lambda(points, frame: Frame, r2: float, n_dirs: int = 64) -> float:
    """Lambda: max over sampled points z and unit (Euclidean) directions v in
    span{frame.u, frame.v} of the escape distance lambda(v, z)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyInput("no points")
    ang = np.linspace(0.0, 2 * np.pi, n_dirs, endpoint=False)
    dirs = np.cos(ang)[:, None] * frame.u + np.sin(ang)[:, None] * frame.v
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    best = 0.0
    for z in pts:
        for d in dirs:
            best = max(best, _ray_lambda(z, d, r2))
    return best
