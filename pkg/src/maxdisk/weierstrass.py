"""Weierstrass data (g, f) of maximal immersions in L^3.

Phi = (i/2 (1 - g^2) f, -1/2 (1 + g^2) f, g f) dz, expressed in a frame S.
X(z) = Re int_{basepoint}^z Phi, reported in canonical coordinates unless a
frame is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from threading import Lock

import numpy as np

from .analytic import AnalyticFn, Polyline, as_fn, const, evaluate, integrate, integrate_segments, quotient, segment
from .exceptions import DegenerateData, NoPath, ZeroOfH
from .lorentz import CANONICAL, Frame, LVec3, lorentz_norm_sq

SINGULAR_BAND = 1e-3

# Phi = f * (C0 + C1 g + C2 g^2), componentwise
_C0 = np.array([0.5j, -0.5, 0.0])
_C1 = np.array([0.0, 0.0, 1.0 + 0j])
_C2 = np.array([-0.5j, -0.5, 0.0])


def _quad_in(g: AnalyticFn, a0: complex, a1: complex, a2: complex) -> AnalyticFn:
    """a0 + a1 g + a2 g^2 as a tree sharing g; zero coefficients pruned."""
    out = None
    terms = []
    if a0 != 0:
        terms.append(const(a0))
    if a1 != 0:
        terms.append(const(a1) * g if a1 != 1 else g)
    if a2 != 0:
        terms.append(const(a2) * g ** 2)
    for t in terms:
        out = t if out is None else out + t
    return out if out is not None else const(0.0)


@dataclass(frozen=True, eq=False)
class WeierstrassData:
    g: AnalyticFn
    f: AnalyticFn
    frame: Frame = CANONICAL
    basepoint: complex = 0j

    def gf_values(self, z):
        z = np.asarray(z, dtype=complex)
        return evaluate(self.g, z), evaluate(self.f, z)

    def phi_values(self, z) -> np.ndarray:
        """Coefficients of Phi in this data's frame, shape (3, *z.shape)."""
        g, f = self.gf_values(z)
        g2 = g * g
        return np.stack([0.5j * (1 - g2) * f, -0.5 * (1 + g2) * f, g * f])

    def canonical_phi_values(self, z) -> np.ndarray:
        p = self.phi_values(z)
        return np.tensordot(self.frame.matrix, p, axes=1)

    @cached_property
    def phi(self) -> tuple[AnalyticFn, AnalyticFn, AnalyticFn]:
        return phi_from_gf(self)

    def conformality_residual(self, z) -> np.ndarray:
        """|Phi1^2 + Phi2^2 - Phi3^2| / (1 + |Phi|^2)."""
        p = self.phi_values(z)
        num = np.abs(p[0] ** 2 + p[1] ** 2 - p[2] ** 2)
        return num / (1.0 + np.sum(np.abs(p) ** 2, axis=0))

    def poles(self) -> list[complex]:
        out = []
        for fn in (self.g, self.f):
            for n in fn.topo_order():
                out.extend(n.poles)
        return list(dict.fromkeys(out))

    def to_dict(self) -> dict:
        return {
            "g": self.g.to_dict(),
            "f": self.f.to_dict(),
            "frame": self.frame.to_dict(),
            "basepoint": [self.basepoint.real, self.basepoint.imag],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeierstrassData":
        return cls(AnalyticFn.from_dict(d["g"]), AnalyticFn.from_dict(d["f"]),
                   Frame.from_dict(d["frame"]), complex(*d["basepoint"]))


def phi_from_gf(data: WeierstrassData):
    g, f = data.g, data.f
    g2 = g ** 2
    return (
        const(0.5j) * (1 - g2) * f,
        const(-0.5) * (1 + g2) * f,
        g * f,
    )


def gf_from_phi(phi, frame: Frame = CANONICAL, basepoint: complex = 0j, probe=None) -> WeierstrassData:
    """Invert ``phi_from_gf``: f = -(i Phi1 + Phi2), g = Phi3 / f."""
    p1, p2, p3 = (as_fn(p) for p in phi)
    f = -(const(1j) * p1 + p2)
    z = np.asarray(probe if probe is not None else _default_probe(basepoint), dtype=complex)
    fv = evaluate(f, z, check_poles=False)
    if np.all(np.abs(fv) < 1e-14):
        raise DegenerateData("f vanishes on all probe points")
    return WeierstrassData(quotient(p3, f), f, frame, complex(basepoint))


def _default_probe(center: complex) -> np.ndarray:
    k = np.arange(16)
    return center + 0.5 * np.exp(2j * np.pi * k / 16) * (0.3 + 0.7 * (k % 3) / 2)


def change_basis(data: WeierstrassData, S_new: Frame, probe=None) -> WeierstrassData:
    """Same immersion, data expressed in the frame S_new.

    Phi_new = A Phi_old with A the coordinate change; every component is
    f*(quadratic in g), so f_new = f*Q1(g), g_new = Q3(g)/Q1(g).
    """
    A = np.linalg.solve(S_new.matrix, data.frame.matrix)
    if np.allclose(A, np.eye(3), atol=1e-15, rtol=0):
        return WeierstrassData(data.g, data.f, S_new, data.basepoint)
    rows = [A @ c for c in (_C0, _C1, _C2)]  # rows[k][j]: coefficient of g^k in component j
    qf = [-(1j * r[0] + r[1]) for r in rows]
    q3 = [r[2] for r in rows]
    f_new = data.f * _quad_in(data.g, *qf)
    g_new = quotient(_quad_in(data.g, *q3), _quad_in(data.g, *qf))
    z = np.asarray(probe if probe is not None else _default_probe(data.basepoint), dtype=complex)
    if np.all(np.abs(evaluate(f_new, z, check_poles=False)) < 1e-14):
        raise DegenerateData("f vanishes identically in the new frame")
    return WeierstrassData(g_new, f_new, S_new, data.basepoint)


def lopez_ros(data: WeierstrassData, h: AnalyticFn, samples=None, tol: float = 1e-12) -> WeierstrassData:
    """(g, f) -> (g/h, f h); the third coordinate of Phi is untouched."""
    h = as_fn(h)
    if samples is not None:
        z = np.asarray(samples, dtype=complex).reshape(-1)
        m = float(np.min(np.abs(evaluate(h, z))))
        if not m > tol:
            raise ZeroOfH(f"min |h| = {m:.3g} on samples")
    return WeierstrassData(quotient(data.g, h), data.f * h, data.frame, data.basepoint)


def metric_factor(data: WeierstrassData, z, return_flags: bool = False):
    """Signed 1/2 (1 - |g|^2)|f|; flags mark |g| > 1."""
    g, f = data.gf_values(z)
    lam = 0.5 * (1.0 - np.abs(g) ** 2) * np.abs(f)
    lam = float(lam) if np.ndim(lam) == 0 else lam
    if return_flags:
        return lam, np.abs(g) > 1.0
    return lam


def singular_set_probe(data: WeierstrassData, samples, band: float = SINGULAR_BAND) -> np.ndarray:
    z = np.asarray(samples, dtype=complex).reshape(-1)
    g = evaluate(data.g, z)
    return z[np.abs(np.abs(g) - 1.0) < band]


def g_variation(data: WeierstrassData, samples) -> float:
    """max - min of |g - g(first sample)|; the non-flatness proxy."""
    g = evaluate(data.g, np.asarray(samples, dtype=complex).reshape(-1))
    return float(np.max(np.abs(g - g[0])))


class ImmersionField:
    """X(z) = Re int Phi from the basepoint, routed through ``router``.

    ``router(a, b)`` returns a Polyline from a to b inside the domain (a
    straight segment when no router is given).  Values are cached per point
    in canonical coordinates.
    """

    def __init__(self, data: WeierstrassData, router=None, tol: float = 1e-11):
        self.data = data
        self.router = router
        self.tol = tol
        self._cache: dict[complex, np.ndarray] = {}
        self._lock = Lock()

    @property
    def basepoint(self) -> complex:
        return self.data.basepoint

    def _phi_can(self, z):
        return self.data.canonical_phi_values(z)

    def route(self, a: complex, b: complex) -> Polyline:
        if self.router is None:
            return segment(a, b)
        path = self.router(a, b)
        if path is None:
            raise NoPath(f"no route from {a} to {b}")
        return path

    def integrate_path(self, path: Polyline) -> np.ndarray:
        """Re int_path Phi in canonical coordinates."""
        val = integrate(self._phi_can, path, tol=self.tol, poles=self.data.poles())
        return np.real(val).reshape(3)

    def immerse(self, z, use_cache: bool = True) -> LVec3:
        z = complex(z)
        if z == self.basepoint:
            return LVec3(0.0, 0.0, 0.0)
        if use_cache and z in self._cache:
            return LVec3.of(self._cache[z])
        val = self.integrate_path(self.route(self.basepoint, z))
        if use_cache:
            with self._lock:
                self._cache.setdefault(z, val)
        return LVec3.of(val)

    def immerse_many(self, zs) -> np.ndarray:
        return np.array([self.immerse(z) for z in np.asarray(zs, dtype=complex).reshape(-1)])

    def coords(self, z, frame: Frame) -> np.ndarray:
        return frame.coords(np.asarray(self.immerse(z)))

    def immerse_tree(self, points, parents, root_value=None) -> np.ndarray:
        """Values at ``points`` given a spanning tree: parents[k] < k is the
        index of the point k is reached from (-1: from the basepoint).  Each
        edge is one short straight integral."""
        pts = np.asarray(points, dtype=complex).reshape(-1)
        out = np.zeros((pts.size, 3))
        for k, par in enumerate(parents):
            if par < 0:
                start, base = self.basepoint, np.zeros(3) if root_value is None else np.asarray(root_value)
                if pts[k] == start:
                    out[k] = base
                    continue
                out[k] = base + self.integrate_path(self.route(start, complex(pts[k])))
            else:
                out[k] = out[par] + self.integrate_path(segment(pts[par], pts[k]))
        return out

    def immerse_along(self, path: Polyline, spacing: float) -> tuple[np.ndarray, np.ndarray]:
        """Sample points along a path starting at the basepoint and their images."""
        pts = path.sample(spacing)
        parents = [-1] + list(range(len(pts) - 1))
        return pts, self.immerse_tree(pts, parents)

    def segment_increments(self, a, b) -> np.ndarray:
        """Re int Phi over straight segments a[k] -> b[k], canonical coords, shape (N, 3)."""
        return np.real(integrate_segments(self._phi_can, a, b, tol=self.tol)).T

    def immerse_from(self, origin: complex, origin_value, zs) -> np.ndarray:
        """Values at zs reached by straight segments from a common origin."""
        zs = np.asarray(zs, dtype=complex).reshape(-1)
        inc = self.segment_increments(np.full(zs.size, origin), zs)
        return np.asarray(origin_value, dtype=float)[None, :] + inc

    def immerse_cloud(self, zs, domain, spacing: float) -> np.ndarray:
        """Values at many points of ``domain``: a shortest-path tree on the
        domain's path graph, one straight integral per tree edge, then one
        segment from a visible tree node to each query point."""
        zs = np.asarray(zs, dtype=complex).reshape(-1)
        g = domain.graph(spacing)
        dist, pred, src = g.from_point(self.basepoint)
        n = len(g.nodes)
        reach = np.isfinite(dist[:n])
        par = pred[:n]
        order = np.argsort(dist[:n])
        order = order[reach[order]]
        pp = par[order]
        start = np.where(pp == src, self.basepoint, g.nodes[np.clip(pp, 0, n - 1)])
        inc = self.segment_increments(start, g.nodes[order])
        vals = np.full((n, 3), np.nan)
        for k, node in enumerate(order):
            p = par[node]
            base = np.zeros(3) if p == src else vals[p]
            vals[node] = base + inc[k]
        anchors = np.empty(zs.size, dtype=complex)
        base = np.empty((zs.size, 3))
        for j, z in enumerate(zs):
            if abs(z - self.basepoint) < 2.3 * spacing and domain.visible(self.basepoint, z):
                anchors[j], base[j] = self.basepoint, 0.0
                continue
            idx, d = g.attach(complex(z))
            idx = idx[reach[idx]]
            if idx.size == 0:
                raise NoPath(f"{z} is not connected to the basepoint")
            best = idx[np.argmin(np.abs(g.nodes[idx] - z))]
            anchors[j], base[j] = g.nodes[best], vals[best]
        return base + self.segment_increments(anchors, zs)

    def metric_factor(self, z):
        return metric_factor(self.data, z)

    def fd_metric_factor(self, z, h: float = 1e-4) -> float:
        """Finite-difference conformal factor: Lorentz length of
        X(z + h) - X(z - h) over 2h, with the increment integrated directly."""
        z = complex(z)
        d = self.integrate_path(segment(z - h, z + h))
        q = lorentz_norm_sq(d)
        return math.copysign(math.sqrt(abs(q)), q) / (2 * h)

    def clear_cache(self):
        with self._lock:
            self._cache.clear()
