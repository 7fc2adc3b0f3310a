"""Polygonal plane domains: membership, intrinsic (Euclidean path) distances,
offset polygons, the carved domain with its notches and necks, and offset
tubes around boundary arcs.

Regions are shapely polygons; points are complex numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree
from shapely.geometry import LineString, Point, Polygon
from shapely.geometry.polygon import orient

from .analytic import Polyline
from .certificates import Check, flag, lower, upper
from .exceptions import BasepointOutside, Disconnected, InputRejected, NoRoom

BOUNDARY_BAND = 1e-9


def _xy(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1)


def _cx(xy) -> np.ndarray:
    a = np.asarray(xy, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def circle_points(center: complex, radius: float, n: int = 256, start: float = 0.0) -> np.ndarray:
    t = start + 2 * np.pi * np.arange(n) / n
    return center + radius * np.exp(1j * t)


def disk_polygon(center: complex, radius: float, n: int = 256) -> Polygon:
    return Polygon(_xy(circle_points(center, radius, n)))


def arc_points(center: complex, radius: float, a0: float, a1: float, n: int) -> np.ndarray:
    return center + radius * np.exp(1j * np.linspace(a0, a1, max(n, 2)))


@dataclass(frozen=True, eq=False)
class PlanarDomain:
    """A polygonal region of the plane (holes allowed, though every domain the
    construction produces is simply connected)."""

    polygon: Polygon
    resolution: float = 0.0
    _graphs: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        poly = self.polygon
        if not isinstance(poly, Polygon):
            if poly.geom_type == "MultiPolygon":
                raise Disconnected(f"region has {len(poly.geoms)} components")
            raise InputRejected(f"expected a polygon, got {poly.geom_type}")
        if poly.is_empty or not poly.is_valid:
            raise InputRejected("polygon is empty or invalid")
        poly = orient(poly, 1.0)
        shapely.prepare(poly)
        object.__setattr__(self, "polygon", poly)

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_vertices(cls, outer, notches=(), resolution: float = 0.0) -> "PlanarDomain":
        poly = Polygon(_xy(outer))
        for n in notches:
            poly = poly.difference(n if hasattr(n, "geom_type") else Polygon(_xy(n)))
        return cls(poly, resolution)

    @classmethod
    def square(cls, half: float, center: complex = 0j) -> "PlanarDomain":
        c = complex(center)
        pts = [c + half * complex(sx, sy) for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
        return cls(Polygon(_xy(pts)))

    @classmethod
    def disk(cls, center: complex, radius: float, n: int = 256) -> "PlanarDomain":
        return cls(disk_polygon(complex(center), radius, n), resolution=2 * math.pi * radius / n)

    # -- queries ----------------------------------------------------------
    @property
    def bounds(self):
        return self.polygon.bounds

    @property
    def diameter(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return math.hypot(x1 - x0, y1 - y0)

    @property
    def area(self) -> float:
        return self.polygon.area

    def boundary_distance(self, z) -> np.ndarray:
        xy = _xy(z).reshape(-1, 2)
        d = shapely.distance(self.polygon.boundary, shapely.points(xy))
        return d.reshape(np.shape(z))

    def membership(self, z, band: float = BOUNDARY_BAND):
        """'inside', 'boundary' or 'outside' (array of labels for array input)."""
        za = np.asarray(z, dtype=complex)
        xy = _xy(za).reshape(-1, 2)
        inside = shapely.contains_xy(self.polygon, xy[:, 0], xy[:, 1])
        near = self.boundary_distance(za.reshape(-1)) <= band
        lab = np.where(near, "boundary", np.where(inside, "inside", "outside"))
        return str(lab[0]) if za.ndim == 0 else lab.reshape(za.shape)

    def contains(self, z, closed: bool = True, band: float = BOUNDARY_BAND) -> np.ndarray:
        lab = np.asarray(self.membership(z, band))
        return (lab != "outside") if closed else (lab == "inside")

    def is_simply_connected(self) -> bool:
        return len(self.polygon.interiors) == 0

    def visible(self, a: complex, b: complex) -> bool:
        if a == b:
            return bool(self.contains(a))
        return bool(self._closed().covers(LineString(_xy([a, b]))))

    def _closed(self):
        g = self._graphs.get("closed")
        if g is None:
            g = self.polygon.buffer(1e-10 * max(1.0, self.diameter), quad_segs=2)
            shapely.prepare(g)
            self._graphs["closed"] = g
        return g

    def boundary_polylines(self) -> list[np.ndarray]:
        rings = [self.polygon.exterior] + list(self.polygon.interiors)
        return [_cx(np.asarray(r.coords)) for r in rings]

    def export_text(self) -> str:
        """Closed boundary polylines, one 'x y' vertex per line, blank line between rings."""
        out = []
        for ring in self.boundary_polylines():
            out.extend(f"{repr(float(p.real))} {repr(float(p.imag))}" for p in ring)
            out.append("")
        return "\n".join(out)

    def sample_grid(self, spacing: float, closed: bool = False) -> np.ndarray:
        """Grid points (complex) inside the region."""
        x0, y0, x1, y1 = self.bounds
        xs = np.arange(x0, x1 + spacing / 2, spacing)
        ys = np.arange(y0, y1 + spacing / 2, spacing)
        X, Y = np.meshgrid(xs, ys)
        z = (X + 1j * Y).ravel()
        keep = shapely.contains_xy(self.polygon, z.real, z.imag)
        pts = z[keep]
        if closed:
            pts = np.concatenate([pts, self.sample_boundary(spacing)])
        return pts

    def sample_boundary(self, spacing: float) -> np.ndarray:
        return np.concatenate([Polyline.through(r).sample(spacing) for r in self.boundary_polylines()])

    def route(self, a: complex, b: complex) -> Polyline:
        """Short polyline from a to b inside the closed region."""
        if self.visible(a, b):
            return Polyline.through([a, b])
        return intrinsic_distance(DomainMetricQuery(self, a), b).path

    # -- intrinsic distance graph ----------------------------------------
    def graph(self, spacing: float) -> "_PathGraph":
        key = ("graph", round(spacing, 15))
        g = self._graphs.get(key)
        if g is None:
            g = _PathGraph(self, spacing)
            self._graphs[key] = g
        return g


def _thin_mask(pts: np.ndarray, gap: float) -> np.ndarray:
    """Keep ring vertices at least ``gap`` from the previously kept one."""
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = True
    last = pts[0]
    for k in range(1, len(pts)):
        if abs(pts[k] - last) >= gap:
            keep[k] = True
            last = pts[k]
    return keep


class _PathGraph:
    """Grid nodes plus boundary vertices; edges between mutually visible
    nodes closer than a few grid steps."""

    def __init__(self, dom: PlanarDomain, h: float):
        self.dom, self.h = dom, h
        x0, y0, x1, y1 = dom.bounds
        xs = np.arange(x0 + h / 2, x1, h)
        ys = np.arange(y0 + h / 2, y1, h)
        X, Y = np.meshgrid(xs, ys)
        z = (X + 1j * Y).ravel()
        grid = z[shapely.contains_xy(dom.polygon, z.real, z.imag)]
        verts, ring_i, ring_j, thin = [], [], [], []
        base = grid.size
        for ring in dom.boundary_polylines():
            r = Polyline.through(ring).sample(h)[:-1]
            k = np.arange(r.size) + base
            ring_i.append(k)
            ring_j.append(np.roll(k, -1))
            thin.append(k[_thin_mask(r, h / 20)])
            verts.append(r)
            base += r.size
        self.nodes = np.concatenate([grid] + verts)
        self.tree = cKDTree(_xy(self.nodes))
        # visibility pairs among grid nodes and a thinned subset of the rings;
        # every ring vertex is tied to its neighbours along the ring
        sub = np.concatenate([np.arange(grid.size)] + thin)
        pairs = cKDTree(_xy(self.nodes[sub])).query_pairs(2.3 * h, output_type="ndarray")
        i, j = sub[pairs[:, 0]], sub[pairs[:, 1]]
        ok = self._visible_pairs(self.nodes[i], self.nodes[j])
        i = np.concatenate([i[ok]] + ring_i)
        j = np.concatenate([j[ok]] + ring_j)
        e = np.unique(np.stack([np.minimum(i, j), np.maximum(i, j)], axis=1), axis=0)
        e = e[e[:, 0] != e[:, 1]]
        i, j = e[:, 0], e[:, 1]
        w = np.abs(self.nodes[i] - self.nodes[j])
        n = len(self.nodes)
        self.matrix = coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                                 shape=(n, n)).tocsr()

    def _visible_pairs(self, a, b) -> np.ndarray:
        if len(a) == 0:
            return np.zeros(0, dtype=bool)
        coords = np.stack([_xy(a), _xy(b)], axis=1)
        lines = shapely.linestrings(coords)
        return shapely.covers(self.dom._closed(), lines)

    def attach(self, z: complex) -> tuple[np.ndarray, np.ndarray]:
        """Visible graph neighbours of an arbitrary point and their distances."""
        r = 2.3 * self.h
        while True:
            idx = np.array(self.tree.query_ball_point([z.real, z.imag], r), dtype=int)
            if idx.size:
                ok = self._visible_pairs(np.full(idx.size, z), self.nodes[idx])
                if ok.any():
                    idx = idx[ok]
                    return idx, np.abs(self.nodes[idx] - z)
            if r > self.dom.diameter * 2:
                raise Disconnected(f"point {z} sees no graph node")
            r *= 2

    def from_point(self, z: complex):
        """Dijkstra distances/predecessors from z (z attached as a virtual source)."""
        idx, d = self.attach(z)
        n = len(self.nodes)
        m = self.matrix.tocoo()
        rows = np.concatenate([m.row, np.full(idx.size, n), idx])
        cols = np.concatenate([m.col, idx, np.full(idx.size, n)])
        vals = np.concatenate([m.data, d, d])
        mat = coo_matrix((vals, (rows, cols)), shape=(n + 1, n + 1)).tocsr()
        dist, pred = dijkstra(mat, indices=n, return_predecessors=True)
        return dist, pred, n


def _pull_string(dom: PlanarDomain, pts: list[complex]) -> list[complex]:
    """Greedy forward shortcutting with line-of-sight checks."""
    out = [pts[0]]
    i, last = 0, len(pts) - 1
    while i < last:
        if dom.visible(pts[i], pts[last]):
            j = last
        else:
            j = i + 1
            while j + 1 < last and dom.visible(pts[i], pts[j + 1]):
                j += 1
        out.append(pts[j])
        i = j
    return out


@dataclass(frozen=True)
class DomainMetricQuery:
    domain: PlanarDomain
    source: complex
    spacing: float | None = None

    def h(self) -> float:
        return self.spacing if self.spacing else self.domain.diameter / 120.0


@dataclass(frozen=True)
class DistanceResult:
    distance: float
    path: Polyline | None
    coarse: float
    rel_change: float
    spacing: float


def _graph_path(dom, h, a, b):
    g = dom.graph(h)
    dist, pred, src = g.from_point(a)
    idx, d = g.attach(b)
    tot = dist[idx] + d
    k = int(np.argmin(tot))
    if not np.isfinite(tot[k]):
        raise Disconnected(f"{b} unreachable from {a}")
    chain = [complex(b)]
    node = int(idx[k])
    while node != src and node >= 0:
        chain.append(complex(g.nodes[node]))
        node = int(pred[node])
    chain.append(complex(a))
    chain.reverse()
    pulled = _pull_string(dom, chain)
    length = float(np.sum(np.abs(np.diff(pulled))))
    return length, pulled


def intrinsic_distance(q: DomainMetricQuery, target: complex) -> DistanceResult:
    """Length of the shortest path inside the closed domain (grid Dijkstra,
    string-pulled, repeated at half spacing as a refinement check)."""
    dom, a, b = q.domain, complex(q.source), complex(target)
    for z in (a, b):
        if not dom.contains(z):
            raise InputRejected(f"{z} is outside the domain")
    if a == b:
        return DistanceResult(0.0, None, 0.0, 0.0, q.h())
    if dom.visible(a, b):
        d = abs(b - a)
        return DistanceResult(d, Polyline.through([a, b]), d, 0.0, q.h())
    h = q.h()
    coarse, _ = _graph_path(dom, h, a, b)
    fine, pts = _graph_path(dom, h / 2, a, b)
    rel = abs(coarse - fine) / max(fine, 1e-300)
    return DistanceResult(fine, Polyline.through(pts), coarse, rel, h / 2)


@dataclass(frozen=True)
class SupDistance:
    value: float
    argmax: complex
    spacing: float
    n_nodes: int


def sup_intrinsic_distance(dom: PlanarDomain, basepoint: complex = 0j, spacing: float | None = None,
                           refine: int = 5) -> SupDistance:
    """Sup over the closed region of the intrinsic distance from the basepoint.

    Graph distances overestimate the true ones; the largest few are replaced
    by string-pulled path lengths.
    """
    b = complex(basepoint)
    if not dom.contains(b):
        raise BasepointOutside(f"basepoint {b} not in the domain")
    h = spacing or dom.diameter / 120.0
    g = dom.graph(h)
    dist, pred, src = g.from_point(b)
    if not np.all(np.isfinite(dist[:-1])):
        raise Disconnected("graph not connected")
    order = np.argsort(dist[:-1])[::-1][:refine]
    best, arg = 0.0, b
    for node in order:
        chain, k = [], int(node)
        while k != src and k >= 0:
            chain.append(complex(g.nodes[k]))
            k = int(pred[k])
        chain.append(b)
        chain.reverse()
        pulled = _pull_string(dom, chain)
        L = float(np.sum(np.abs(np.diff(pulled))))
        if L > best:
            best, arg = L, complex(g.nodes[node])
    return SupDistance(best, arg, h, len(g.nodes))


def compute_ell(E: PlanarDomain, delta: float, basepoint: complex = 0j, spacing: float | None = None,
                return_details: bool = False):
    """ell = sup intrinsic distance from the basepoint + 2 pi delta + delta + 1."""
    sd = sup_intrinsic_distance(E, basepoint, spacing)
    ell = sd.value + 2 * math.pi * delta + delta + 1.0
    return (ell, sd) if return_details else ell


# -- offset polygon with boundary points ------------------------------------------

@dataclass(frozen=True, eq=False)
class HatPolygon:
    points: np.ndarray  # p_1..p_n, counter-clockwise along the hat polygon
    hat: Polygon
    W: Polygon
    offset: float
    gap: float

    @property
    def n(self) -> int:
        return len(self.points)

    def min_gap(self) -> float:
        p = self.points
        d = np.abs(p[:, None] - p[None, :])
        d[np.diag_indices_from(d)] = np.inf
        return float(d.min())

    def inward_normal(self, i: int) -> complex:
        p = self.points
        t = p[(i + 1) % len(p)] - p[i - 1]
        nrm = 1j * t / abs(t)  # left normal of a counter-clockwise curve
        return complex(nrm)


def _as_polygon(P) -> Polygon:
    if isinstance(P, Polygon):
        return orient(P, 1.0)
    if isinstance(P, PlanarDomain):
        return P.polygon
    return orient(Polygon(_xy(P)), 1.0)


def equally_spaced(poly: Polygon, n: int) -> np.ndarray:
    """n points spaced equally by arclength along the exterior, starting at its first vertex."""
    ring = poly.exterior
    L = ring.length
    s = L * np.arange(n) / n
    pts = shapely.line_interpolate_point(ring, s)
    return _cx(shapely.get_coordinates(pts))


def build_hat_polygon(P, O: PlanarDomain, n: int, w_fraction: float = 0.5,
                      hat_fraction: float = 0.25) -> HatPolygon:
    """Offset P outward by a quarter of its clearance to the boundary of O
    (W sits at half the clearance) and place n equally spaced points on it."""
    Pp = _as_polygon(P)
    if not O.polygon.contains(Pp):
        raise NoRoom("closure(Int P) is not inside O")
    gap = float(O.polygon.exterior.distance(Pp))
    for hole in O.polygon.interiors:
        gap = min(gap, float(hole.distance(Pp)))
    if gap <= 1e-12:
        raise NoRoom("O leaves no room around P")
    W = Pp.buffer(w_fraction * gap, join_style="mitre")
    hat = orient(Pp.buffer(hat_fraction * gap, join_style="mitre"), 1.0)
    if not (hat.is_valid and hat.exterior.is_simple and len(hat.interiors) == 0):
        raise NoRoom("offset polygon is not simple")
    pts = equally_spaced(hat, n)
    return HatPolygon(pts, hat, W, hat_fraction * gap, gap)


# -- carving ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CarvedDomain:
    omega: PlanarDomain
    points: np.ndarray
    q: np.ndarray
    a: np.ndarray
    C: list
    G: list
    N: list
    Q: list
    alpha: list
    disk_radius: float
    delta: float
    checks: list
    raster_spacing: float

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _sector(p: complex, r_in: float, r_out: float, half: float, disk_segments: int = 256) -> Polygon:
    """Closed annular sector; its outer arc reuses the vertices of
    disk_polygon(p, r_out, disk_segments) so the two discretizations agree."""
    t = 2 * np.pi * np.arange(disk_segments) / disk_segments
    t = np.where(t > np.pi, t - 2 * np.pi, t)
    mid = np.sort(t[np.abs(t) < half])
    outer = p + r_out * np.exp(1j * np.concatenate([[-half], mid, [half]]))
    inner = arc_points(p, r_in, half, -half, 17)
    return Polygon(_xy(np.concatenate([outer, inner])))


def _neck_curve(p: complex, delta: float, r_arc: float, r_end: float, target_angle: float, n: int = 64):
    """q = p + delta, radially to r_arc, around at r_arc to target_angle, out to r_end."""
    ang = math.remainder(target_angle, 2 * math.pi)
    pts = [p + delta, p + r_arc]
    pts.extend(arc_points(p, r_arc, 0.0, ang, n)[1:])
    pts.append(p + r_end * complex(math.cos(ang), math.sin(ang)))
    return Polyline.through(pts)


def carve_omega(hat: HatPolygon, a, delta: float, beta, P=None, poles=(), zeros=(), ell: float | None = None,
                disk_factor: float = 1.2, neck_width=None, disk_segments: int = 256,
                raster: int = 400, basepoint: complex = 0j, dist_spacing: float | None = None) -> CarvedDomain:
    """Omega = (Int hat minus the disks D^k) union the necks N_k.

    Inside D(p_i, delta) the neck is the closed annular sector G_i between
    the arc C_i through a_i and the circle of radius delta, half-angle
    beta_i around the direction of q_i = p_i + delta.  Outside it, a corridor
    of half-width neck_width follows alpha_i through D^i minus D(p_i, delta)
    into Int hat.
    """
    p = np.asarray(hat.points, dtype=complex)
    n = len(p)
    a = np.asarray(a, dtype=complex).reshape(n)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
    q = p + delta
    R = disk_factor * delta
    body = hat.hat
    disks_big = [disk_polygon(pi, R, disk_segments) for pi in p]
    for dk in disks_big:
        body = body.difference(dk)
    C, G, Nk, alphas = [], [], [], []
    pieces = [body]
    for i in range(n):
        rho = abs(a[i] - p[i])
        half = float(beta[i])
        # corridor half-width: half of min(delta/10, gap/3), and narrow enough to enter G_i
        w = 0.5 * (neck_width if neck_width is not None else min(delta / 10, hat.min_gap() / 3))
        w = min(w, 0.5 * delta * math.sin(half))
        Gi = _sector(p[i], rho, delta, half, disk_segments)
        Ci = Polyline.through(arc_points(p[i], rho, -half, half, 17))
        ang_in = math.atan2(hat.inward_normal(i).imag, hat.inward_normal(i).real)
        alpha = _neck_curve(p[i], delta, 0.5 * (1 + disk_factor) * delta, (disk_factor + 0.15) * delta, ang_in)
        start = p[i] + (delta - 0.5 * w)
        corridor = LineString(_xy(np.concatenate([[start], alpha.vertices]))).buffer(w, cap_style="flat",
                                                                                   quad_segs=8)
        # keep the corridor out of D(p_i, delta) except where it overlaps G_i
        inner = disk_polygon(p[i], delta - 0.5 * w, disk_segments)
        corridor = corridor.difference(inner)
        Ni = Gi.union(corridor)
        C.append(Ci)
        G.append(Gi)
        Nk.append(Ni)
        alphas.append(alpha)
        pieces.append(Ni)
    omega_geom = shapely.union_all(pieces)
    omega_geom = omega_geom.buffer(0)
    checks = []
    try:
        omega = PlanarDomain(omega_geom if omega_geom.geom_type == "Polygon" else _largest(omega_geom),
                             resolution=2 * math.pi * delta / disk_segments)
    except (Disconnected, InputRejected) as e:
        raise InputRejected(f"carved region invalid: {e}")
    # (c1) simple connectivity: one component, no interiors, raster Euler characteristic 1
    w_min = min(float(n_.area) for n_ in Nk) / max(al.length for al in alphas)
    euler, comps, holes, hr = raster_topology(omega_geom, raster, spacing=w_min / 3)
    checks.append(flag("c1", "simple connectivity of closure(Omega)", "components=1, holes=0",
                       omega_geom.geom_type == "Polygon" and len(omega_geom.interiors) == 0
                       and comps == 1 and holes == 0, resolution=hr,
                       detail=f"raster components={comps} holes={holes} euler={euler}"))
    # (c2) segments q_i a_i in closure(Omega), closure(Int P) in Omega
    closed = omega_geom.buffer(1e-12 * max(1.0, omega.diameter))
    seg_ok = all(closed.covers(LineString(_xy([q[i], a[i]]))) for i in range(n))
    if P is not None:
        Pp = _as_polygon(P)
        inside_P = omega_geom.contains(Pp)
        clearance = float(omega_geom.exterior.distance(Pp)) if inside_P else -float(Pp.difference(omega_geom).area)
    else:
        inside_P, clearance = True, math.inf
    checks.append(Check("c2", "segments q_i a_i in closure(Omega); closure(Int P) in Omega",
                        "contained", clearance if seg_ok else -1.0,
                        detail=f"segments covered={seg_ok}"))
    # (c3) no pole / zero of any h_i in closure(Omega)
    pz = [complex(x) for x in list(poles) + list(zeros)]
    if pz:
        dmin = float(np.min(shapely.distance(omega_geom, shapely.points(_xy(np.array(pz))))))
    else:
        dmin = math.inf
    checks.append(Check("c3", "closure(Omega) misses every pole p_i and zero w_i", "dist > 0", dmin))
    # (c4) sup intrinsic distance < ell
    if ell is not None:
        sd = sup_intrinsic_distance(omega, basepoint, dist_spacing)
        checks.append(upper("c4", "sup intrinsic distance from 0 over closure(Omega)", "< ell",
                            sd.value, ell, resolution=sd.spacing,
                            detail=f"graph sup {sd.value:.6g} at {sd.argmax}"))
    # (c5) closure(Omega) cap closure(D(p_i, delta)) inside G_i
    worst = 0.0
    for i in range(n):
        dpoly = disk_polygon(p[i], delta, disk_segments)
        extra = omega_geom.intersection(dpoly).difference(G[i].buffer(1e-12 * delta))
        worst = max(worst, extra.area)
    checks.append(upper("c5", "closure(Omega) cap closure(D(p_i,delta)) in G_i", "area outside G_i = 0",
                        worst, 1e-12 * delta * delta, resolution=2 * math.pi * delta / disk_segments))
    Q = boundary_pieces(omega, p, np.abs(a - p), beta)
    return CarvedDomain(omega, p, q, a, C, G, Nk, Q, alphas, R, delta, checks, hr)


def _largest(geom):
    return max(geom.geoms, key=lambda g: g.area)


def raster_topology(geom, n: int = 400, spacing: float | None = None, max_cells: int = 3000):
    """(euler characteristic, components, holes, spacing) of a rasterized region.

    The step is the finer of extent/n and ``spacing``, but never below
    extent/max_cells.
    """
    x0, y0, x1, y1 = geom.bounds
    ext = max(x1 - x0, y1 - y0)
    h = ext / n
    if spacing is not None:
        h = max(min(h, spacing), ext / max_cells)
    xs = np.arange(x0 - 2 * h, x1 + 2 * h, h)
    ys = np.arange(y0 - 2 * h, y1 + 2 * h, h)
    X, Y = np.meshgrid(xs, ys)
    inside = shapely.contains_xy(geom, X, Y)
    _, comps = ndimage.label(inside, structure=np.ones((3, 3)))
    _, outs = ndimage.label(~inside)
    holes = outs - 1
    return comps - holes, comps, holes, h


def boundary_pieces(omega: PlanarDomain, p, rho, beta) -> list[Polyline]:
    """Q_i: the arc of the boundary of Omega running from C_i to C_{i+1}
    (the component of the boundary minus the C's touching no other C_k)."""
    ring = omega.boundary_polylines()[0][:-1]
    n = len(p)
    lab = np.full(len(ring), -1)
    for i in range(n):
        d = np.abs(ring - p[i])
        tol = max(1e-9 * max(1.0, abs(p[i])), rho[i] * 1e-6)
        lab[d <= rho[i] + tol] = i
    if np.all(lab < 0):
        raise InputRejected("no C arcs found on the boundary")
    start = int(np.argmax(lab >= 0))
    ring = np.roll(ring, -start)
    lab = np.roll(lab, -start)
    runs = []
    k = 0
    m = len(ring)
    while k < m:
        if lab[k] >= 0:
            k += 1
            continue
        j = k
        while j < m and lab[j] < 0:
            j += 1
        before = lab[k - 1]
        after = lab[j % m]
        pts = ring[k - 1:j + 1] if j < m else np.concatenate([ring[k - 1:], ring[:1]])
        runs.append((int(before), int(after), pts))
        k = j
    Q = [None] * n
    for b, e, pts in runs:
        if (e - b) % n == 1:
            Q[b] = Polyline.through(pts)
        elif (b - e) % n == 1:
            Q[e] = Polyline.through(pts[::-1])
    missing = [i for i in range(n) if Q[i] is None]
    if missing:
        raise InputRejected(f"boundary walk found no arc for Q_{missing}")
    return Q


def offset_tube(curve, xi: float, quad_segs: int = 32):
    """{z : dist(z, curve) <= xi} as a polygon (the curve itself when xi = 0)."""
    if xi < 0:
        raise InputRejected("xi must be >= 0")
    verts = curve.vertices if isinstance(curve, Polyline) else np.asarray(curve, dtype=complex)
    line = LineString(_xy(verts))
    if xi == 0:
        return line
    return line.buffer(xi, quad_segs=quad_segs)


def sample_region(geom, spacing: float, boundary: bool = True) -> np.ndarray:
    """Grid samples of a shapely region, plus its boundary at the same spacing."""
    x0, y0, x1, y1 = geom.bounds
    xs = np.arange(x0, x1 + spacing / 2, spacing)
    ys = np.arange(y0, y1 + spacing / 2, spacing)
    X, Y = np.meshgrid(xs, ys)
    inside = shapely.contains_xy(geom, X, Y)
    pts = (X + 1j * Y)[inside]
    if boundary:
        b = geom.boundary
        parts = getattr(b, "geoms", [b])
        for part in parts:
            L = part.length
            if L > 0:
                s = np.linspace(0.0, L, max(2, int(math.ceil(L / spacing)) + 1))
                pts = np.concatenate([pts, _cx(shapely.get_coordinates(shapely.line_interpolate_point(part, s)))])
    return pts
