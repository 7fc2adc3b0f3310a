"""Boundary-pushing step: from (X, P, O, r1, r2, b1, b2) to (Y, Q).

Two inductive passes of Lopez-Ros deformations.  The first attaches a
narrow sector G_i at each boundary point p_i whose image is pushed a distance
3 mu along the horizontal normal; the second uses Runge approximants l_i to
inflate the boundary arcs Q_i of the carved region Omega until the image
leaves B(r2).  Every quantitative requirement is recorded as a Check with
its margin; a failing one raises PropertyFailed, which the driver answers
by halving eps0.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial.distance import pdist
from shapely.geometry import LineString, Point, Polygon
from shapely.geometry.polygon import orient
from skimage import measure

from .analytic import AnalyticFn, Polyline, simple_pole_factor, runge_approximant
from .certificates import CertificateLog, Check, flag, lower, upper
from .domain import (CarvedDomain, HatPolygon, PlanarDomain, _as_polygon, _cx, _xy, build_hat_polygon,
                     carve_omega, compute_ell, disk_polygon, offset_tube, sample_region,
                     sup_intrinsic_distance)
from .exceptions import (BadShellOrder, CertFailed, EscalationCapExceeded, InputRejected, KUnderflow,
                         MaxDiskError, NoEnclosingContour, NotInE, PreconditionError, PropertyFailed,
                         RetriesExhausted, UnderflowDelta)
from .lorentz import Frame, horizontal_frame
from .shells import escape_bound_lambda, in_E, mu, normal_horizontal, r_star, tangent_frame
from .weierstrass import ImmersionField, WeierstrassData, change_basis, g_variation, lopez_ros

log = logging.getLogger(__name__)

# With theta_i close to -conj(f/|f|) the image of the segment q_i a_i moves
# along -N_H (the log integral over q_i -> a_i is negative), so the target
# point of (d4) is X(p_i) + PUSH_SIGN * 3 mu N_H.
PUSH_SIGN = -1.0
RHO_FLOOR = 1e-12  # |a_i - p_i| / delta below this has no geometric meaning in double precision
NONFLAT_TOL = 1e-9


# -- small helpers -----------------------------------------------------------

def disk_samples(c: complex, r: float, n_r: int = 6, n_t: int = 32) -> np.ndarray:
    """Center plus a polar grid of the closed disk (outer circle included)."""
    rr = r * np.arange(1, n_r + 1) / n_r
    t = 2 * np.pi * np.arange(n_t) / n_t
    return np.concatenate([[c], (c + rr[:, None] * np.exp(1j * t)[None, :]).ravel()])


def phi_in(data: WeierstrassData, frame: Frame, z) -> np.ndarray:
    """Phi coefficients in ``frame`` coordinates, shape (3, N)."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    if data.frame is frame:
        return data.phi_values(z)
    can = data.canonical_phi_values(z)
    return np.linalg.solve(frame.matrix, can)


def fg_in(data: WeierstrassData, frame: Frame, z):
    """(f, f g^2) of ``data`` read in ``frame``: f = -(i Phi1 + Phi2), f g^2 = i Phi1 - Phi2."""
    p = phi_in(data, frame, z)
    return -(1j * p[0] + p[1]), 1j * p[0] - p[1]


def _worst(name, tag, constant, checks: list[Check]) -> Check:
    """Collapse per-index checks into the one with the smallest margin."""
    if not checks:
        return Check(name, tag, constant, math.inf, detail="vacuous")
    c = min(checks, key=lambda c: c.margin)
    return Check(name, tag, constant, c.margin, c.resolution, detail=c.detail)


def _first_failure(checks) -> Check | None:
    for c in checks:
        if not c.passed:
            return c
    return None


# -- trace of created data ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LopezRosStep:
    label: str
    stage: str
    before: WeierstrassData
    after: WeierstrassData
    samples: np.ndarray


@dataclass
class Trace:
    """Every Weierstrass object and every Lopez-Ros step created during a run."""

    data: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    regions: list = field(default_factory=list)

    def record(self, label: str, data: WeierstrassData, samples=None):
        self.data.append((label, data, None if samples is None else np.asarray(samples)))
        return data

    def step(self, label: str, stage: str, before, after, samples):
        self.steps.append(LopezRosStep(label, stage, before, after, np.asarray(samples)))


# -- input -------------------------------------------------------------------------

@dataclass(eq=False)
class LemmaInput:
    X: ImmersionField
    P: Polygon
    O: PlanarDomain
    r1: float
    r2: float
    b1: float
    b2: float

    def __post_init__(self):
        self.P = _as_polygon(self.P)


def default_spacing(inp: LemmaInput) -> float:
    return inp.O.diameter / 60


def validate_input(inp: LemmaInput, spacing: float | None = None) -> CertificateLog:
    """Hypotheses of the step; InputRejected carries the located witness."""
    out = CertificateLog()
    if not inp.r1 < inp.r2:
        raise BadShellOrder(f"need r1 < r2, got {inp.r1}, {inp.r2}")
    if not inp.r2 - inp.b2 > inp.r1:
        raise InputRejected(f"need r2 - b2 > r1, got {inp.r2} - {inp.b2} <= {inp.r1}")
    if not (inp.b1 > 0 and inp.b2 > 0):
        raise InputRejected("b1 and b2 must be positive")
    out.add(lower("input.order", "r2 - b2 > r1", "> r1", inp.r2 - inp.b2, inp.r1))
    if not inp.P.contains(Point(0, 0)):
        raise InputRejected("0 must lie in Int P")
    if not inp.O.polygon.contains(inp.P):
        raise InputRejected("closure(Int P) must lie in O")
    if inp.X.basepoint != 0:
        raise InputRejected("X must be based at 0")
    h = spacing or default_spacing(inp)
    ring = inp.O.polygon.difference(inp.P.buffer(-1e-12 * inp.O.diameter))
    z = sample_region(ring, h)
    z = z[inp.O.contains(z)]
    vals = inp.X.immerse_cloud(z, inp.O, h)
    rs = r_star(vals)
    lo, hi = rs - inp.r1, inp.r2 - rs
    m = np.minimum(lo, hi)
    k = int(np.argmin(m))
    if not m[k] > 0:
        raise InputRejected(f"X leaves B(r2) minus closure(B(r1)) on O minus Int P: "
                            f"witness z={complex(z[k])}, r_star={rs[k]:.6g}")
    out.add(Check("input.shell", "r1 < r_star(X) < r2 on O minus Int P", "(r1, r2)", float(m[k]), h,
                  detail=f"{z.size} samples, tightest at {complex(z[k])}"))
    return out


# -- boundary points, frames and rotations ------------------------------------------------

@dataclass(eq=False)
class BoundaryData:
    hat: HatPolygon
    points: np.ndarray
    XP: np.ndarray
    frames: list
    f_at_p: np.ndarray
    theta: np.ndarray
    beta_rot: float
    B_center: np.ndarray
    B_radius: np.ndarray
    checks: list

    @property
    def n(self) -> int:
        return len(self.points)


def _perturb_along(hat: Polygon, z: complex, step: float) -> complex:
    ring = hat.exterior
    s = ring.project(Point(z.real, z.imag)) + step
    pt = ring.interpolate(s % ring.length)
    return complex(pt.x, pt.y)


def select_boundary_data(inp: LemmaInput, eps0: float, n0: int = 16, n_cap: int = 4096,
                         spacing: float | None = None) -> BoundaryData:
    """Points p_i on the hat polygon, frames S_i and rotations theta_i.

    n doubles until the oscillation of X on every B^i is below eps0 and
    consecutive frames differ by less than eps0 / (3 mu).
    """
    h = spacing or default_spacing(inp)
    m_ = mu(inp.r1, inp.r2)
    n = n0
    last = None
    while n <= n_cap:
        hat = build_hat_polygon(inp.P, inp.O, n)
        p = np.array(hat.points, dtype=complex)
        step = hat.hat.exterior.length / n
        XP = inp.X.immerse_cloud(p, inp.O, h)
        if not np.all(in_E(XP, inp.r2)) or np.any(np.hypot(XP[:, 0], XP[:, 1]) < 1e-9):
            raise PropertyFailed("E", "X(p_i) outside E(r2) or on the axis")
        frames = [horizontal_frame(normal_horizontal(x, inp.r2)) for x in XP]
        checks = []
        nxt = np.roll(p, -1)
        Bc, Br = 0.5 * (p + nxt), np.abs(p - nxt)
        # B^i inside W minus closure(Int P)
        margins = []
        for c, r in zip(Bc, Br):
            dW = float(hat.W.exterior.distance(Point(c.real, c.imag)))
            dP = float(inp.P.distance(Point(c.real, c.imag)))
            inside = hat.W.contains(Point(c.real, c.imag))
            margins.append(min(dW, dP) - r if inside else -r)
        k = int(np.argmin(margins))
        checks.append(Check("af1.B", "B^i in W minus closure(Int P)", "contained", margins[k],
                            detail=f"i={k}"))
        # oscillation of X on B^i
        osc = []
        for i, (c, r) in enumerate(zip(Bc, Br)):
            zs = disk_samples(c, r, 3, 16)
            v = inp.X.immerse_from(c, np.zeros(3), zs)
            osc.append(upper("osc", "oscillation of X on B^i", "< eps0", float(pdist(v).max()), eps0,
                             resolution=r / 3, detail=f"i={i}"))
        checks.append(_worst("osc", "oscillation of X on B^i", "< eps0", osc))
        # frame gaps
        gaps = []
        for i in range(n):
            a, b = frames[i].matrix, frames[(i + 1) % n].matrix
            gaps.append(upper("frame_gap", "frame gap", "< eps0/(3 mu)", float(np.max(np.linalg.norm(a - b, axis=0))),
                              eps0 / (3 * m_), detail=f"i={i}"))
        checks.append(_worst("frame_gap", "frame gap", "< eps0/(3 mu)", gaps))
        # f_{(X,S_i)}(p_i) != 0, perturbing along the hat polygon if needed
        fp = np.empty(n, dtype=complex)
        for i in range(n):
            f = complex(fg_in(inp.X.data, frames[i], [p[i]])[0][0])
            tries = 0
            while abs(f) < 1e-12 and tries < 4:
                p[i] = _perturb_along(hat.hat, complex(p[i]), step / 4)
                XP[i] = inp.X.immerse_cloud([p[i]], inp.O, h)[0]
                frames[i] = horizontal_frame(normal_horizontal(XP[i], inp.r2))
                f = complex(fg_in(inp.X.data, frames[i], [p[i]])[0][0])
                tries += 1
            fp[i] = f
        checks.append(lower("f_nonzero", "f_(X,S_i)(p_i) != 0", "> 0", float(np.min(np.abs(fp))), 0.0))
        # rotations
        beta = min(eps0 / (6 * m_), 0.1)
        u = fp / np.abs(fp)
        theta = -np.conj(u) * cmath.exp(1j * beta)
        while np.any(theta.imag == 0):
            beta /= 2
            theta = -np.conj(u) * cmath.exp(1j * beta)
        err = np.abs(np.conj(theta * u) + 1.0)
        checks.append(upper("rotation", "|conj(theta f/|f|) + 1|", "< eps0/(3 mu)", float(err.max()), eps0 / (3 * m_)))
        last = checks
        if all(c.passed for c in checks):
            hat = HatPolygon(p, hat.hat, hat.W, hat.offset, hat.gap)
            return BoundaryData(hat, p, XP, frames, fp, theta, beta, Bc, Br, checks)
        log.debug("n=%d rejected: %s", n, [c.name for c in checks if not c.passed])
        n *= 2
    bad = _first_failure(last or [])
    raise EscalationCapExceeded(f"n > {n_cap} without meeting {bad.name if bad else '?'}")


# -- delta ---------------------------------------------------------------------------

@dataclass(eq=False)
class DeltaChoice:
    delta: float
    ell: float
    E: PlanarDomain
    checks: list


def _disk_checks(data: WeierstrassData, bd: BoundaryData, k: int, delta: float, eps0: float, m_: float,
                 prefix: str):
    """(a4)/(a5)/(a7)-type bounds of ``data`` on closure(D(p_k, delta)) in frame S_k."""
    z = disk_samples(bd.points[k], delta)
    f, fg2 = fg_in(data, bd.frames[k], z)
    res = delta / 6
    fp = bd.f_at_p[k]
    return (
        upper(f"{prefix}.f", "delta max |f|", "< 2 eps0", delta * np.abs(f).max(), 2 * eps0, res, f"k={k}"),
        upper(f"{prefix}.fg2", "delta max |f g^2|", "< 2 eps0 |Im theta_k|", delta * np.abs(fg2).max(),
              2 * eps0 * abs(bd.theta[k].imag), res, f"k={k}"),
        upper(f"{prefix}.fosc", "3 mu max |f - f(p_k)|", "< eps0 |f(p_k)|", 3 * m_ * np.abs(f - fp).max(),
              eps0 * abs(fp), res, f"k={k}"),
    )


def select_delta(inp: LemmaInput, bd: BoundaryData, eps0: float, spacing: float | None = None,
                 floor: float = 1e-8) -> DeltaChoice:
    m_ = mu(inp.r1, inp.r2)
    gap = bd.hat.min_gap()
    delta = min(gap / 4, 0.99)
    p = bd.points
    while True:
        if delta < floor:
            raise UnderflowDelta(f"delta < {floor:g}")
        checks = []
        disks = shapely.union_all([disk_polygon(c, delta, 128) for c in p])
        E = bd.hat.hat.difference(disks)
        checks.append(flag("a1", "closure(Int P-hat minus disks) simply connected", "one piece, no holes",
                           E.geom_type == "Polygon" and len(E.interiors) == 0))
        nxt = np.roll(p, -1)
        a2 = bd.B_radius - np.maximum(np.abs(p - bd.B_center), np.abs(nxt - bd.B_center)) - delta
        checks.append(Check("a2", "D(p_i) and D(p_i+1) inside B^i", "contained", float(a2.min())))
        checks.append(lower("a3", "disjoint closed disks", "gap > 2 delta", gap, 2 * delta))
        a4, a5, a6, a7 = [], [], [], []
        for k in range(bd.n):
            c4, c5, c7 = _disk_checks(inp.X.data, bd, k, delta, eps0, m_, "a")
            a4.append(c4)
            a5.append(c5)
            a7.append(c7)
            z = disk_samples(p[k], delta)
            phi = inp.X.data.canonical_phi_values(z)
            a6.append(upper("a6", "delta max ||phi||", "< eps0", delta * np.linalg.norm(phi, axis=0).max(), eps0,
                            delta / 6, f"k={k}"))
        checks.append(_worst("a4", "delta max |f_(X,S_i)|", "< 2 eps0", a4))
        checks.append(_worst("a5", "delta max |f g^2|", "< 2 eps0 |Im theta_i|", a5))
        checks.append(_worst("a6", "delta max ||phi||", "< eps0", a6))
        checks.append(_worst("a7", "3 mu max |f(w) - f(p_i)|", "< eps0 |f(p_i)|", a7))
        if all(c.passed for c in checks):
            break
        delta /= 2
    Ed = PlanarDomain(E)
    ell, sd = compute_ell(Ed, delta, 0j, spacing, return_details=True)
    checks.append(Check("ell", "ell = sup dist + 2 pi delta + delta + 1", "defined", ell,
                        sd.spacing, detail=f"sup dist {sd.value:.6g}"))
    return DeltaChoice(delta, ell, Ed, checks)


# -- first pass: sectors ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PacMan:
    """D_i: disk of radius R around p minus the wedge |arg(z - p)| <= half
    beyond radius r0.  Contains p and w, avoids G_i and the segment q_i a_i."""

    p: complex
    R: float
    half: float
    r0: float

    def contains(self, z) -> np.ndarray:
        d = np.asarray(z, dtype=complex) - self.p
        r = np.abs(d)
        wedge = (np.abs(np.angle(d)) <= self.half) & (r >= self.r0)
        return (r < self.R) & ~wedge


@dataclass(eq=False)
class StageOnePacket:
    k: float
    a: complex
    rho: float
    beta: float
    w: complex
    Phi: WeierstrassData
    D: PacMan
    Psi: np.ndarray
    checks: list


def _segment_integral_frame(field_: ImmersionField, frame: Frame, a, b) -> np.ndarray:
    can = field_.segment_increments(a, b)
    return np.linalg.solve(frame.matrix, can.T).T


def _sector_samples(p: complex, rho: float, delta: float, half: float, n_r: int = 20, n_t: int = 9):
    radii = np.geomspace(rho, delta, n_r)
    ang = np.linspace(-half, half, n_t)
    return (p + radii[:, None] * np.exp(1j * ang)[None, :]).ravel()


def _arc_integrals(field_: ImmersionField, p: complex, rho: float, half: float, n: int = 33) -> np.ndarray:
    """Re int over C_i from a_i (angle 0) to each arc sample.  Chords replace
    arcs: the lens between them holds no pole, so the values agree."""
    ang = np.linspace(-half, half, n)
    pts = p + rho * np.exp(1j * ang)
    inc = field_.segment_increments(pts[:-1], pts[1:])
    cum = np.vstack([np.zeros(3), np.cumsum(inc, axis=0)])
    mid = n // 2
    return cum - cum[mid]


def stage_one(inp: LemmaInput, bd: BoundaryData, dc: DeltaChoice, eps0: float, trace: Trace,
              spacing: float | None = None, k_floor: float = 1e-300, beta_halvings: int = 40):
    """Phi^1..Phi^n and the packets Psi_i."""
    h = spacing or default_spacing(inp)
    m_ = mu(inp.r1, inp.r2)
    n, delta, ell = bd.n, dc.delta, dc.ell
    p = bd.points
    Wz = sample_region(bd.hat.W, h)
    prev = inp.X.data
    packets: list[StageOnePacket] = []
    for i in range(n):
        S = bd.frames[i]
        before = change_basis(prev, S)
        trace.record(f"stage1.before.{i}", before, Wz)
        fp = bd.f_at_p[i]
        outside = np.abs(Wz - p[i]) > delta
        for pk in packets:
            outside &= ~pk.D.contains(Wz)
        zb6 = Wz[outside]
        phi_prev = prev.canonical_phi_values(zb6)
        k = delta / 10
        while True:
            h_i = simple_pole_factor(k, complex(bd.theta[i]), complex(p[i]))
            cand = lopez_ros(before, h_i)
            trace.record(f"stage1.candidate.{i}", cand, zb6)
            ck = []
            for kk in range(i + 1, n):
                ck.extend(_disk_checks(cand, bd, kk, delta, eps0, m_, f"b{i}"))
            diff = np.linalg.norm(cand.canonical_phi_values(zb6) - phi_prev, axis=0)
            ck.append(upper("b6", "||phi^i - phi^(i-1)|| off the disks", "< eps0/(n ell)",
                            float(diff.max()) if diff.size else 0.0, eps0 / (n * ell), h, f"i={i}"))
            if all(c.passed for c in ck):
                break
            k /= 2
            if k < k_floor:
                raise KUnderflow(f"k_{i} < {k_floor:g}")
        b1 = _worst("b1", "delta max |f_(Phi^i,S_k)|, k > i", "< 2 eps0", [c for c in ck if c.name.endswith(".f")])
        b2 = _worst("b2", "delta max |f g^2|, k > i", "< 2 eps0 |Im theta_k|", [c for c in ck if c.name.endswith(".fg2")])
        b3 = _worst("b3", "3 mu max |f - f(p_k)|, k > i", "< eps0 |f(p_k)|", [c for c in ck if c.name.endswith(".fosc")])
        checks = [b1, b2, b3, ck[-1]]
        w = complex(p[i]) - k * complex(bd.theta[i])
        # (b5) third coordinate in S_i untouched
        zs5 = Wz[(np.abs(Wz - p[i]) > 1e-6) & (np.abs(Wz - w) > 1e-6)]
        d3 = np.abs(cand.phi_values(zs5)[2] - before.phi_values(zs5)[2])
        checks.append(upper("b5", "|Phi^i_3 - Phi^(i-1)_3| in S_i", "< 1e-12", float(d3.max()), 1e-12, h, f"i={i}"))
        trace.step(f"stage1.{i}", "stage-one", before, cand, zs5)
        # a_i from (1/2)|f(p)| k log(delta/rho) = 3 mu
        expo = 6 * m_ / (k * abs(fp))
        rho = delta * math.exp(-expo)
        if rho / delta < RHO_FLOOR or complex(p[i]) + rho == complex(p[i]):
            raise KUnderflow(f"|a_{i} - p_{i}| = delta*exp(-{expo:.4g}) is below double-precision resolution "
                             f"(k_{i} = {k:.3g}, |f(p_{i})| = {abs(fp):.3g})")
        a = complex(p[i]) + rho
        q = complex(p[i]) + delta
        ang_w = abs(cmath.phase(w - p[i]))
        F = ImmersionField(cand)
        beta = min(0.5, 0.5 * ang_w)
        for _ in range(beta_halvings):
            arc = _arc_integrals(F, complex(p[i]), rho, beta)
            c4 = upper("b4", "||Re int over C_i from a_i||", "< eps0", float(np.linalg.norm(arc, axis=1).max()), eps0,
                       rho * beta / 16, f"i={i}")
            zs = _sector_samples(complex(p[i]), rho, delta, beta)
            vals = _segment_integral_frame(F, S, np.full(zs.size, q), zs)
            logint = k * np.log((zs - p[i]) / delta)
            c7 = upper("b7", "|Re int_(q_i z) Phi^i_(1,S_i)| on G_i", "< 4 eps0", float(np.abs(vals[:, 0]).max()),
                       4 * eps0, detail=f"i={i}")
            c8 = upper("b8", "|Re int Phi^i_(2,S_i) - (1/2)|f(p_i)| int k dw/(w-p_i)| on G_i", "< 4 eps0",
                       float(np.abs(vals[:, 1] - 0.5 * logint * abs(fp)).max()), 4 * eps0, detail=f"i={i}")
            if c4.passed and c7.passed and c8.passed:
                break
            beta /= 2
        checks.extend([c4, c7, c8])
        D = PacMan(complex(p[i]), min(1.5 * k, 0.9 * delta), 0.5 * (beta + ang_w), 0.5 * rho)
        Psi = F.segment_increments([q], [a])[0]
        if packets:
            checks.append(upper("b9", "||Psi_i - Psi_(i-1)||", "< 21 eps0", float(np.linalg.norm(Psi - packets[-1].Psi)),
                                21 * eps0, detail=f"i={i}"))
        packets.append(StageOnePacket(k, a, rho, beta, w, cand, D, Psi, checks))
        trace.record(f"stage1.Phi.{i}", cand, zs5)
        bad = _first_failure(checks)
        if bad is not None:
            raise PropertyFailed(f"{bad.name}.{i}", f"margin {bad.margin:.3g} ({bad.constant})")
        prev = cand
    wrap = upper("b9.wrap", "||Psi_1 - Psi_n|| (wrap-around)", "< 21 eps0",
                 float(np.linalg.norm(packets[0].Psi - packets[-1].Psi)), 21 * eps0)
    packets[-1].checks.append(wrap)
    if not wrap.passed:
        raise PropertyFailed("b9.wrap", f"margin {wrap.margin:.3g}")
    return packets


# -- carving and the pushed immersion X_n ----------------------------------------------

@dataclass(eq=False)
class CarvingResult:
    carved: CarvedDomain
    Xn: ImmersionField
    Xa: np.ndarray  # X_n(a_i), canonical
    checks: list


def carve_and_certify(inp: LemmaInput, bd: BoundaryData, dc: DeltaChoice, packets: list[StageOnePacket],
                      eps0: float, trace: Trace, spacing: float | None = None) -> CarvingResult:
    h = spacing or default_spacing(inp)
    m_ = mu(inp.r1, inp.r2)
    n, delta = bd.n, dc.delta
    a = np.array([pk.a for pk in packets])
    carved = carve_omega(bd.hat, a, delta, [pk.beta for pk in packets], P=inp.P,
                         poles=list(bd.points), zeros=[pk.w for pk in packets], ell=dc.ell, basepoint=0j)
    checks = list(carved.checks)
    om = carved.omega
    zs = om.sample_grid(h, closed=True)
    fields = [inp.X] + [ImmersionField(pk.Phi) for pk in packets]
    vals = [f.immerse_cloud(zs, om, h) for f in fields]
    d1 = []
    for i in range(1, n + 1):
        keep = np.abs(zs - bd.points[i - 1]) > delta
        diff = np.linalg.norm(vals[i][keep] - vals[i - 1][keep], axis=1)
        d1.append(upper("d1", "||X_i - X_(i-1)|| off D(p_i, delta)", "< eps0/n", float(diff.max()), eps0 / n, h,
                        f"i={i - 1}"))
    checks.append(_worst("d1", "||X_i - X_(i-1)|| off D(p_i, delta)", "< eps0/n", d1))
    checks.append(_worst("d2", "Phi^i_3 = Phi^(i-1)_3 in S_i", "< 1e-12",
                         [c for pk in packets for c in pk.checks if c.name == "b5"]))
    Xn = fields[-1]
    Xq = Xn.immerse_cloud(carved.q, om, h)
    Xa = Xq + Xn.segment_increments(carved.q, a)
    nxt = np.roll(Xa, -1, axis=0)
    checks.append(upper("d3", "||X_n(a_i) - X_n(a_i+1)||", "< 26 eps0",
                        float(np.linalg.norm(Xa - nxt, axis=1).max()), 26 * eps0))
    target = bd.XP + PUSH_SIGN * 3 * m_ * normal_horizontal(bd.XP, inp.r2)
    checks.append(upper("d4", "||X_n(a_i) - (X(p_i) -+ 3 mu N_H(X(p_i)))||", "< 14 eps0",
                        float(np.linalg.norm(Xa - target, axis=1).max()), 14 * eps0))
    checks.append(lower("d5", "r_star(X_n(a_i)) outside B(r1 + 2(r2 - r1))", ">= r1 + 2(r2 - r1)",
                        float(r_star(Xa).min()), inp.r1 + 2 * (inp.r2 - inp.r1)))
    trace.record("Xn", Xn.data, zs)
    bad = _first_failure(checks)
    if bad is not None:
        raise PropertyFailed(bad.name, f"margin {bad.margin:.3g} ({bad.constant}) {bad.detail}")
    return CarvingResult(carved, Xn, Xa, checks)


# -- second pass: Runge inflation of the arcs Q_i ---------------------------------------------

def tau_threshold(Lambda: float, xi: float, fmin: float) -> float:
    """(4/xi)(4(Lambda+1)+1)/min|f|: where (f5) turns from false to true."""
    return (4.0 / xi) * (4.0 * (Lambda + 1.0) + 1.0) / fmin


def f5_margin(tau: float, xi: float, fmin: float, Lambda: float) -> float:
    return 0.5 * (tau * xi / 4.0 * fmin - 1.0) - 2.0 * (Lambda + 1.0)


TAU_SLACK = 2.0


@dataclass(eq=False)
class StageTwoInput:
    omega: PlanarDomain
    Q: list
    Xn: WeierstrassData
    Xa: np.ndarray
    r2: float
    eps0: float
    ell: float
    delta: float
    points: np.ndarray
    B_center: np.ndarray
    B_radius: np.ndarray
    poles: list
    zeros: list
    spacing: float
    a: np.ndarray | None = None
    lambda_dirs: int = 32
    lambda_samples: int = 24


@dataclass(eq=False)
class StageTwoPacket:
    Y: WeierstrassData
    tau: float
    nu: float
    l: AnalyticFn
    T: Frame
    report: object
    checks: list


@dataclass(eq=False)
class StageTwoResult:
    packets: list
    Y: WeierstrassData
    xi: float
    Lambda: float
    eps1: float
    T: list
    checks: list


def _region_samples(geom, h: float, hb: float) -> np.ndarray:
    inner = sample_region(geom, h, boundary=False)
    bnd = sample_region(geom, hb, boundary=True)
    return np.unique(np.concatenate([inner, bnd]))


def _xi_checks(s2: StageTwoInput, Xn: ImmersionField, T: list, xi: float, eps1: float):
    n = len(s2.Q)
    om = s2.omega.polygon
    lines = [LineString(_xy(q.vertices)) for q in s2.Q]
    pz = [complex(x) for x in list(s2.poles) + list(s2.zeros)]
    checks = []
    e1 = min((ln.distance(Point(z.real, z.imag)) for ln in lines for z in pz), default=math.inf)
    checks.append(lower("e1", "Q_i^xi avoids poles and zeros", "> xi", e1, xi))
    e2 = min((lines[i].distance(lines[j]) for i in range(n) for j in range(i + 1, n)), default=math.inf)
    checks.append(lower("e2", "Q_i^xi pairwise disjoint", "> 2 xi", e2, 2 * xi))
    e3 = math.inf
    for i in range(n):
        for k in range(n):
            if k in (i, (i + 1) % n):
                continue
            pk = s2.points[k]
            e3 = min(e3, lines[i].distance(Point(pk.real, pk.imag)) - s2.delta)
    checks.append(lower("e3", "Q_i^xi misses closure(D(p_k, delta)), k not i, i+1", "> xi", e3, xi))
    e4 = math.inf
    for i in range(n):
        c = s2.B_center[i]
        far = float(np.max(np.abs(s2.Q[i].vertices - c)))
        e4 = min(e4, s2.B_radius[i] - far)
    checks.append(lower("e4", "Q_i^xi inside B^i", "> xi", e4, xi))
    ok5 = True
    for i in range(n):
        half = offset_tube(s2.Q[i], xi / 2)
        rest = om.difference(offset_tube(s2.Q[i], xi))
        ok5 &= half.geom_type == "Polygon" and len(half.interiors) == 0
        ok5 &= rest.geom_type == "Polygon" and len(rest.interiors) == 0
    checks.append(flag("e5", "Q_i^(xi/2) and closure(Omega minus Q_i^xi) simply connected", "one piece, no holes", ok5))
    ring = (xi / 2) * np.exp(2j * np.pi * np.arange(8) / 8)
    e6, e8 = [], []
    for i in range(n):
        zq = s2.Q[i].sample(xi / 4)
        f0, _ = fg_in(Xn.data, T[i], zq)
        near = (zq[:, None] + ring[None, :]).ravel()
        f1, _ = fg_in(Xn.data, T[i], near)
        e6.append(upper("e6", "|f(z) - f(x)|, |x - z| <= xi/2", "< eps1",
                        float(np.abs(f1.reshape(zq.size, -1) - f0[:, None]).max()), eps1, xi / 4, f"i={i}"))
        inc = Xn.segment_increments(np.repeat(zq, ring.size), near)
        e8.append(upper("e8", "||X_n(z) - X_n(x)||, |x - z| <= xi/2", "< eps0",
                        float(np.linalg.norm(inc, axis=1).max()), s2.eps0, xi / 4, f"i={i}"))
    checks.append(_worst("e6", "|f(z) - f(x)|", "< eps1", e6))
    e7 = []
    for i in range(n):
        rest = om.difference(offset_tube(s2.Q[i], xi))
        if rest.geom_type != "Polygon":
            e7.append(Check("e7", "sup distance on closure(Omega minus Q_i^xi)", "< ell", -1.0, detail="split"))
            continue
        sd = sup_intrinsic_distance(PlanarDomain(rest), 0j, s2.spacing)
        e7.append(upper("e7", "sup distance on closure(Omega minus Q_i^xi)", "< ell", sd.value, s2.ell, sd.spacing,
                        f"i={i}"))
    checks.append(_worst("e7", "sup distance on closure(Omega minus Q_i^xi)", "< ell", e7))
    checks.append(_worst("e8", "||X_n(z) - X_n(x)||", "< eps0", e8))
    return checks


def stage_two(s2: StageTwoInput, trace: Trace, xi0: float | None = None, xi_floor: float = 1e-9,
              nu_floor: float = 1e-14, degree_cap: int = 64) -> StageTwoResult:
    n = len(s2.Q)
    h = s2.spacing
    om = s2.omega
    Xn = ImmersionField(s2.Xn)
    checks = []
    T = []
    for i in range(n):
        try:
            T.append(tangent_frame(s2.Xa[i], s2.r2))
        except NotInE as e:
            raise PropertyFailed("a_in_E", f"X_n(a_{i}) outside E(r2): {e}")
    fminQ = []
    for i in range(n):
        f, _ = fg_in(s2.Xn, T[i], s2.Q[i].sample(h / 4))
        fminQ.append(float(np.abs(f).min()))
    checks.append(lower("f_nonzero_Q", "f_(X_n,T_i) != 0 on Q_i", "> 0", min(fminQ), 0.0))
    if not checks[-1].passed:
        raise PropertyFailed("f_nonzero_Q", "f_(X_n,T_i) vanishes on Q_i")
    eps1 = 0.25 * min(fminQ)
    # Lambda over the image of the Q_i
    Lam = 0.0
    for i in range(n):
        zq = s2.Q[i].sample(s2.Q[i].length / max(2, s2.lambda_samples - 1))
        Lam = max(Lam, escape_bound_lambda(Xn.immerse_cloud(zq, om, h), T[i], s2.r2, s2.lambda_dirs))
    checks.append(Check("Lambda", "escape bound over X_n(Q_i)", "finite", 1.0, detail=f"Lambda={Lam:.6g}"))
    lines = [LineString(_xy(q.vertices)) for q in s2.Q]
    if xi0 is None:
        sep = min((lines[i].distance(lines[j]) for i in range(n) for j in range(i + 1, n)), default=s2.delta)
        xi0 = min(s2.delta / 2, sep / 3)
    xi = xi0
    while True:
        if xi < xi_floor:
            bad = _first_failure(ec)
            raise PropertyFailed(bad.name if bad else "e", f"xi < {xi_floor:g}")
        ec = _xi_checks(s2, Xn, T, xi, eps1)
        if all(c.passed for c in ec):
            break
        xi /= 2
    checks.extend(ec)
    checks.append(Check("xi", "tube width", "> 0", xi))
    # a disk around p_i on which X_n stays within 3 eps0 of X_n(a_i)
    e19 = []
    for i in range(n if s2.a is not None else 0):
        rho = abs(s2.a[i] - s2.points[i])
        r = 2 * rho
        zs = np.concatenate([s2.Q[i].vertices, s2.Q[i - 1].vertices])
        zs = zs[np.abs(zs - s2.points[i]) <= r]
        zs = np.concatenate([zs, [s2.a[i]]])
        inc = Xn.segment_increments(np.full(zs.size, s2.a[i]), zs)
        e19.append(upper("a_disk", "||X_n(z) - X_n(a_i)|| on C-hat_i", "< 3 eps0",
                         float(np.linalg.norm(inc, axis=1).max()), 3 * s2.eps0, detail=f"i={i}, radius {r:.3g}"))
    checks.append(_worst("a_disk", "||X_n(z) - X_n(a_i)|| on C-hat_i", "< 3 eps0", e19))
    Y0 = s2.Xn
    prev = s2.Xn
    packets = []
    hb = xi / 4
    for i in range(n):
        Ti = T[i]
        d = change_basis(prev, Ti)
        trace.record(f"stage2.before.{i}", d)
        tube = offset_tube(s2.Q[i], xi)
        K_hi = _region_samples(offset_tube(s2.Q[i], xi / 2), min(h, xi / 4), hb)
        rest = om.polygon.difference(tube)
        K_lo = _region_samples(rest, h, hb)
        lo_in = K_lo[om.contains(K_lo)]
        f0, _ = fg_in(Y0, Ti, s2.Q[i].sample(hb))
        fmin0 = float(np.abs(f0).min())
        tau = TAU_SLACK * tau_threshold(Lam, xi, fmin0)
        c5 = lower("f5", "(1/2)(tau xi/4 min|f_(Y0,T_i)| - 1)", "> 2(Lambda+1)",
                   0.5 * (tau * xi / 4 * fmin0 - 1), 2 * (Lam + 1), hb, f"i={i}")
        tz = _region_samples(tube, min(h, xi / 4), hb)
        fq, fg2q = fg_in(prev, Ti, tz)
        maxf, maxfg2 = float(np.abs(fq).max()), float(np.abs(fg2q).max())
        prev_vals = ImmersionField(prev).immerse_cloud(lo_in, om, h)
        nu = min(s2.eps0, tau / 2)
        while True:
            if nu < nu_floor:
                raise PropertyFailed(f"f.{i}", f"nu < {nu_floor:g}")
            l, rep = runge_approximant(K_hi, K_lo, tau, nu, degree_cap=degree_cap, return_report=True)
            cand = lopez_ros(d, l)
            trace.record(f"stage2.candidate.{i}", cand)
            cv = ImmersionField(cand).immerse_cloud(lo_in, om, h)
            c2 = upper("f2", "||Y_i - Y_(i-1)|| on closure(Omega minus Q_i^xi)", "< eps0/n",
                       float(np.linalg.norm(cv - prev_vals, axis=1).max()), s2.eps0 / n, h, f"i={i}")
            c3s = []
            for k in range(i + 1, n):
                fa, _ = fg_in(cand, T[k], K_lo)
                fb, _ = fg_in(prev, T[k], K_lo)
                c3s.append(upper("f3", "|f_(Y_i,T_k) - f_(Y_(i-1),T_k)|, k > i", "< eps1/n",
                                 float(np.abs(fa - fb).max()), eps1 / n, h, f"i={i}, k={k}"))
            c3 = _worst("f3", "|f_(Y_i,T_k) - f_(Y_(i-1),T_k)|, k > i", "< eps1/n", c3s)
            lhs = (1 / tau + nu / (tau * (tau - nu))) * maxfg2 + nu * maxf
            c4 = upper("f4", "(1/tau + nu/(tau(tau-nu))) max|f g^2| + nu max|f| on Q_i^xi", "< 2/xi",
                       lhs, 2 / xi, hb, f"i={i}")
            if c2.passed and c3.passed and c4.passed:
                break
            nu /= 2
        zs1 = np.concatenate([K_hi, K_lo])
        d3 = np.abs(cand.phi_values(zs1)[2] - d.phi_values(zs1)[2])
        c1 = upper("f1", "|(Y_i)_3 - (Y_(i-1))_3| in T_i (coefficients)", "< 1e-10", float(d3.max()), 1e-10,
                   hb, f"i={i}")
        yi = np.linalg.solve(Ti.matrix, cv.T)[2]
        yp = np.linalg.solve(Ti.matrix, prev_vals.T)[2]
        c1b = upper("f1.int", "|(Y_i)_3 - (Y_(i-1))_3| in T_i (integrated)", "< 1e-10",
                    float(np.abs(yi - yp).max()), 1e-10, h, f"i={i}")
        cr = Check("runge", "|l-tau| < nu on Q_i^(xi/2), |l-1| < nu off Q_i^xi, l != 0", "sampled",
                   min(nu - rep.err_hi, nu - rep.err_lo, rep.min_abs), hb,
                   detail=f"i={i}, degree {rep.degree}, tau {tau:.6g}, nu {nu:.3g}")
        pchecks = [c1, c1b, c2, c3, c4, c5, cr]
        trace.step(f"stage2.{i}", "stage-two", d, cand, zs1)
        trace.record(f"stage2.Y.{i}", cand, zs1)
        packets.append(StageTwoPacket(cand, tau, nu, l, Ti, rep, pchecks))
        bad = _first_failure(pchecks)
        if bad is not None:
            raise PropertyFailed(f"{bad.name}.{i}", f"margin {bad.margin:.3g} ({bad.constant})")
        prev = cand
    return StageTwoResult(packets, prev, xi, Lam, eps1, T, checks)


# -- the polygon Q -----------------------------------------------------------------------------

def level_contour(values, region, level: float, spacing: float, enclose) -> Polygon:
    """Outermost closed level curve of a scalar field that surrounds ``enclose``.

    ``values`` maps a complex array to real values; it is only called on grid
    nodes inside ``region``, and marching squares only runs through cells whose
    corners are all inside.
    """
    geom = region.polygon if isinstance(region, PlanarDomain) else region
    enc = _as_polygon(enclose)
    x0, y0, x1, y1 = geom.bounds
    xs = np.arange(x0 - spacing, x1 + 2 * spacing, spacing)
    ys = np.arange(y0 - spacing, y1 + 2 * spacing, spacing)
    X, Yg = np.meshgrid(xs, ys)
    inside = shapely.contains_xy(geom, X, Yg)
    V = np.full(X.shape, np.nan)
    V[inside] = np.asarray(values((X + 1j * Yg)[inside]), dtype=float)
    V = np.where(inside, V, level + 1.0)
    best = None
    for c in measure.find_contours(V, level, mask=inside):
        if len(c) < 4 or not np.allclose(c[0], c[-1]):
            continue
        pts = (x0 - spacing + c[:, 1] * spacing) + 1j * (y0 - spacing + c[:, 0] * spacing)
        poly = Polygon(_xy(pts))
        if not poly.is_valid:
            poly = poly.buffer(0)
            if poly.geom_type != "Polygon":
                continue
        if poly.contains(enc) and (best is None or poly.area > best.area):
            best = poly
    if best is None:
        raise NoEnclosingContour(f"no closed level {level:g} curve surrounds P")
    return orient(best, 1.0)


@dataclass(eq=False)
class ItemsResult:
    Q: Polygon
    checks: list


def certify_items(inp: LemmaInput, Y: ImmersionField, omega: PlanarDomain, Q: Polygon,
                  spacing: float) -> list[Check]:
    """Items (I)-(V) of the step plus the non-flatness proxy."""
    h = spacing
    P, O = inp.P, inp.O.polygon
    out = []
    inQ = Q.contains(P)
    inO = O.contains(Q)
    inOm = omega.polygon.buffer(1e-9 * omega.diameter).contains(Q)
    mI = min(float(Q.exterior.distance(P)) if inQ else -1.0, float(O.exterior.distance(Q)) if inO else -1.0)
    out.append(Check("I", "P in Int Q, closure(Int Q) in O", "contained", mI if inOm else -1.0,
                     h, detail=f"Q inside Omega: {inOm}"))
    y0 = float(np.linalg.norm(np.asarray(Y.immerse(0j))))
    out.append(upper("II", "||Y(0)||", "< 1e-10", y0, 1e-10))
    zP = sample_region(P, h)
    yP = Y.immerse_cloud(zP, omega, h)
    xP = inp.X.immerse_cloud(zP, inp.O, h)
    out.append(upper("III", "||Y - X|| on closure(Int P)", "< b1", float(np.linalg.norm(yP - xP, axis=1).max()),
                     inp.b1, h))
    zQ = _cx(shapely.get_coordinates(shapely.line_interpolate_point(
        Q.exterior, np.linspace(0, Q.exterior.length, max(16, int(Q.exterior.length / (h / 2)))))))
    rQ = r_star(Y.immerse_cloud(zQ, omega, h))
    mIV = float(min((rQ - (inp.r2 - inp.b2)).min(), (inp.r2 - rQ).min()))
    out.append(Check("IV", "r2 - b2 < r_star(Y) < r2 on Q", "(r2 - b2, r2)", mIV, h / 2,
                     detail=f"r_star range [{rQ.min():.6g}, {rQ.max():.6g}]"))
    ann = Q.difference(P)
    zA = sample_region(ann, h)
    zA = zA[omega.contains(zA)]
    rA = r_star(Y.immerse_cloud(zA, omega, h))
    out.append(lower("V", "r_star(Y) on Int Q minus Int P", ">= r1 - 1 - b2", float(rA.min()),
                     inp.r1 - 1 - inp.b2, h))
    gv = g_variation(Y.data, np.concatenate([zP, zA]))
    out.append(lower("nonflat", "g-variation of Y", f"> {NONFLAT_TOL:g}", gv, NONFLAT_TOL, h))
    return out


def extract_polygon_Q(inp: LemmaInput, Y: ImmersionField, omega: PlanarDomain,
                      spacing: float | None = None) -> ItemsResult:
    h = spacing or default_spacing(inp)
    level = inp.r2 - inp.b2 / 2

    def rho(z):
        return r_star(Y.immerse_cloud(z, omega, h))

    Q = level_contour(rho, omega, level, h / 2, inp.P)
    return ItemsResult(Q, certify_items(inp, Y, omega, Q, h))


# -- driver -------------------------------------------------------------------------------------

@dataclass(eq=False)
class LemmaResult:
    Q: Polygon
    Y: ImmersionField
    certificate: CertificateLog
    eps0: float
    history: list
    trace: Trace
    omega: PlanarDomain | None = None


RETRYABLE = (CertFailed, KUnderflow, UnderflowDelta, EscalationCapExceeded, NoEnclosingContour, MaxDiskError)


def run_lemma(inp: LemmaInput, eps0: float = 0.1, max_retries: int = 12, spacing: float | None = None,
              n0: int = 16, n_cap: int = 4096, degree_cap: int = 64) -> LemmaResult:
    """Run both passes, halving eps0 after any failed property."""
    h = spacing or default_spacing(inp)
    base = validate_input(inp, h)
    history = []
    trace = Trace()
    trace.record("X", inp.X.data, inp.O.sample_grid(h))
    e = eps0
    for attempt in range(max_retries + 1):
        cert = CertificateLog(list(base.checks))
        cert.add(Check("eps0", "working eps0", "> 0", e))
        stage = "boundary"
        try:
            bd = select_boundary_data(inp, e, n0=n0, n_cap=n_cap, spacing=h)
            cert.extend(bd.checks)
            stage = "delta"
            dc = select_delta(inp, bd, e, spacing=h)
            cert.extend(dc.checks)
            stage = "stage-one"
            packets = stage_one(inp, bd, dc, e, trace, spacing=h)
            for pk in packets:
                cert.extend(pk.checks)
            stage = "carving"
            cr = carve_and_certify(inp, bd, dc, packets, e, trace, spacing=h)
            cert.extend(cr.checks)
            stage = "stage-two"
            s2 = StageTwoInput(cr.carved.omega, cr.carved.Q, cr.Xn.data, cr.Xa, inp.r2, e, dc.ell, dc.delta,
                               bd.points, bd.B_center, bd.B_radius, list(bd.points), [pk.w for pk in packets],
                               min(h, dc.delta), a=np.array([pk.a for pk in packets]))
            st = stage_two(s2, trace, degree_cap=degree_cap)
            cert.extend(st.checks)
            for pk in st.packets:
                cert.extend(pk.checks)
            stage = "extract"
            Y = ImmersionField(st.Y)
            items = extract_polygon_Q(inp, Y, cr.carved.omega, spacing=min(h, dc.delta))
            cert.extend(items.checks)
            bad = _first_failure(items.checks)
            if bad is not None:
                raise PropertyFailed(bad.name, f"margin {bad.margin:.3g}")
            return LemmaResult(items.Q, Y, cert, e, history, trace, cr.carved.omega)
        except PreconditionError:
            raise
        except RETRYABLE as err:
            history.append({"eps0": e, "stage": stage, "error": type(err).__name__, "detail": str(err),
                            "checks": cert.to_list()})
            log.info("eps0=%g failed at %s: %s", e, stage, err)
            e /= 2
    raise RetriesExhausted(f"no success after {max_retries} halvings of eps0 (last: {history[-1]['error']}: "
                           f"{history[-1]['detail']})", history=history, trace=trace)
