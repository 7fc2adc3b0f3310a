"""Outer recursion: a sequence of immersions psi_n and polygons P_n.

Each stage calls the boundary-pushing step with X = psi_{n-1},
P = P_{n-1}, r1 = s_{n-1} - 1/n^2, r2 = s_n, b1 = eps_m, b2 = 1/(n+1)^2 and
accepts the first m whose metric satisfies lambda_Y >= alpha_n lambda_psi
on closure(Int P_{n-1}).  Properties (A_n)-(G_n) are certified one check
each with their exact constants.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import Point, Polygon, box

from .analytic import const, identity
from .certificates import CertificateLog, Check, lower, upper
from .domain import PlanarDomain, _cx, disk_polygon, sample_region
from .exceptions import (InputRejected, MaxDiskError, MetricConditionStalled, PreconditionError,
                         RetriesExhausted, SeedInfeasible)
from .lemma import LemmaInput, LemmaResult, Trace, run_lemma, validate_input
from .shells import r_star
from .weierstrass import ImmersionField, WeierstrassData, metric_factor

log = logging.getLogger(__name__)


# -- sequences ----------------------------------------------------------------------------

def s_k(k: int, s1: float) -> float:
    """s_1 = s1, s_k = s_{k-1} + 2/k."""
    if k < 1:
        raise ValueError("k >= 1")
    return s1 + sum(2.0 / j for j in range(2, k + 1))


def alpha_k(k: int) -> float:
    """2^(-2^-k); the exponents sum to 1 so the infinite product is 1/2."""
    if k < 1:
        raise ValueError("k >= 1")
    return 2.0 ** (-(2.0 ** -k))


def alpha_product(K: int) -> float:
    """prod_{k <= K} alpha_k = 2^-(1 - 2^-K)."""
    return 2.0 ** (-(1.0 - 2.0 ** -K)) if K >= 1 else 1.0


def eps_m(n: int, m: int) -> float:
    """Decreasing null sequence below 1/n^2."""
    return 2.0 ** -m / n ** 2


def t_n(n: int, s1: float) -> float:
    return s_k(n - 1, s1) - 1.0 / n ** 2 - 1.0 - 1.0 / (n + 1) ** 2


# -- parameters and records ----------------------------------------------------------------------

@dataclass
class RecursionParams:
    s1: float = 1.2
    N: int = 3
    eps0: float = 0.1
    D_radius: float = 4.0
    m_cap: int = 20
    max_retries: int = 12
    spacing: float | None = None
    metric_grid: int = 1000
    seed_radius: float = 1.0
    degree_cap: int = 64

    def __post_init__(self):
        if not self.s1 > 1:
            raise InputRejected(f"s1 must exceed 1, got {self.s1}")
        if self.N < 1:
            raise InputRejected("N must be >= 1")


@dataclass(eq=False)
class StageRecord:
    n: int
    psi: ImmersionField
    P: Polygon
    U: PlanarDomain
    checks: CertificateLog
    t: float | None = None
    m0: int | None = None
    lemma: LemmaResult | None = None

    @property
    def passed(self) -> bool:
        return self.checks.passed


def _ring_samples(P: Polygon, spacing: float) -> np.ndarray:
    L = P.exterior.length
    s = np.linspace(0, L, max(16, int(math.ceil(L / spacing))), endpoint=False)
    return _cx(shapely.get_coordinates(shapely.line_interpolate_point(P.exterior, s)))


def _grid(P: Polygon, count: int) -> np.ndarray:
    """About ``count`` grid points of closure(Int P)."""
    h = math.sqrt(P.area / max(count, 1))
    return sample_region(P, h)


# -- stage one ------------------------------------------------------------------------------------

def seed_data() -> WeierstrassData:
    z = identity()
    return WeierstrassData(z / 2, const(2.0))


def seed_surface(s1: float, radius: float = 1.0, spacing: float = 0.02, iters: int = 40,
                 shrink: float = 0.9) -> StageRecord:
    """psi_1 from g = z/2, f = 2 on the disk U_1, and a square P_1 whose boundary
    maps into B(s1) minus closure(B(s1 - 1/4)).  Bisection finds the largest such
    square; ``shrink`` backs off from it so the upper margin is not razor thin."""
    if not s1 > 1:
        raise InputRejected(f"s1 must exceed 1, got {s1}")
    U = PlanarDomain.disk(0j, radius)
    psi = ImmersionField(seed_data())
    lo_band, hi_band = s1 - 0.25, s1

    def band(a):
        P = box(-a, -a, a, a)
        z = _ring_samples(P, spacing)
        r = r_star(psi.immerse_cloud(z, U, spacing))
        return min(r.min() - lo_band, hi_band - r.max())

    # the square must stay inside the disk with a little room
    a_hi = 0.95 * radius / math.sqrt(2)
    a_lo = 0.5 * spacing
    if band(a_lo) <= 0:
        raise SeedInfeasible(f"s1={s1}: even the smallest square misses the band ({s1 - 0.25}, {s1})")
    if band(a_hi) > 0:
        a = a_hi
    else:
        for _ in range(iters):
            mid = 0.5 * (a_lo + a_hi)
            if band(mid) > 0:
                a_lo = mid
            else:
                a_hi = mid
            if a_hi - a_lo < spacing / 4:
                break
        a = a_lo
    a *= shrink
    P = box(-a, -a, a, a)
    cert = CertificateLog()
    cert.add(Check("A1", "0 in Int P_1, closure(Int P_1) in U_1", "contained",
                   min(a, float(U.polygon.exterior.distance(P))) if U.polygon.contains(P) else -1.0))
    cert.add(upper("B1", "||psi_1(0)||", "< 1e-10", float(np.linalg.norm(np.asarray(psi.immerse(0j)))), 1e-10))
    z = _ring_samples(P, spacing / 2)
    r = r_star(psi.immerse_cloud(z, U, spacing))
    cert.add(Check("D1", "psi_1(P_1) in B(s_1) minus closure(B(s_1 - 1/4))", "(s1 - 1/4, s1)",
                   float(min(r.min() - lo_band, hi_band - r.max())), spacing / 2,
                   detail=f"half-width {a:.6g}, r_star range [{r.min():.6g}, {r.max():.6g}]"))
    return StageRecord(1, psi, P, U, cert)


# -- later stages -----------------------------------------------------------------------------------

def midway_domain(P: Polygon, U: PlanarDomain, D: Polygon, fraction: float = 0.5) -> PlanarDomain:
    """Offset of P by ``fraction`` of its distance to the boundary of U cap D."""
    room = U.polygon.intersection(D)
    if room.geom_type != "Polygon" or not room.contains(P):
        raise InputRejected("P must lie inside U and D")
    d = float(room.exterior.distance(P))
    for hole in room.interiors:
        d = min(d, float(hole.distance(P)))
    O = P.buffer(fraction * d, quad_segs=16).intersection(room)
    if O.geom_type != "Polygon":
        O = max(O.geoms, key=lambda g: g.area)
    return PlanarDomain(O)


def choose_O(X: ImmersionField, P: Polygon, U: PlanarDomain, D: Polygon, r1: float, r2: float,
             spacing: float | None, fractions=(0.5, 0.25, 0.125)):
    """Midway domain, shrunk until X maps O minus Int P into the open shell."""
    last = None
    for fr in fractions:
        O = midway_domain(P, U, D, fr)
        probe = LemmaInput(X, P, O, r1, r2, 1.0, 0.5 * (r2 - r1))
        try:
            validate_input(probe, spacing)
            return O, fr
        except InputRejected as err:
            last = err
            log.info("midway fraction %g rejected: %s", fr, err)
    raise last


def metric_ratio(Y: WeierstrassData, X: WeierstrassData, z) -> np.ndarray:
    return metric_factor(Y, z) / metric_factor(X, z)


def certify_stage(n: int, prev: StageRecord, psi: ImmersionField, P: Polygon, U: PlanarDomain,
                  params: RecursionParams, spacing: float) -> CertificateLog:
    """(A_n)-(G_n) with their exact constants."""
    h = spacing
    D = disk_polygon(0j, params.D_radius)
    sn, sp = s_k(n, params.s1), s_k(n - 1, params.s1)
    cert = CertificateLog()
    has0 = P.contains(Point(0, 0))
    inU = U.polygon.contains(P)
    cert.add(Check(f"A{n}", "0 in Int P_n, closure(Int P_n) in U_n", "contained",
                   min(float(P.exterior.distance(Point(0, 0))), float(U.polygon.exterior.distance(P)))
                   if has0 and inU else -1.0, h))
    cert.add(upper(f"B{n}", "||psi_n(0)||", "< 1e-10", float(np.linalg.norm(np.asarray(psi.immerse(0j)))), 1e-10))
    nest = P.contains(prev.P) and D.contains(P)
    cert.add(Check(f"C{n}", "closure(Int P_{n-1}) in Int P_n, closure(Int P_n) in D", "contained",
                   min(float(P.exterior.distance(prev.P)), float(D.exterior.distance(P))) if nest else -1.0, h))
    zb = _ring_samples(P, h / 2)
    rb = r_star(psi.immerse_cloud(zb, U, h))
    lo_b = sn - 1.0 / (n + 1) ** 2
    cert.add(Check(f"D{n}", "psi_n(P_n) in B(s_n) minus closure(B(s_n - 1/(n+1)^2))",
                   "(s_n - 1/(n+1)^2, s_n)", float(min(rb.min() - lo_b, sn - rb.max())), h / 2,
                   detail=f"r_star range [{rb.min():.6g}, {rb.max():.6g}]"))
    zA = sample_region(P.difference(prev.P), h)
    zA = zA[U.contains(zA)]
    rA = r_star(psi.immerse_cloud(zA, U, h))
    cert.add(lower(f"E{n}", "r_star(psi_n) on Int P_n minus Int P_{n-1}", ">= s_{n-1} - 1/n^2 - 1 - 1/(n+1)^2",
                   float(rA.min()), t_n(n, params.s1), h))
    zP = sample_region(prev.P, h)
    dF = np.linalg.norm(psi.immerse_cloud(zP, U, h) - prev.psi.immerse_cloud(zP, prev.U, h), axis=1)
    cert.add(upper(f"F{n}", "||psi_n - psi_{n-1}|| on closure(Int P_{n-1})", "< 1/n^2",
                   float(dF.max()), 1.0 / n ** 2, h))
    zG = _grid(prev.P, params.metric_grid)
    ratio = metric_ratio(psi.data, prev.psi.data, zG)
    cert.add(lower(f"G{n}", "lambda_psi_n / lambda_psi_{n-1} on closure(Int P_{n-1})", ">= alpha_n",
                   float(ratio.min()), alpha_k(n) - 1e-9, None, detail=f"{zG.size} grid points"))
    cert.add(lower(f"s{n}", "s_n - s_{n-1}", "= 2/n", -abs((sn - sp) - 2.0 / n), -1e-12))
    return cert


@dataclass(eq=False)
class StageFailure:
    n: int
    m: int | None
    error: str
    detail: str
    history: list = field(default_factory=list)


def advance_stage(prev: StageRecord, n: int, params: RecursionParams, traces: list | None = None) -> StageRecord:
    """One recursion step.  Lemma failures propagate; a metric condition that
    never holds within ``m_cap`` choices of b1 raises MetricConditionStalled."""
    D = disk_polygon(0j, params.D_radius)
    r1 = s_k(n - 1, params.s1) - 1.0 / n ** 2
    r2 = s_k(n, params.s1)
    b2 = 1.0 / (n + 1) ** 2
    O, fr = choose_O(prev.psi, prev.P, prev.U, D, r1, r2, params.spacing)
    zG = _grid(prev.P, params.metric_grid)
    lam_prev = metric_factor(prev.psi.data, zG)
    an = alpha_k(n)
    worst = None
    for m in range(1, params.m_cap + 1):
        inp = LemmaInput(prev.psi, prev.P, O, r1, r2, eps_m(n, m), b2)
        try:
            res = run_lemma(inp, eps0=params.eps0, max_retries=params.max_retries, spacing=params.spacing,
                            degree_cap=params.degree_cap)
        except RetriesExhausted as err:
            if traces is not None and err.trace is not None:
                traces.append(err.trace)
            raise
        if traces is not None:
            traces.append(res.trace)
        ratio = metric_factor(res.Y.data, zG) / lam_prev
        worst = float(ratio.min())
        if worst >= an - 1e-9:
            h = params.spacing or O.diameter / 60
            cert = certify_stage(n, prev, res.Y, res.Q, res.omega, params, h)
            cert.add(Check(f"O{n}", "midway fraction of O", "in (0, 1)", fr))
            return StageRecord(n, res.Y, res.Q, res.omega, cert, t_n(n, params.s1), m, res)
        log.info("stage %d, m=%d: metric ratio %.6g below alpha_n=%.6g", n, m, worst, an)
    raise MetricConditionStalled(f"stage {n}: metric ratio stayed below alpha_n after {params.m_cap} values "
                                 f"of b1 (last {worst})")


# -- convergence diagnostics ----------------------------------------------------------------------

def convergence_report(stages: list[StageRecord], params: RecursionParams, spacing: float | None = None) -> CertificateLog:
    """Cauchy rates, metric floor and escape chain for the computed stages."""
    if len(stages) < 2:
        raise InputRejected("need at least two stages")
    h = spacing or params.spacing or 0.02
    out = CertificateLog()
    last = stages[-1]
    N = last.n
    for a, b in zip(stages, stages[1:]):
        z = sample_region(a.P, h)
        d = np.linalg.norm(b.psi.immerse_cloud(z, b.U, h) - a.psi.immerse_cloud(z, a.U, h), axis=1)
        out.add(upper(f"cauchy.{a.n}", f"sup ||psi_{b.n} - psi_{a.n}|| on closure(Int P_{a.n})",
                      f"< 1/{b.n}^2", float(d.max()), 1.0 / b.n ** 2, h))
    A = alpha_product(N)
    for st in stages[:-1]:
        z = _grid(st.P, params.metric_grid)
        lamN = metric_factor(last.psi.data, z)
        lam0 = metric_factor(st.psi.data, z)
        out.add(lower(f"floor.{st.n}", f"lambda_psi_{N} - (alpha_1...alpha_{N}) lambda_psi_{st.n}", ">= 0",
                      float((lamN - A * lam0).min()), 0.0, detail=f"{z.size} grid points"))
        out.add(lower(f"floor.{st.n}.positive", f"lambda_psi_{N}", "> 0", float(lamN.min()), 0.0))
    for prev, st in zip(stages, stages[1:]):
        z = sample_region(st.P.difference(prev.P), h)
        z = z[last.U.contains(z)]
        r = r_star(last.psi.immerse_cloud(z, last.U, h))
        slack = sum(1.0 / k ** 2 for k in range(st.n + 1, N + 1))
        tn = t_n(st.n, params.s1)
        out.add(lower(f"escape.{st.n}", f"r_star(psi_{N}) on Int P_{st.n} minus Int P_{prev.n}",
                      ">= t_n - sum_{k>n} 1/k^2", float(r.min()), tn - slack, h))
        out.add(lower(f"tn.{st.n}", "t_n - (s_{n-1} - 3)", "> 0", tn - (s_k(st.n - 1, params.s1) - 3), 0.0))
    return out


@dataclass(eq=False)
class TheoremRun:
    params: RecursionParams
    stages: list
    traces: list
    failure: StageFailure | None = None
    report: CertificateLog | None = None

    @property
    def complete(self) -> bool:
        return self.failure is None and len(self.stages) == self.params.N

    @property
    def passed(self) -> bool:
        ok = self.complete and all(s.passed for s in self.stages)
        return ok and (self.report is None or self.report.passed)


def run_theorem(params: RecursionParams) -> TheoremRun:
    """Seed plus stages 2..N; stops at the first stage that cannot be built."""
    seed = seed_surface(params.s1, params.seed_radius)
    tr = Trace()
    tr.record("psi_1", seed.psi.data, seed.U.sample_grid(0.05))
    run = TheoremRun(params, [seed], [tr])
    for n in range(2, params.N + 1):
        try:
            run.stages.append(advance_stage(run.stages[-1], n, params, run.traces))
        except PreconditionError:
            raise
        except MaxDiskError as err:
            run.failure = StageFailure(n, None, type(err).__name__, str(err), list(getattr(err, "history", [])))
            log.warning("stage %d failed: %s", n, err)
            break
    if len(run.stages) >= 2:
        run.report = convergence_report(run.stages, params)
    return run
