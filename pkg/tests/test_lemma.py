import math

import numpy as np
import pytest
from scipy.integrate import quad
from shapely.geometry import Point, box

from maxdisk.analytic import Polyline, identity, integrate, simple_pole_factor
from maxdisk.domain import PlanarDomain
from maxdisk.exceptions import BadShellOrder, DegreeCapExceeded, InputRejected, KUnderflow, RetriesExhausted
from maxdisk.lemma import (RETRYABLE, TAU_SLACK, LemmaInput, f5_margin, level_contour, run_lemma, select_boundary_data,
                           select_delta, tau_threshold, validate_input)
from maxdisk.shells import mu
from maxdisk.theorem import seed_data
from maxdisk.weierstrass import ImmersionField


def desk_input(**kw):
    args = dict(r1=0.75, r2=2.2, b1=0.05, b2=1 / 9)
    args.update(kw)
    return LemmaInput(ImmersionField(seed_data()), box(-0.4, -0.4, 0.4, 0.4), PlanarDomain.square(0.7), **args)


def test_validate_accepts_desk_instance():
    log = validate_input(desk_input())
    assert all(c.passed for c in log.checks)
    shell = next(c for c in log.checks if c.name == "input.shell")
    assert shell.margin > 0.2


def test_validate_rejections():
    with pytest.raises(BadShellOrder):
        validate_input(desk_input(r1=2.5))
    with pytest.raises(InputRejected, match="r2 - b2"):
        validate_input(desk_input(r1=2.15))
    # r_star(X) stays near 1 on O minus Int P, so r1 = 1.5 has a witness
    with pytest.raises(InputRejected, match="witness"):
        validate_input(desk_input(r1=1.5))
    bad = desk_input()
    bad.P = box(0.1, 0.1, 0.3, 0.3)
    with pytest.raises(InputRejected, match="Int P"):
        validate_input(bad)


def test_log_singularity_radius_closed_form():
    # (1/2)|f(p)| k log(delta/rho) = 3 mu  ->  rho = delta exp(-6 mu / (k |f(p)|))
    delta, k, fabs = 0.5, 1.0, 2.0
    m = mu(1.2, 2.2)
    assert m == pytest.approx(math.sqrt(3), abs=1e-15)
    rho = delta * math.exp(-6 * m / (k * fabs))
    assert rho == pytest.approx(0.5 * math.exp(-3 * math.sqrt(3)), rel=1e-14)
    radial, _ = quad(lambda r: k / r, rho, delta, epsabs=1e-12, epsrel=1e-12, points=[10 * rho], limit=200)
    assert 0.5 * fabs * radial == pytest.approx(3 * m, rel=1e-10)
    # the same log integral along the segment q -> a with the library's own quadrature
    p = 0.3 + 0.1j
    h = simple_pole_factor(k, 1.0, p) - 1
    val = integrate(h, Polyline.through([p + delta, p + rho]))
    assert complex(val) == pytest.approx(k * math.log(rho / delta), rel=1e-10)


def test_tau_threshold_and_f5():
    Lam, xi, fmin = 3.0, 0.025, 1.0
    tau0 = tau_threshold(Lam, xi, fmin)
    assert tau0 == pytest.approx(2720.0, rel=1e-14)
    assert f5_margin(tau0, xi, fmin, Lam) == pytest.approx(0.0, abs=1e-9)
    assert f5_margin(0.99 * tau0, xi, fmin, Lam) < 0
    assert f5_margin(TAU_SLACK * tau0, xi, fmin, Lam) > 0


def test_level_contour_circle():
    dom = PlanarDomain.square(1.0)
    Q = level_contour(lambda z: 1 + np.abs(z), dom, 1.5, 0.01, box(-0.1, -0.1, 0.1, 0.1))
    assert Q.area == pytest.approx(math.pi * 0.25, rel=1e-3)
    r = np.abs(np.array(Q.exterior.coords) @ [1, 1j])
    assert np.abs(r - 0.5).max() < 0.01
    assert Q.exterior.is_ccw


def test_level_contour_missing_raises():
    from maxdisk.exceptions import NoEnclosingContour
    with pytest.raises(NoEnclosingContour):
        level_contour(lambda z: 1 + np.abs(z), PlanarDomain.square(1.0), 1.5, 0.02, box(-0.6, -0.6, 0.6, 0.6))


@pytest.fixture(scope="module")
def boundary_and_delta():
    inp = desk_input()
    bd = select_boundary_data(inp, 0.4)
    return inp, bd, select_delta(inp, bd, 0.4)


def test_boundary_data(boundary_and_delta):
    inp, bd, _ = boundary_and_delta
    assert all(c.passed for c in bd.checks)
    assert bd.n >= 16 and (bd.n & (bd.n - 1)) == 0
    # points on the hat polygon, which strictly surrounds P inside O
    d = np.array([bd.hat.hat.exterior.distance(Point(z.real, z.imag)) for z in bd.points])
    assert d.max() < 1e-9
    assert bd.hat.hat.contains(inp.P) and inp.O.polygon.contains(bd.hat.hat)
    # rotations: Im theta != 0 and theta f/|f| close to -1
    assert np.all(bd.theta.imag != 0) and np.allclose(np.abs(bd.theta), 1)
    u = bd.f_at_p / np.abs(bd.f_at_p)
    assert np.abs(np.conj(bd.theta * u) + 1).max() < 0.4 / (3 * mu(inp.r1, inp.r2))


def test_boundary_data_small_data():
    from maxdisk.weierstrass import WeierstrassData
    from maxdisk.analytic import const
    inp = desk_input()
    inp.X = ImmersionField(WeierstrassData(identity() / 10, const(1.0)))
    bd = select_boundary_data(inp, 10.0, n0=16)
    # with a loose eps0 only the disk containment drives n: the chord
    # perimeter/n must fit in the band between the hat and P
    band = bd.hat.hat.exterior.distance(inp.P.exterior)
    per = bd.hat.hat.exterior.length
    expect = next(n for n in (16, 32, 64, 128, 256) if per / n < band)
    assert bd.n == expect == 64 and all(c.passed for c in bd.checks)


def test_select_delta(boundary_and_delta):
    _, bd, dc = boundary_and_delta
    assert all(c.passed for c in dc.checks)
    assert dc.delta <= bd.hat.min_gap() / 4
    dists = np.abs(bd.points[:, None] - bd.points[None, :]) + np.eye(bd.n) * 10
    assert dists.min() > 2 * dc.delta
    assert dc.ell > 1 + 2 * math.pi * dc.delta


def test_run_lemma_records_history_and_trace():
    with pytest.raises(RetriesExhausted) as ei:
        run_lemma(desk_input(), eps0=1.0, max_retries=1)
    err = ei.value
    assert [h["eps0"] for h in err.history] == [1.0, 0.5]
    assert all(h["error"] == "KUnderflow" for h in err.history)
    assert len(err.trace.steps) >= 1 and err.trace.data[0][0] == "X"


def test_failures_are_retryable():
    for exc in (KUnderflow, DegreeCapExceeded):
        assert issubclass(exc, RETRYABLE)
    assert not issubclass(InputRejected, RETRYABLE[:-1])
