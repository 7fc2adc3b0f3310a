import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as spi

from maxdisk.analytic import (AnalyticFn, Polyline, const, evaluate, fn_exp, identity, integrate, integrate_segments,
                              polynomial, quotient, runge_approximant, segment, simple_pole_factor, sup_norm_certify)
from maxdisk.exceptions import DegreeCapExceeded, EmptyInput, InputRejected, NearPole, PoleOnPath

z = identity()


def disk(c, r, n_r=8, n_t=48):
    rr = r * np.arange(0, n_r + 1) / n_r
    t = 2 * np.pi * np.arange(n_t) / n_t
    return (c + rr[:, None] * np.exp(1j * t)[None, :]).ravel()


def test_evaluate_examples():
    h = simple_pole_factor(0.1, 1j, 0)
    assert evaluate(h, 1.0) == pytest.approx(1 + 0.1j, abs=1e-15)
    assert evaluate(z, 2 + 1j) == 2 + 1j
    assert evaluate(fn_exp(polynomial([0.0])), 3 - 7j) == 1
    with pytest.raises(NearPole):
        evaluate(h, 1e-13)


def test_tree_is_immutable_and_roundtrips():
    f = (z * z + 3) / (z - 2) + fn_exp(z / 4) ** 2
    with pytest.raises(AttributeError):
        f.kind = "z"
    g = AnalyticFn.from_dict(f.to_dict())
    w = np.array([0.3 + 0.1j, -1.2 + 0.5j])
    assert np.array_equal(evaluate(f, w), evaluate(g, w))
    assert 2 in [complex(p) for p in g.poles] or any(abs(p - 2) < 1e-15 for n in g.topo_order() for p in n.poles)


def test_quotient_by_zero_constant_rejected():
    with pytest.raises(InputRejected):
        quotient(z, const(0))


def test_integrate_closed_forms():
    assert integrate(z, segment(0, 1)) == pytest.approx(0.5, abs=1e-14)
    p = 0.3 + 0.2j
    d, d2 = 0.5, 1e-3
    val = integrate(quotient(const(1), z - p), segment(p + d, p + d2))
    assert abs(val - math.log(d2 / d)) < 1e-11
    with pytest.raises(PoleOnPath):
        integrate(quotient(const(1), z - p), segment(p - 1, p + 1))


def test_integrate_against_scipy_quad():
    f = fn_exp(z * 1j) * (z * z + 1)
    a, b = -0.4 + 0.2j, 1.1 - 0.7j

    def part(fn):
        return spi.quad(lambda t: fn(evaluate(f, a + (b - a) * t) * (b - a)), 0, 1, epsabs=1e-14, limit=200)[0]

    ref = part(np.real) + 1j * part(np.imag)
    assert abs(integrate(f, segment(a, b)) - ref) < 1e-12


def test_path_independence_and_cauchy():
    p = 0.0
    f = quotient(const(1), z - p) + z ** 3
    a, b = 1 + 0j, -1 + 0.5j
    up = Polyline.through([a, 1 + 1j, -1 + 1j, b])
    up2 = Polyline.through([a, 0.5 + 2j, b])
    assert abs(integrate(f, up) - integrate(f, up2)) < 1e-10
    # a loop around the pole picks up 2 pi i
    loop = Polyline.through([1, 1j, -1, -1j, 1])
    assert abs(integrate(f, loop) - 2j * math.pi) < 1e-10
    # a loop that does not enclose it gives zero
    far = Polyline.through([2, 3, 3 + 1j, 2 + 1j, 2])
    assert abs(integrate(f, far)) < 1e-10


@given(st.complex_numbers(max_magnitude=2), st.complex_numbers(max_magnitude=2), st.complex_numbers(max_magnitude=2))
def test_additive_and_antisymmetric(a, b, c):
    if abs(a - b) < 1e-6 or abs(b - c) < 1e-6:
        return
    f = fn_exp(z) + z ** 2
    ab, bc = integrate(f, segment(a, b)), integrate(f, segment(b, c))
    abc = integrate(f, Polyline.through([a, b, c]))
    assert abs(ab + bc - abc) < 1e-10
    assert abs(ab + integrate(f, segment(b, a))) < 1e-11


def test_integrate_segments_matches_scalar(rng):
    f = fn_exp(z / 3) * z
    a = rng.normal(size=20) + 1j * rng.normal(size=20)
    b = rng.normal(size=20) + 1j * rng.normal(size=20)
    many = integrate_segments(f, a, b)[0]
    one = np.array([integrate(f, segment(x, y)) for x, y in zip(a, b)])
    assert np.max(np.abs(many - one)) < 1e-11


def test_sup_norm_certify():
    pts = np.exp(2j * np.pi * np.arange(64) / 64)
    c = sup_norm_certify(const(0), pts, 1.0)
    assert c.passed and c.max == 0
    c = sup_norm_certify(z, pts, 0.5)
    assert not c.passed and c.max == pytest.approx(1)
    h = simple_pole_factor(0.1, 1j, 0)
    c = sup_norm_certify(h - 1, 10 * pts, 0.02)
    assert c.passed and c.max == pytest.approx(0.01)
    with pytest.raises(EmptyInput):
        sup_norm_certify(z, [], 1)


def test_runge_trivial_cases():
    l, rep = runge_approximant(disk(5, 0.2), disk(0, 1), 1.0, 0.1, return_report=True)
    assert rep.degree == 0 and evaluate(l, 3.0) == 1
    l, rep = runge_approximant(disk(5, 0.2), disk(0, 1), 1.01, 0.05, return_report=True)
    assert rep.degree == 0 and rep.passed


def test_runge_two_disks():
    hi, lo = disk(5, 0.2), disk(0, 1)
    l, rep = runge_approximant(hi, lo, 10.0, 0.05, return_report=True)
    # independent re-check of the sampled bounds on a finer sampling
    assert np.max(np.abs(evaluate(l, disk(5, 0.2, 20, 200)) - 10)) < 0.05
    assert np.max(np.abs(evaluate(l, disk(0, 1, 20, 200)) - 1)) < 0.05
    assert rep.min_abs > 0 and l.kind == "exp"


def test_runge_degree_cap():
    # a horseshoe around the high set: the step is not reachable at low degree
    t = np.linspace(0.3, 2 * np.pi - 0.3, 200)
    lo = np.concatenate([r * np.exp(1j * t) for r in (1.0, 1.1, 1.2)])
    hi = disk(0, 0.8)
    with pytest.raises(DegreeCapExceeded):
        runge_approximant(hi, lo, 50.0, 0.01, degree_cap=6)
