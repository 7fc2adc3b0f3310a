import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxdisk.analytic import Polyline, const, evaluate, identity, integrate, segment, simple_pole_factor
from maxdisk.domain import PlanarDomain
from maxdisk.exceptions import DegenerateData, ZeroOfH
from maxdisk.lorentz import CANONICAL, lorentz_norm_sq, peculiar_frame
from maxdisk.weierstrass import (ImmersionField, WeierstrassData, change_basis, g_variation, gf_from_phi, lopez_ros,
                                 metric_factor, phi_from_gf, singular_set_probe)

z = identity()


def pts(rng, n=100, r=0.9):
    return r * np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * np.pi * rng.uniform(0, 1, n))


def test_phi_from_gf_examples():
    d = WeierstrassData(const(0), const(1))
    p = [evaluate(c, 0.3) for c in phi_from_gf(d)]
    assert np.allclose(p, [0.5j, -0.5, 0])
    d = WeierstrassData(z, const(1))
    p = d.phi_values(1.0)
    assert abs(p[0] ** 2 + p[1] ** 2 - p[2] ** 2) < 1e-15
    d = WeierstrassData(z / 2, const(2))
    p = d.phi_values(1j)
    lhs = np.sum(np.abs(p[:2]) ** 2) - abs(p[2]) ** 2
    assert lhs == pytest.approx(2 * metric_factor(d, 1j) ** 2, abs=1e-12)


def test_gf_roundtrip(rng):
    d = WeierstrassData(z, const(1))
    back = gf_from_phi(phi_from_gf(d))
    w = pts(rng)
    assert np.allclose(evaluate(back.g, w), w, atol=1e-12)
    assert np.allclose(evaluate(back.f, w), 1, atol=1e-12)
    flat = gf_from_phi((const(0.5j), const(-0.5), const(0)))
    assert evaluate(flat.g, 0.2) == 0 and evaluate(flat.f, 0.2) == 1
    with pytest.raises(DegenerateData):
        gf_from_phi((const(0), const(0), const(0)))


def test_gf_from_rotated_phi_is_conformal(rng):
    d = WeierstrassData(z / 2, const(1))
    S = peculiar_frame(0.8, 0.3)
    d2 = change_basis(d, S)
    back = gf_from_phi(phi_from_gf(d2), S)
    assert np.max(back.conformality_residual(pts(rng))) < 1e-12


def test_change_basis_identity_and_roundtrip(rng):
    d = WeierstrassData(z / 2 + 0.1, const(1.5) + z)
    w = pts(rng)
    same = change_basis(d, CANONICAL)
    assert np.allclose(evaluate(same.g, w), evaluate(d.g, w), atol=1e-12)
    S = peculiar_frame(0.6, -0.4)
    there = change_basis(d, S)
    back = change_basis(there, CANONICAL)
    assert np.allclose(back.canonical_phi_values(w), d.canonical_phi_values(w), atol=1e-11)


def test_change_basis_covariance():
    d = WeierstrassData(z / 2, const(2))
    S = peculiar_frame(1.0, 0.0)
    X = ImmersionField(d)
    Xs = ImmersionField(change_basis(d, S))
    for w in (0.3 + 0.2j, -0.5j, 0.7):
        direct = S.coords(np.asarray(X.immerse(w)))
        assert np.allclose(np.asarray(Xs.immerse(w)), np.asarray(X.immerse(w)), atol=1e-10)
        assert abs(direct[2] - S.coords(np.asarray(Xs.immerse(w)))[2]) < 1e-10


def test_lopez_ros_examples(rng):
    d = WeierstrassData(z, const(1))
    t = lopez_ros(d, const(2))
    w = pts(rng)
    assert np.allclose(evaluate(t.g, w), w / 2) and np.allclose(evaluate(t.f, w), 2)
    h = simple_pole_factor(0.1, 1j, 0)
    ann = np.concatenate([r * np.exp(2j * np.pi * np.arange(64) / 64) for r in np.linspace(0.5, 1, 6)])
    t = lopez_ros(d, h, samples=ann)
    assert np.max(np.abs(t.phi_values(ann)[2] - d.phi_values(ann)[2])) < 1e-12
    with pytest.raises(ZeroOfH):
        lopez_ros(d, z - 0.5, samples=ann)


def test_lopez_ros_integrated_third_coordinate():
    d = WeierstrassData(z / 2, const(2))
    h = simple_pole_factor(0.05, 1j, 2.0)
    t = lopez_ros(d, h)
    X, Y = ImmersionField(d), ImmersionField(t)
    rng = np.random.default_rng(5)
    for w in pts(rng, 50, 0.8):
        assert abs(X.immerse(w)[2] - Y.immerse(w)[2]) < 1e-10


def test_metric_factor_examples():
    assert metric_factor(WeierstrassData(const(0), const(1)), 0.4j) == 0.5
    assert metric_factor(WeierstrassData(z, const(1)), np.exp(0.3j)) == pytest.approx(0, abs=1e-15)
    d = WeierstrassData(z / 2, const(2))
    assert metric_factor(d, 1.0) == pytest.approx(0.75)
    X = ImmersionField(d)
    assert X.fd_metric_factor(1.0) == pytest.approx(0.75, abs=1e-6)
    lam, flag = metric_factor(WeierstrassData(z, const(1)), np.array([0.5, 2.0]), return_flags=True)
    assert list(flag) == [False, True] and lam[1] < 0


def test_singular_set_probe():
    w = np.exp(2j * np.pi * np.arange(32) / 32)
    assert singular_set_probe(WeierstrassData(z / 2, const(1)), np.concatenate([w, 0.5 * w])).size == 0
    flagged = singular_set_probe(WeierstrassData(z, const(1)), np.concatenate([w, 0.5 * w]))
    assert flagged.size == 32 and np.allclose(np.abs(flagged), 1)
    h = const(2.0)
    t = lopez_ros(WeierstrassData(z, const(1)), h)
    s = np.concatenate([w, 2 * w, 3 * w])
    got = singular_set_probe(t, s)
    assert np.allclose(np.abs(got / 2), 1)


def test_immerse_examples():
    X = ImmersionField(WeierstrassData(const(0), const(1)))
    assert tuple(X.immerse(0)) == (0, 0, 0)
    assert np.allclose(X.immerse(1.0), (0, -0.5, 0), atol=1e-15)
    d = WeierstrassData(z / 2, const(2))
    a = ImmersionField(d).integrate_path(Polyline.through([0, 0.5j, 0.6 + 0.4j]))
    b = ImmersionField(d).integrate_path(segment(0, 0.6 + 0.4j))
    assert np.allclose(a, b, atol=1e-10)


def test_cache_and_cloud_agree_with_fresh_integration(rng):
    d = WeierstrassData(z / 2, const(2))
    X = ImmersionField(d)
    dom = PlanarDomain.square(0.7)
    w = pts(rng, 200, 0.6)
    cloud = X.immerse_cloud(w, dom, 0.05)
    fresh = np.array([X.integrate_path(segment(0, p)) for p in w])
    assert np.max(np.abs(cloud - fresh)) < 1e-10
    X.immerse(w[0])
    assert np.allclose(X.immerse(w[0]), X.immerse(w[0], use_cache=False), atol=1e-10)


def test_harmonic_mean_value(rng):
    X = ImmersionField(WeierstrassData(z / 2 + 0.1 * z ** 2, const(2) + z))
    c = 0.2 + 0.1j
    ring = c + 0.05 * np.exp(2j * np.pi * np.arange(64) / 64)
    vals = X.immerse_from(0j, np.zeros(3), ring)
    assert np.allclose(vals.mean(axis=0), np.asarray(X.immerse(c)), atol=1e-6)


@given(st.complex_numbers(max_magnitude=0.9))
def test_conformality_residual(w):
    d = lopez_ros(WeierstrassData(z / 2, const(2)), simple_pole_factor(0.1, 1j, 3.0))
    assert d.conformality_residual(w) < 1e-12


def test_fd_metric_matches(rng):
    d = WeierstrassData(z / 2, const(2))
    X = ImmersionField(d)
    for w in pts(rng, 20, 0.8):
        assert abs(X.fd_metric_factor(w) - metric_factor(d, w)) < 1e-5


def test_g_variation():
    assert g_variation(WeierstrassData(const(0.3), const(1)), [0, 0.5, 1j]) == 0
    assert g_variation(WeierstrassData(z, const(1)), [0, 0.5]) == 0.5


def test_data_roundtrip():
    d = lopez_ros(WeierstrassData(z / 2, const(2)), simple_pole_factor(0.1, 1j, 3.0))
    back = WeierstrassData.from_dict(d.to_dict())
    w = np.array([0.1, 0.2j])
    assert np.array_equal(back.phi_values(w), d.phi_values(w))
    assert lorentz_norm_sq(back.frame.w) == pytest.approx(-1)
