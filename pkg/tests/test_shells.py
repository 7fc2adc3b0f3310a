import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxdisk.exceptions import BadShellOrder, EmptyInput, NotInE
from maxdisk.lorentz import CANONICAL, lorentz_norm_sq, peculiar_frame
from maxdisk.shells import (cyl_coords, distance_to_B, escape_bound_lambda, in_B, mu, normal_gauss,
                            normal_horizontal, proj_horizontal, r_star, tangent_frame, tangent_plane_separation)


def bisect_level(p, lo=-50.0, hi=50.0, iters=200):
    """Level r at which p enters B(r), found from the membership predicate alone."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if in_B(p, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_r_star_values():
    assert r_star((0, 0, 0)) == 1.0
    assert r_star((0, 0, -1)) == 0.0
    assert r_star((3, 4, 0)) == pytest.approx(math.sqrt(26), abs=1e-15)
    assert bisect_level(np.array([3.0, 4, 0])) == pytest.approx(math.sqrt(26), abs=1e-12)


def test_r_star_matches_bisection(rng):
    pts = rng.uniform(-5, 5, size=(10_000, 3))
    # bisection vectorised over all points
    lo, hi = np.full(len(pts), -50.0), np.full(len(pts), 50.0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside = in_B(pts, mid[:, None].T[0])
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    assert np.max(np.abs(r_star(pts) - 0.5 * (lo + hi))) < 1e-9


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-5, 5), st.floats(1e-6, 5))
def test_nesting(x, y, z, r1, gap):
    p = np.array([x, y, z])
    r2 = r1 + gap
    if r_star(p) <= r1:
        assert r_star(p) < r2


def test_projection_examples():
    p = (2, 0, -math.sqrt(2))
    assert np.allclose(proj_horizontal(p, 0), (1, 0, -math.sqrt(2)))
    assert np.allclose(normal_horizontal(p, 0), (1, 0, 0))
    assert np.allclose(normal_gauss(p, 0), (-1, 0, math.sqrt(2)))
    q = (0, 3, -math.sqrt(5))
    assert np.allclose(proj_horizontal(q, 0), (0, 2, -math.sqrt(5)), atol=1e-14)
    on = proj_horizontal(q, 0)
    assert np.allclose(proj_horizontal(on, 0), on)
    assert np.allclose(normal_horizontal((0, 1, -3), 0), (0, 1, 0), atol=1e-15)
    with pytest.raises(NotInE):
        proj_horizontal((0, 0, -5), 0)
    with pytest.raises(NotInE):
        normal_gauss((1, 0, 5), 0)


def test_normal_horizontal_inside_agrees_with_difference():
    p = np.array([0.5, 0, -math.sqrt(2)])
    d = proj_horizontal(p, 0) - p
    assert np.allclose(d / np.linalg.norm(d), normal_horizontal(p, 0), atol=1e-12)


def test_normal_gauss_pole_limit():
    p = np.array([1.0, 0, -math.sqrt(1e-12 + 1)])
    assert np.allclose(normal_gauss(p, 0), (0, 0, 1), atol=1e-5)


def test_projection_properties(rng):
    r = 0.7
    th = rng.uniform(-math.pi, math.pi, 1000)
    s = rng.uniform(0, 6, 1000)
    t = rng.uniform(0.01, 6, 1000)
    pts = np.stack([t * np.cos(th), t * np.sin(th), r - np.sqrt(s * s + 1)], axis=1)
    ph = proj_horizontal(pts, r)
    assert np.max(np.abs(r_star(ph) - r)) < 1e-12
    assert np.allclose(ph[:, 2], pts[:, 2])
    nh = normal_horizontal(pts, r)
    assert np.allclose(lorentz_norm_sq(nh), 1) and np.allclose(np.linalg.norm(nh, axis=1), 1)
    assert np.allclose(lorentz_norm_sq(normal_gauss(pts, r)), -1, atol=1e-12)
    c = cyl_coords(pts[0], r)
    assert np.allclose(c.point(r), pts[0])


def test_mu_values():
    assert mu(0, 1) == pytest.approx(math.sqrt(3))
    assert mu(1, 3) == pytest.approx(2 * math.sqrt(2))
    assert mu(2, 2 + 1e-12) < 2e-6
    with pytest.raises(BadShellOrder):
        mu(1, 1)


def test_mu_is_sampled_sup(rng):
    r1, r2 = 1.0, 3.0
    # b(r1) cap E(r2): x3 <= r2 - 1, parametrised by horizontal radius h
    h = np.concatenate([rng.uniform(0, 40, 10**6), np.linspace(0, 1e-3, 10)])
    x3 = r1 - np.sqrt(h * h + 1)
    h, x3 = h[(x3 <= r2 - 1) & (h > 0)], x3[(x3 <= r2 - 1) & (h > 0)]
    pts = np.stack([h, np.zeros_like(h), x3], axis=1)
    d = np.linalg.norm(pts - proj_horizontal(pts, r2), axis=1)
    assert d.max() <= mu(r1, r2) + 1e-12
    assert abs(d.max() - mu(r1, r2)) < 1e-3


def test_tangent_frame_is_peculiar():
    fr = tangent_frame((2, 1, -3), 0.5)
    assert fr.peculiar
    assert np.allclose(fr.w, normal_gauss((2, 1, -3), 0.5))


def test_tangent_plane_separation():
    z0 = (1, 0, 1 - math.sqrt(2))
    cert = tangent_plane_separation(z0, 0.0, 1.0)
    assert cert.passed and cert.margin > 0
    cert = tangent_plane_separation(z0, 1.0 - 1e-6, 1.0)
    assert cert.passed and cert.margin == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(NotInE):
        tangent_plane_separation((0.1, 0, -2), 0.0, 1.0)


def oracle_distance(c, r):
    """Dense sampling of the meridian profile of b(r)."""
    hc = math.hypot(c[0], c[1])
    h = np.linspace(-hc - 20, hc + 20, 400_001)
    return float(np.min(np.hypot(h - hc, c[2] - (r - np.sqrt(h * h + 1)))))


@pytest.mark.parametrize("c", [(3, 0, 0), (0, 2, 1), (1, 1, 4), (5, -2, -1)])
def test_distance_to_B_against_dense_profile(c):
    assert distance_to_B(c, 0.5) == pytest.approx(oracle_distance(c, 0.5), abs=1e-6)


def test_escape_bound_examples():
    r2 = 1.0
    far = np.array([[0.0, 0, r2 + 5]])
    assert escape_bound_lambda(far, CANONICAL, r2) == 0.0
    vertex = np.array([0.0, 0, r2 - 1])
    lam = escape_bound_lambda(vertex[None], CANONICAL, r2, n_dirs=1)
    # dense lambda grid: first lambda after which the unit ball clears B(r2)
    grid = np.linspace(0, 10, 100_001)
    dist = np.array([oracle_distance(vertex + g * np.array([1.0, 0, 0]), r2) for g in grid[::100]])
    coarse = grid[::100][np.argmax(dist > 1.0)]
    fine = grid[(grid >= coarse - 0.01) & (grid <= coarse)]
    dfine = np.array([oracle_distance(vertex + g * np.array([1.0, 0, 0]), r2) for g in fine])
    assert lam == pytest.approx(fine[np.argmax(dfine > 1.0)], abs=2e-4)
    two = np.array([vertex, [0.5, 0, r2 - 3]])
    fr = peculiar_frame(0.0, 0.0)
    singles = [escape_bound_lambda(p[None], fr, r2, n_dirs=8) for p in two]
    assert escape_bound_lambda(two, fr, r2, n_dirs=8) == max(singles)
    with pytest.raises(EmptyInput):
        escape_bound_lambda(np.empty((0, 3)), fr, r2)


def test_escape_bound_monotone_in_r2():
    pts = np.array([[0.3, 0.1, -0.5], [1.0, -0.4, -1.2]])
    fr = peculiar_frame(0.0, 0.0)
    a = escape_bound_lambda(pts, fr, 0.5, n_dirs=8)
    b = escape_bound_lambda(pts, fr, 1.0, n_dirs=8)
    assert b >= a
