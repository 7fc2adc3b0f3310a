import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from shapely.geometry import box

from maxdisk.domain import PlanarDomain, disk_polygon
from maxdisk.exceptions import InputRejected, SeedInfeasible
from maxdisk.shells import r_star
from maxdisk.theorem import (RecursionParams, StageRecord, alpha_k, alpha_product, certify_stage, choose_O,
                             convergence_report, eps_m, midway_domain, s_k, seed_surface, t_n)


def test_sequence_values():
    assert s_k(1, 1.2) == 1.2
    assert s_k(3, 1.2) == pytest.approx(1.2 + 1 + 2 / 3, abs=1e-15)
    assert alpha_k(1) == pytest.approx(0.70711, abs=5e-6)
    assert alpha_product(20) == pytest.approx(0.5, abs=1e-6)
    assert t_n(2, 1.2) == pytest.approx(-0.16111, abs=5e-6)
    assert eps_m(3, 2) == pytest.approx(1 / 36)
    with pytest.raises(ValueError):
        alpha_k(0)


@given(st.integers(1, 40))
def test_alpha_product_matches_running_product(K):
    prod = 1.0
    for k in range(1, K + 1):
        prod *= alpha_k(k)
    assert alpha_product(K) == pytest.approx(prod, rel=1e-13)
    assert alpha_product(K) > 0.5


@given(st.integers(2, 200), st.floats(1.01, 5.0))
def test_t_n_bounds(n, s1):
    # t_n = s_{n-1} - 1/n^2 - 1 - 1/(n+1)^2 > s_{n-1} - 3, exactly in rationals
    assert t_n(n, s1) > s_k(n - 1, s1) - 3
    gap = 2 - Fraction(1, n * n) - Fraction(1, (n + 1) ** 2)
    assert t_n(n, s1) - (s_k(n - 1, s1) - 3) == pytest.approx(float(gap), rel=1e-12)


@given(st.integers(2, 60), st.integers(1, 30))
def test_eps_m_decreasing_below(n, m):
    assert eps_m(n, m + 1) < eps_m(n, m) < 1 / n ** 2


def test_recursion_params_validation():
    with pytest.raises(InputRejected):
        RecursionParams(s1=1.0)
    with pytest.raises(InputRejected):
        RecursionParams(N=0)


@pytest.fixture(scope="module")
def seed():
    return seed_surface(1.2)


def test_seed_surface(seed):
    assert seed.passed
    assert [c.name for c in seed.checks.checks] == ["A1", "B1", "D1"]
    x0, y0, x1, y1 = seed.P.bounds
    assert x1 == pytest.approx(0.402, abs=5e-3) and x0 == -x1
    # independent dense ring check of the band (s1 - 1/4, s1)
    t = np.linspace(-x1, x1, 400)
    ring = np.concatenate([t - 1j * x1, x1 + 1j * t, t + 1j * x1, -x1 + 1j * t])
    r = r_star(seed.psi.immerse_cloud(ring, seed.U, 0.02))
    assert 0.95 < r.min() and r.max() < 1.2


def test_seed_infeasible():
    # psi_1(0) = 0 has r_star about 0.5 < s1 - 1/4 for s1 = 3, so no small square works
    with pytest.raises(SeedInfeasible):
        seed_surface(3.0)


def test_midway_and_choose_O(seed):
    D = disk_polygon(0j, 4.0)
    O = midway_domain(seed.P, seed.U, D, 0.5)
    d = seed.U.polygon.exterior.distance(seed.P)
    assert O.polygon.contains(seed.P) and seed.U.polygon.contains(O.polygon)
    # rounded corners are 16-segment arcs; their chords sit inside by the sagitta
    sag = 0.5 * d * (1 - math.cos(math.pi / 64))
    assert O.polygon.exterior.distance(seed.P) == pytest.approx(0.5 * d, abs=sag + 1e-9)
    O2, fr = choose_O(seed.psi, seed.P, seed.U, D, s_k(1, 1.2) - 0.25, s_k(2, 1.2), None)
    assert fr == 0.5 and O2.polygon.equals(O.polygon)
    with pytest.raises(InputRejected):
        midway_domain(box(-2, -2, 2, 2), seed.U, D)


def test_certify_stage_constants(seed):
    # psi_2 = psi_1 on a larger square: F and G hold trivially, D fails because
    # r_star stays near 1, well below s_2 - 1/9
    params = RecursionParams()
    P2 = box(-0.5, -0.5, 0.5, 0.5)
    cert = certify_stage(2, seed, seed.psi, P2, seed.U, params, 0.02)
    by = {c.name: c for c in cert.checks}
    assert by["F2"].passed and by["F2"].margin == pytest.approx(1 / 4)
    assert by["G2"].passed and by["G2"].margin == pytest.approx(1 - alpha_k(2), abs=1e-8)
    assert by["A2"].passed and by["B2"].passed and by["C2"].passed and by["E2"].passed
    assert not by["D2"].passed
    assert by["s2"].passed


def test_convergence_report_identical_stages(seed):
    params = RecursionParams(N=2)
    second = StageRecord(2, seed.psi, box(-0.5, -0.5, 0.5, 0.5), seed.U, seed.checks)
    rep = convergence_report([seed, second], params, 0.02)
    by = {c.name: c for c in rep.checks}
    assert by["cauchy.1"].margin == pytest.approx(1 / 4)
    assert by["floor.1"].passed and by["floor.1.positive"].passed
    assert by["escape.2"].passed and by["tn.2"].passed
    with pytest.raises(InputRejected):
        convergence_report([seed], params)
