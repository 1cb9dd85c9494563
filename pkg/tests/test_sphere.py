import numpy as np
import pytest
from scipy import integrate

from mixmom.sphere import (
    FULL1,
    MIXED1,
    QUADRANTS,
    Direction,
    Region,
    basis_eval,
    basis_integral,
    gram_matrix,
    half_monomial_integral,
    isotropic_moments,
    omega_project,
    quadrature,
    quarter1,
    quarter_monomial_integral,
)


def _adaptive(ix, iy, a, b):
    """Independent oracle: adaptive 2D quadrature over mu in [-1,1] and azimuth in [a,b]."""

    def f(mu, az):
        s = np.sqrt(1.0 - mu * mu)
        return (s * np.cos(az)) ** ix * (s * np.sin(az)) ** iy

    val, _ = integrate.dblquad(f, a, b, -1.0, 1.0, epsabs=1e-12, epsrel=1e-12)
    return val


def test_omega_project_examples():
    assert omega_project(Direction(0.0, 0.0)) == pytest.approx((1.0, 0.0))
    assert omega_project(Direction(1.0, 2.3)) == pytest.approx((0.0, 0.0))
    h = np.sqrt(2.0) / 2.0
    assert omega_project(Direction(0.0, np.pi / 4)) == pytest.approx((h, h))


def test_direction_rejects_bad_mu():
    with pytest.raises(ValueError):
        Direction(1.5, 0.0)


def test_basis_eval_examples():
    np.testing.assert_allclose(basis_eval(MIXED1, Direction(0.0, 0.0)), [1, 1, 0, 0, 0])
    np.testing.assert_allclose(basis_eval(FULL1, Direction(1.0, 0.7)), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(basis_eval(quarter1("PP"), Direction(0.0, 3 * np.pi / 4)), [0, 0, 0])


def test_basis_eval_tag_resolves_boundary():
    d = Direction(0.0, np.pi / 2)  # on the PP/MP edge, omega_x = 0
    v_mp = basis_eval(quarter1("MP"), d, tag=Region.MP)
    v_pp = basis_eval(quarter1("MP"), d, tag=Region.PP)
    assert v_mp[0] == 1.0 and v_pp[0] == 0.0


@pytest.mark.parametrize("region,area", [(Region.FULL, 4 * np.pi), (Region.PP, np.pi), (Region.XM, 2 * np.pi)])
def test_quadrature_area(region, area):
    q = quadrature(region, 40, 40)
    assert abs(q.weights.sum() - area) <= 1e-12


def test_quadrature_first_moment_pp():
    q = quadrature(Region.PP, 40, 40)
    assert abs(q.integrate(q.ox) - np.pi / 2) <= 1e-12


def test_quadrature_rejects_small_sizes():
    with pytest.raises(ValueError):
        quadrature(Region.PP, 1, 10)


def test_hemisphere_folding_matches_full_rule():
    a = quadrature(Region.FULL, 30, 30)
    b = quadrature(Region.FULL, 30, 30, hemisphere=True)
    for f in (lambda q: q.ox ** 2 * q.oy ** 4, lambda q: np.abs(q.ox) ** 3):
        assert abs(a.integrate(f(a)) - b.integrate(f(b))) < 1e-12


@pytest.mark.parametrize("ix,iy", [(0, 0), (1, 0), (1, 1), (2, 3), (0, 5)])
def test_quarter_integral_vs_adaptive(ix, iy):
    for q in QUADRANTS:
        a, b = q.azimuth_range
        assert quarter_monomial_integral(ix, iy, q) == pytest.approx(_adaptive(ix, iy, a, b), abs=1e-10)


def test_quarter_integral_examples():
    assert quarter_monomial_integral(0, 0, "PP") == pytest.approx(np.pi, abs=1e-14)
    assert quarter_monomial_integral(1, 0, "PP") == pytest.approx(np.pi / 2, abs=1e-14)
    assert quarter_monomial_integral(1, 1, "PP") == pytest.approx(2 / 3, abs=1e-14)


def test_half_integral_examples():
    assert half_monomial_integral(1, "Xp") == pytest.approx(np.pi)
    assert half_monomial_integral(1, "Xm") == pytest.approx(-np.pi)
    assert half_monomial_integral(2, "Yp") == pytest.approx(2 * np.pi / 3)


def test_half_integral_is_sum_of_quarters():
    for k in range(1, 7):
        assert half_monomial_integral(k, "Xm") == pytest.approx(
            quarter_monomial_integral(k, 0, "MP") + quarter_monomial_integral(k, 0, "MM"), abs=1e-13)
        assert half_monomial_integral(k, "Yp") == pytest.approx(
            quarter_monomial_integral(0, k, "PP") + quarter_monomial_integral(0, k, "MP"), abs=1e-13)


def test_gram_full1():
    G = gram_matrix(FULL1)
    np.testing.assert_allclose(G, np.diag([4 * np.pi, 4 * np.pi / 3, 4 * np.pi / 3]), atol=1e-13)


def test_gram_mixed_is_spd_and_matches_quadrature():
    G = gram_matrix(MIXED1)
    assert G[0, 0] == pytest.approx(4 * np.pi)
    assert np.all(np.linalg.eigvalsh(G) > 0)
    q = quadrature(Region.FULL, 40, 40)
    B = q.basis(MIXED1)
    np.testing.assert_allclose((B.T * q.weights) @ B, G, atol=1e-12)


def test_isotropic_moments_mixed():
    np.testing.assert_allclose(isotropic_moments(MIXED1), [1, 0.25, -0.25, 0.25, -0.25], atol=1e-15)
    np.testing.assert_allclose(basis_integral(FULL1), [4 * np.pi, 0, 0], atol=1e-15)
