import numpy as np
import pytest

from mixmom.collision import (
    DEFAULT_TRACE_CAP,
    S0,
    S1,
    S2,
    S3,
    lb_full1,
    lb_full_moment,
    lb_matrix_mm1,
    lb_mixed_entropy_arrays,
    lb_mixed_polynomial,
    lb_mixed_tabulated,
    lb_mixed_tabulated_arrays,
    quarter_lb_defect,
)
from mixmom.entropy import qm1_tabulate, solve_dual_batch
from mixmom.moments import MomentVec, mixed1_realizable
from mixmom.sphere import MIXED1, Region, quadrature


@pytest.fixture(scope="module")
def table():
    return qm1_tabulate(32)


def test_constants_match_formulas():
    pi = np.pi
    d = (2 * pi - 4) * (pi - 4)
    assert S0 == -3 / (pi - 4) - 1
    assert S1 == 3 * pi * (pi - 3) / d
    assert S2 == -3 * pi / d - 1.5
    assert S3 == 3 * pi / d - 0.5


def test_matrix_first_row_zero():
    S = lb_matrix_mm1()
    assert np.all(S[0] == 0)


def test_polynomial_golden():
    out = lb_mixed_polynomial(MomentVec(MIXED1, [1, 1, 0, 0, 0]))
    # the printed values are truncated, so agreement is to within 1e-3
    np.testing.assert_allclose(out, [0, -2.813, 0.813, 1.813, -1.813], atol=1e-3)


def test_polynomial_matches_linear_ansatz_oracle():
    # pairing <psi L b> for the linear ansatz reduces to bulk terms plus meridian
    # traces; the ansatz jumps across quadrant edges, where the mean is taken
    from mixmom.collision import lb_mixed_from_traces
    from mixmom.entropy import linear_closure

    u = MomentVec(MIXED1, [1.0, 0.3, -0.2, 0.1, -0.35])
    c = linear_closure(u).coeffs
    x, w = np.polynomial.legendre.leggauss(40)
    th = 0.5 * np.pi * (x + 1)
    wt = 0.5 * np.pi * w
    s = np.sin(th)

    def mean_trace(a, pairs):
        ox, oy = s * np.cos(a), s * np.sin(a)
        tot = 0
        for xp, yp in pairs:
            b = np.stack([np.ones_like(s), ox * xp, ox * (not xp), oy * yp, oy * (not yp)])
            tot = tot + (c @ b) @ wt
        return tot / len(pairs)

    t0 = mean_trace(0.0, [(True, True), (True, False)])
    t90 = mean_trace(np.pi / 2, [(True, True), (False, True)])
    t180 = mean_trace(np.pi, [(False, True), (False, False)])
    t270 = mean_trace(3 * np.pi / 2, [(False, False), (True, False)])
    np.testing.assert_allclose(lb_mixed_from_traces(u.values, t0, t90, t180, t270),
                               lb_mixed_polynomial(u), atol=1e-12)


def test_full_moment_formula():
    u = {(0, 0): 2.0, (1, 0): 0.3, (2, 0): 0.5, (0, 1): 0.1}
    assert lb_full_moment(0, 0, u) == 0
    assert lb_full_moment(1, 0, u) == pytest.approx(-0.6)
    assert lb_full_moment(2, 0, u) == pytest.approx(-6 * 0.5 + 2 * 2.0)


def test_full_moment_isotropic_relaxation():
    # isotropic moments of density one: <x^2> = 4pi/3, <x^2 y^2> = 4pi/15, <x^4> = 4pi/5
    q = quadrature(Region.FULL, 40, 40)
    u = {(i, j): q.integrate(q.ox ** i * q.oy ** j) for i in range(5) for j in range(5)}
    # L applied to an isotropic density vanishes, so every moment of L psi is zero
    for ix, iy in [(2, 0), (0, 2), (2, 2), (4, 0), (1, 1)]:
        assert lb_full_moment(ix, iy, u) == pytest.approx(0, abs=1e-12)


def test_full1():
    np.testing.assert_allclose(lb_full1([2.0, 0.3, -0.4]), [0, -0.6, 0.8])


def test_tabulated_boundary_state(table):
    out = lb_mixed_tabulated(MomentVec(MIXED1, [1, 1, 0, 0, 0]), table)
    assert out[0] == 0
    assert out[1] == pytest.approx(-2, abs=0.05)
    assert out[2] >= -1e-10 and abs(out[2]) < 1e-6
    cap = 0.5 * DEFAULT_TRACE_CAP
    assert out[3] == pytest.approx(cap) and out[4] == pytest.approx(-cap)


def test_tabulated_isotropic_is_fixed_point(table):
    u = np.array([1, 0.25, -0.25, 0.25, -0.25])
    out = lb_mixed_tabulated(MomentVec(MIXED1, u), table)
    np.testing.assert_allclose(out, 0, atol=1e-9)
    assert mixed1_realizable(u + 1e-3 * out)


def test_tabulated_sign_agreement(table):
    rng = np.random.default_rng(5)
    for _ in range(50):
        d = rng.uniform(0.1, 0.6, 2)
        g = rng.uniform(0.2, 0.8, 2)
        u = np.array([1, g[0] * d[0], -(1 - g[0]) * d[0], g[1] * d[1], -(1 - g[1]) * d[1]])
        a = lb_mixed_tabulated(MomentVec(MIXED1, u), table)
        b = lb_mixed_polynomial(u)
        assert a[0] == b[0] == 0
        assert np.sign(a[1]) == np.sign(b[1])


def test_tabulated_cap_flag(table):
    U = np.array([[1, 1, 0, 0, 0], [1, 0.25, -0.25, 0.25, -0.25]], dtype=float)
    _, capped = lb_mixed_tabulated_arrays(U, table, 100.0)
    assert capped.tolist() == [True, False]


def test_entropy_traces_zero_mass_and_isotropic():
    U = np.array([[1, 0.25, -0.25, 0.25, -0.25], [1, 0.4, -0.1, 0.2, -0.3]])
    A, _ = solve_dual_batch(MIXED1, U)
    out = lb_mixed_entropy_arrays(U, A)
    assert np.all(out[:, 0] == 0)
    np.testing.assert_allclose(out[0], 0, atol=1e-8)


def _smooth(f, df):
    return [(lambda mu, a: f(a) * (1 - mu * mu), lambda mu, a: df(a) * (1 - mu * mu)) for _ in range(4)]


def test_defect_smooth_and_constant():
    per, tot = quarter_lb_defect(_smooth(np.cos, lambda a: -np.sin(a)))
    assert tot == pytest.approx(0, abs=1e-10)
    per, tot = quarter_lb_defect([(lambda mu, a: 1 + 0 * mu, lambda mu, a: 0 * mu)] * 4)
    np.testing.assert_allclose(per, 0, atol=1e-14)


def test_defect_mismatched_derivatives():
    # psi_k = (a - a_k)^2 (1 - mu^2): derivative jumps by pi at each edge;
    # each quadrant gives (pi - 0) * int_0^pi sin(theta) dtheta = 2 pi
    pieces = []
    for k in range(4):
        a0 = k * np.pi / 2
        pieces.append((lambda mu, a, a0=a0: (a - a0) ** 2 * (1 - mu * mu),
                       lambda mu, a, a0=a0: 2 * (a - a0) * (1 - mu * mu)))
    per, tot = quarter_lb_defect(pieces)
    np.testing.assert_allclose(per, 2 * np.pi, atol=1e-12)
    assert tot == pytest.approx(8 * np.pi, abs=1e-10)
