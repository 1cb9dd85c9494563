import numpy as np
import pytest

from mixmom.entropy import (
    MultiplierVec,
    QM1Table,
    ansatz_moments,
    clamp_quarter_phi,
    closure_flux_entropy,
    default_quadrature,
    dual_objective,
    isotropic_multipliers,
    linear_closure,
    qm1_eigen_deviation,
    qm1_lookup,
    qm1_tabulate,
    solve_dual,
    solve_dual_batch,
)
from mixmom.moments import MomentVec
from mixmom.sphere import FULL1, MIXED1, Region, gram_matrix, quadrature, quarter1


@pytest.fixture(scope="module")
def table():
    return qm1_tabulate(16)


def test_dual_derivatives_finite_difference():
    quad = default_quadrature(MIXED1, 20, 20)
    u = MomentVec(MIXED1, [1.0, 0.3, -0.1, 0.2, -0.25])
    a = np.array([-2.0, 0.4, -0.3, 0.2, 0.1])
    f, g, H = dual_objective(MultiplierVec(MIXED1, a), u, quad)
    h = 1e-6
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        fp, gp, _ = dual_objective(MultiplierVec(MIXED1, a + e), u, quad)
        fm, gm, _ = dual_objective(MultiplierVec(MIXED1, a - e), u, quad)
        assert (fp - fm) / (2 * h) == pytest.approx(g[i], abs=1e-7)
        np.testing.assert_allclose((gp - gm) / (2 * h), H[:, i], atol=1e-7)


def test_isotropic_solution():
    a = solve_dual(MomentVec(MIXED1, [1, 0.25, -0.25, 0.25, -0.25]))
    np.testing.assert_allclose(a.alpha, isotropic_multipliers(MIXED1, 1.0), atol=1e-9)
    assert a.alpha[0] == pytest.approx(np.log(1 / (4 * np.pi)), abs=1e-9)


@pytest.mark.parametrize("u", [[1.0, 0.5, 0.2], [3.0, -1.2, 2.0], [0.5, 0.0, 0.0]])
def test_full_round_trip(u):
    uv = MomentVec(FULL1, u)
    a = solve_dual(uv, tol=1e-11)
    np.testing.assert_allclose(ansatz_moments(a), u, atol=1e-9 * u[0])


def test_mixed_round_trip_batch():
    rng = np.random.default_rng(3)
    n = 300
    r = 0.9 * np.sqrt(rng.uniform(0, 1, n))
    ang = rng.uniform(0, 2 * np.pi, n)
    g = rng.uniform(0.1, 0.9, (n, 2))
    dx, dy = np.abs(r * np.cos(ang)), np.abs(r * np.sin(ang))
    U = np.column_stack([np.ones(n), g[:, 0] * dx + 0.02, -(1 - g[:, 0]) * dx - 0.02,
                         g[:, 1] * dy + 0.02, -(1 - g[:, 1]) * dy - 0.02])
    keep = np.hypot(U[:, 1] - U[:, 2], U[:, 3] - U[:, 4]) < 0.97
    U = U[keep]
    quad = default_quadrature(MIXED1)
    A, info = solve_dual_batch(MIXED1, U, quad, tol=1e-11, regularize=False)
    B = quad.basis(MIXED1)
    back = (np.exp(A @ B.T) * quad.weights) @ B
    np.testing.assert_allclose(back, U, atol=1e-9)
    assert np.all(info.blend == 0)


def test_regularized_states_are_reported():
    U = np.array([[1.0, 0.995, 0.0]])
    _, info = solve_dual_batch(FULL1, U)
    assert info.regularized == 1


def test_nonrealizable_rejected():
    with pytest.raises(ValueError):
        solve_dual_batch(FULL1, np.array([[1.0, 1.5, 0.0]]))


def test_flux_of_isotropic_is_zero_mass_flux():
    a = solve_dual(MomentVec(FULL1, [1.0, 0.0, 0.0]))
    fx, fy = closure_flux_entropy(a)
    np.testing.assert_allclose(fx, [0, 1 / 3, 0], atol=1e-12)
    np.testing.assert_allclose(fy, [0, 0, 1 / 3], atol=1e-12)


def test_linear_closure_reproduces_moments():
    u = MomentVec(MIXED1, [1.0, 0.3, -0.1, 0.2, -0.2])
    lin = linear_closure(u)
    q = quadrature(Region.FULL, 40, 40)
    np.testing.assert_allclose((lin(q.ox, q.oy, q.quadrant) * q.weights) @ q.basis(MIXED1), u.values, atol=1e-12)
    np.testing.assert_allclose(gram_matrix(MIXED1) @ lin.coeffs, u.values, atol=1e-12)


def test_quarter_dual_in_other_quadrant():
    kind = quarter1("MM")
    quad = quadrature(Region.MM, 40, 40, hemisphere=True)
    u = MomentVec(kind, [1.0, -0.4, -0.3])
    a = solve_dual(u, quad=quad)
    np.testing.assert_allclose(ansatz_moments(a, quad), u.values, atol=1e-9)


def test_clamp():
    P = np.array([[0.5, 0.5], [1.0, 0.0], [0.3, 0.001]])
    Pc, r = clamp_quarter_phi(P)
    assert r[0] == 0
    assert np.all(Pc >= 0.02 - 1e-12) and np.all(np.hypot(Pc[:, 0], Pc[:, 1]) <= 0.98 + 1e-12)


def test_table_isotropic_lookup(table):
    res = qm1_lookup(table, [0.5, 0.5])
    iso = np.array([[1 / 3, 2 / (3 * np.pi)], [2 / (3 * np.pi), 1 / 3]])
    np.testing.assert_allclose(res.tensor, iso, atol=1e-8)
    assert res.trace0 == pytest.approx(1.0, abs=1e-8) and res.trace90 == pytest.approx(1.0, abs=1e-8)
    assert not res.near_boundary


def test_table_reflection(table):
    a = qm1_lookup(table, [0.3, 0.4])
    b = qm1_lookup(table, [-0.3, 0.4], "MP", u00=2.0)
    np.testing.assert_allclose(b.tensor, 2 * a.tensor * np.array([[1, -1], [-1, 1]]))


def test_table_node_matches_direct_solve(table):
    quad = quadrature(Region.PP, 40, 40, hemisphere=True)
    u = MomentVec(quarter1("PP"), [1.0, 0.375, 0.25])  # a grid node at resolution 16
    a = solve_dual(u, quad=quad)
    pw = np.exp(quad.basis(u.kind) @ a.alpha) * quad.weights
    want = [pw @ quad.ox ** 2, pw @ (quad.ox * quad.oy), pw @ quad.oy ** 2]
    res = qm1_lookup(table, [0.375, 0.25])
    np.testing.assert_allclose([res.tensor[0, 0], res.tensor[0, 1], res.tensor[1, 1]], want, atol=1e-9)


def test_table_eigenvector_alignment(table):
    # on the diagonal the mirror symmetry forces phi to be an eigenvector (angle in degrees)
    assert qm1_eigen_deviation(table, [0.5, 0.5]) < 1e-4
    assert qm1_eigen_deviation(table, [0.3, 0.3]) < 1e-4


def test_table_save_load(table, tmp_path):
    p = tmp_path / "t.txt"
    table.save(p)
    back = QM1Table.load(p)
    assert back.resolution == table.resolution
    np.testing.assert_array_equal(back.data, table.data)
    np.testing.assert_array_equal(back.ring, table.ring)


def test_table_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hello\n")
    with pytest.raises(ValueError):
        QM1Table.load(p)
