import numpy as np
import pytest
from scipy.linalg import expm

from mixmom.closures import make_closure
from mixmom.entropy import qm1_tabulate
from mixmom.solver import (
    SIDES,
    Beam,
    Grid,
    ProblemCoefficients,
    SideBC,
    Solver,
    cfl_dt,
    cut,
    diagnostics,
    numerical_flux,
    symmetry_error,
)
from mixmom.sphere import MIXED1, Region, basis_integral, quadrature

ALL = ["p1", "m1", "mm1", "mk1", "qk1"]


def periodic():
    return {s: SideBC("periodic") for s in SIDES}


def isotropic_bc(value):
    return {s: SideBC("isotropic", value) for s in SIDES}


def smooth_state(closure, grid, amp=0.3):
    X, Y = grid.centers()
    rho = 1.0 + amp * np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)
    U = closure.isotropic(1.0)[None, None, :] * rho[..., None]
    # tilt the mean direction a little so the transport is not trivially symmetric
    U = U + 0.1 * (closure.evaluate(U).xp - closure.evaluate(U).xm)
    return closure.limit(U)[0]


@pytest.mark.parametrize("name", ALL)
def test_flux_consistency(name):
    c = make_closure(name)
    u = c.limit(c.isotropic(1.0)[None] * np.linspace(1, 2, c.ncomp)[None] ** 0.1)[0][0]
    ev = c.evaluate(u[None])
    for scheme in ("kinetic", "lax-friedrichs"):
        np.testing.assert_allclose(numerical_flux(c, u, u, "x", scheme), ev.fx[0], atol=1e-12)
        np.testing.assert_allclose(numerical_flux(c, u, u, "y", scheme), ev.fy[0], atol=1e-12)


@pytest.mark.parametrize("name", ["m1", "mm1", "mk1"])
def test_flux_vacuum_keeps_upwind_part(name):
    c = make_closure(name)
    uL = c.isotropic(1.0)
    uR = c.isotropic(1e-10 / (4 * np.pi))
    F = numerical_flux(c, uL, uR, "x")
    np.testing.assert_allclose(F, c.evaluate(uL[None]).xp[0], atol=1e-9)


@pytest.mark.parametrize("name", ALL)
def test_flux_isotropic_zero_mass_flux(name):
    c = make_closure(name)
    u = c.isotropic(0.7)
    assert abs(c.mass(numerical_flux(c, u, u, "x")[None])[0]) < 1e-12


def test_flux_rejects_nonrealizable():
    c = make_closure("mk1")
    with pytest.raises(ValueError):
        numerical_flux(c, [1, 2, 0, 0, 0], [1, 0.25, -0.25, 0.25, -0.25], "x")


def test_cfl_examples():
    g = Grid(100, 100)
    assert cfl_dt(g, 0.45) == pytest.approx(0.0045)
    with pytest.raises(ValueError):
        cfl_dt(g, 0.0)
    # the scattering bound takes over once sigma_s * dt * cap exceeds cfl
    assert cfl_dt(g, 0.45, 1.0, 100.0) == pytest.approx(0.0045)
    assert cfl_dt(g, 0.45, 10.0, 100.0) == pytest.approx(0.45 / 1000)


@pytest.mark.parametrize("name", ["p1", "mk1", "mm1"])
def test_periodic_mass_conservation(name):
    c = make_closure(name)
    g = Grid(16, 12)
    s = Solver(c, g, ProblemCoefficients(), periodic())
    st = s.initial_state(smooth_state(c, g))
    m0 = c.mass(st.U).sum()
    for _ in range(5):
        m = c.mass(st.U).sum()
        s.step(st, s.dt_max())
        assert abs(c.mass(st.U).sum() - m) <= 1e-12 * m0
    assert st.max_mass_defect < 1e-12


@pytest.mark.parametrize("order", [1, 2])
def test_mass_defect_with_inflow(order):
    c = make_closure("mk1")
    bc = isotropic_bc(1e-3)
    bc["left"] = SideBC("isotropic", 1e-3, (Beam((0.3, 0.7), 0.0, 0.05, 1.0),))
    s = Solver(c, Grid(12, 12), ProblemCoefficients(), bc, order=order)
    st = s.initial_state(np.tile(c.isotropic(1e-3), (12, 12, 1)))
    s.run(st, 0.2)
    assert st.max_mass_defect < 1e-12
    assert np.all(c.realizable(st.U, 1e-10))


def test_absorption_decay():
    c = make_closure("mk1")
    g = Grid(4, 4)
    s = Solver(c, g, ProblemCoefficients(sigma_a=1.0), periodic())
    st = s.initial_state(np.tile(c.isotropic(1.0), (4, 4, 1)))
    s.run(st, 1.0)
    dt = s.dt_max()
    rho = c.mass(st.U)
    # Heun on y' = -y: local error dt^3/6, global error about t exp(-t) dt^2 / 6
    np.testing.assert_allclose(rho, 4 * np.pi * np.exp(-1.0), rtol=dt * dt)
    np.testing.assert_allclose(rho, rho[0, 0], rtol=1e-14)


@pytest.mark.parametrize("name", ALL)
def test_uniform_isotropic_steady(name):
    c = make_closure(name)
    g = Grid(6, 5)
    U0 = np.tile(c.isotropic(0.3), (6, 5, 1))
    s = Solver(c, g, ProblemCoefficients(), isotropic_bc(0.3))
    dU, rate = s.rhs(U0, {})
    np.testing.assert_allclose(dU, 0, atol=1e-13)
    assert abs(rate) < 1e-13


def test_uniform_isotropic_steady_with_scattering():
    c = make_closure("mk1", "tabulated", table=qm1_tabulate(16))
    U0 = np.tile(c.isotropic(0.3), (5, 5, 1))
    s = Solver(c, Grid(5, 5), ProblemCoefficients(sigma_s=1.0), isotropic_bc(0.3))
    dU, _ = s.rhs(U0, {})
    np.testing.assert_allclose(dU, 0, atol=1e-12)


def test_isotropic_ghosts_are_scaled_basis_integrals():
    c = make_closure("mk1")
    s = Solver(c, Grid(5, 5), ProblemCoefficients(), isotropic_bc(0.25))
    for side in SIDES:
        np.testing.assert_allclose(s.boundary_ghosts()[side], np.tile(0.25 * basis_integral(MIXED1), (5, 1)), atol=1e-14)


def test_beam_ghost_matches_direct_quadrature():
    c = make_closure("mk1")
    beam = Beam((0.4, 0.6), 0.0, 0.05, 100 / (4 * np.pi))
    bc = isotropic_bc(1e-6)
    bc["left"] = SideBC("isotropic", 1e-6, (beam,))
    s = Solver(c, Grid(10, 10), ProblemCoefficients(), bc)
    q = quadrature(Region.FULL, 120, 120)
    want = (beam.psi(q.mu, q.azimuth) * q.weights) @ q.basis(MIXED1)
    got = s.boundary_ghosts()["left"]
    # cells 4 and 5 lie wholly inside the segment, cell 0 wholly outside
    np.testing.assert_allclose(got[4], want, rtol=1e-8)
    np.testing.assert_allclose(got[0], 1e-6 * basis_integral(MIXED1), rtol=1e-12)


def test_apply_bc_periodic_wraps():
    c = make_closure("p1")
    g = Grid(6, 4)
    s = Solver(c, g, ProblemCoefficients(), periodic())
    st = s.initial_state(smooth_state(c, g))
    P = s.apply_bc(st)
    np.testing.assert_array_equal(P[0, 2:-2], st.U[-2])
    np.testing.assert_array_equal(P[2:-2, -1], st.U[:, 1])


def test_step_rejects_large_dt():
    c = make_closure("p1")
    s = Solver(c, Grid(4, 4), ProblemCoefficients(), periodic())
    st = s.initial_state(np.tile(c.isotropic(1.0), (4, 4, 1)))
    with pytest.raises(ValueError):
        s.step(st, 2 * s.dt_max())


def test_qk1_with_scattering_rejected():
    with pytest.raises(ValueError, match="sigma_s"):
        Solver(make_closure("qk1"), Grid(4, 4), ProblemCoefficients(sigma_s=1.0), periodic())


def test_unpaired_periodic_rejected():
    bc = periodic()
    bc["right"] = SideBC("isotropic", 0.0)
    with pytest.raises(ValueError):
        Solver(make_closure("p1"), Grid(4, 4), ProblemCoefficients(), bc)


def test_symmetry_error_and_cuts():
    g = Grid(40, 40, -0.5, 0.5, -0.5, 0.5)
    assert symmetry_error(g, np.full((40, 40), 3.0)) == 0.0
    X, Y = g.centers()
    F = np.exp(-(X ** 2 + Y ** 2) / 0.05)
    assert symmetry_error(g, F) < 0.02
    s, x, y, vals = cut(g, F[..., None], "horizontal")
    s2, _, _, vals2 = cut(g, F[..., None], "diagonal", 40)
    # both cuts sample a radial profile; compare as functions of the radius
    r1 = np.abs(x)
    r2 = np.abs(s2 - np.hypot(0.5, 0.5))
    f2 = np.interp(r1, np.sort(r2), vals2[np.argsort(r2), 0])
    assert np.max(np.abs(f2 - vals[:, 0])) < 0.02


def test_symmetry_error_of_radial_ring():
    # a ring sharper than the 100x100 line-source front: resampling alone stays below 1%
    g = Grid(100, 100, -0.5, 0.5, -0.5, 0.5)
    X, Y = g.centers()
    r = np.hypot(X, Y)
    F = 1.0 + 6.0 * np.exp(-((r - 0.36) / 0.06) ** 2)
    assert symmetry_error(g, F) < 0.01


def test_diagnostics_record():
    c = make_closure("mk1")
    g = Grid(8, 8)
    s = Solver(c, g, ProblemCoefficients(), isotropic_bc(1.0))
    st = s.initial_state(np.tile(c.isotropic(1.0), (8, 8, 1)))
    s.run(st, 0.1)
    d = diagnostics(st, c)
    assert d["mass"] == pytest.approx(4 * np.pi)
    assert d["limiter_activations"] == 0 and d["realizability_violations"] == 0
    assert d["symmetry_error"] < 1e-12


def _p1_fourier(g, v, k):
    X, Y = g.centers()
    f = np.sinc(k[0] * g.dx / (2 * np.pi)) * np.sinc(k[1] * g.dy / (2 * np.pi))
    mode = f * np.exp(1j * (k[0] * X + k[1] * Y))
    return np.array([1.0, 0.0, 0.0]) + np.real(v[None, None, :] * mode[..., None])


@pytest.mark.slow
def test_p1_second_order_convergence():
    # linear P1 system: exact Fourier-mode solution via the matrix exponential
    c = make_closure("p1")
    Ax, Ay = c.mxp + c.mxm, c.myp + c.mym
    k = 2 * np.pi * np.array([1.0, 1.0])
    v0 = np.array([0.1, 0.05, -0.03])
    T = 0.25
    vT = expm(-1j * T * (k[0] * Ax + k[1] * Ay)) @ v0
    errs = []
    for n in (50, 100, 200):
        g = Grid(n, n)
        s = Solver(c, g, ProblemCoefficients(), periodic(), order=2, slope_limiter="mc")
        st = s.initial_state(_p1_fourier(g, v0, k))
        s.run(st, T)
        errs.append(np.abs(st.U - _p1_fourier(g, vT, k)).mean())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8), orders
