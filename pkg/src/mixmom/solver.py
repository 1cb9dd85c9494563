"""Finite-volume solver for the closed moment system on a structured 2D grid.

Time stepping is SSP-RK2 (Heun) with the realizability limiter applied after
each stage.  Spatial fluxes are kinetic (split by the sign of the transport
direction) or Lax-Friedrichs; order 2 uses slope-limited face states with a
first-order fallback wherever a reconstructed face state is not realizable.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .closures import Closure, Evaluation
from .entropy import DualConvergenceError
from .sphere import Region, quadrature

log = logging.getLogger(__name__)

NG = 2
SIDES = ("left", "right", "bottom", "top")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProblemCoefficients:
    sigma_s: float = 0.0
    sigma_a: float = 0.0
    Q: float = 0.0

    def __post_init__(self):
        if min(self.sigma_s, self.sigma_a, self.Q) < 0:
            raise ValueError("coefficients must be non-negative")


@dataclass(frozen=True)
class Beam:
    """Angular Gaussian beam entering through part of one side.

    ``segment`` is the interval of the side coordinate (y on left/right, x on
    bottom/top); the distribution is
    ``amplitude * exp(-(mu^2 + (azimuth - direction)^2) / (2 sigma2))`` with the
    azimuth difference wrapped to ``[-pi, pi)``.
    """

    segment: tuple[float, float]
    direction: float
    sigma2: float
    amplitude: float

    def psi(self, mu, azimuth):
        d = np.mod(np.asarray(azimuth) - self.direction + np.pi, 2.0 * np.pi) - np.pi
        return self.amplitude * np.exp(-(np.asarray(mu) ** 2 + d * d) / (2.0 * self.sigma2))


@dataclass(frozen=True)
class SideBC:
    """Boundary data on one side: ``periodic`` or a constant ``value`` with optional beams."""

    kind: str = "isotropic"  # isotropic | periodic
    value: float = 0.0
    beams: tuple[Beam, ...] = ()

    def __post_init__(self):
        if self.kind not in ("isotropic", "periodic"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per direction")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("empty domain")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self):
        return (self.y_max - self.y_min) / self.ny

    @property
    def xc(self):
        return self.x_min + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def yc(self):
        return self.y_min + (np.arange(self.ny) + 0.5) * self.dy

    def centers(self):
        return np.meshgrid(self.xc, self.yc, indexing="ij")

    def cell_average(self, f, n: int = 4):
        """Gauss-Legendre average of ``f(x, y)`` over every cell (``n`` points per direction)."""
        g, w = np.polynomial.legendre.leggauss(n)
        X, Y = self.centers()
        acc = np.zeros_like(X)
        for a, wa in zip(g, w):
            for b, wb in zip(g, w):
                acc += 0.25 * wa * wb * f(X + 0.5 * a * self.dx, Y + 0.5 * b * self.dy)
        return acc


@dataclass
class GridState:
    grid: Grid
    U: np.ndarray  # (nx, ny, n)
    t: float = 0.0
    steps: int = 0
    warm: dict = field(default_factory=dict)
    limiter_activations: int = 0
    mass_history: list = field(default_factory=list)
    max_mass_defect: float = 0.0


def _sub(ev: Evaluation, a, b) -> Evaluation:
    return Evaluation(ev.xp[a, b], ev.xm[a, b], ev.yp[a, b], ev.ym[a, b], None if ev.aux is None else ev.aux[a, b])


def cfl_dt(grid: Grid, cfl: float, sigma_s: float = 0.0, trace_cap: float | None = None) -> float:
    """Largest stable step: ``cfl * min(dx, dy)``, further bounded by ``cfl / (sigma_s * trace_cap)``."""
    if not 0.0 < cfl <= 1.0:
        raise ValueError("cfl must lie in (0, 1]")
    dt = cfl * min(grid.dx, grid.dy)
    if sigma_s > 0.0 and trace_cap is not None:
        dt = min(dt, cfl / (sigma_s * trace_cap))
    return dt


def _minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _slope(dl, dr, limiter):
    if limiter == "minmod":
        return _minmod(dl, dr)
    if limiter == "mc":
        return _minmod(0.5 * (dl + dr), 2.0 * _minmod(dl, dr))
    if limiter == "none":
        return 0.5 * (dl + dr)
    raise ValueError(f"unknown slope limiter {limiter!r}")


def _flux_from_evaluations(evL: Evaluation, evR: Evaluation, uL, uR, axis, scheme):
    if scheme == "kinetic":
        return (evL.xp + evR.xm) if axis == 0 else (evL.yp + evR.ym)
    fL = evL.fx if axis == 0 else evL.fy
    fR = evR.fx if axis == 0 else evR.fy
    return 0.5 * (fL + fR) - 0.5 * (uR - uL)


def numerical_flux(closure: Closure, uL, uR, axis, scheme: str = "kinetic"):
    """Interface flux between states ``uL`` and ``uR`` (single vectors or stacked arrays).

    ``axis`` is 0/"x" or 1/"y". Kinetic upwinding takes the right-moving part of the
    left ansatz plus the left-moving part of the right one; Lax-Friedrichs uses speed 1.
    """
    axis = {"x": 0, "y": 1}.get(axis, axis)
    if axis not in (0, 1):
        raise ValueError(f"unknown axis {axis!r}")
    if scheme not in ("kinetic", "lax-friedrichs"):
        raise ValueError(f"unknown flux scheme {scheme!r}")
    uL = np.atleast_2d(np.asarray(uL, dtype=float))
    uR = np.atleast_2d(np.asarray(uR, dtype=float))
    for u in (uL, uR):
        if not np.all(closure.realizable(u, 1e-12)):
            raise ValueError("numerical_flux needs realizable states")
    F = _flux_from_evaluations(closure.evaluate(uL), closure.evaluate(uR), uL, uR, axis, scheme)
    return F[0] if F.shape[0] == 1 else F


class Solver:
    """Explicit solver for one closure, grid, coefficient set and boundary conditions."""

    def __init__(self, closure: Closure, grid: Grid, coeffs: ProblemCoefficients, bc: dict,
                 scheme: str = "kinetic", order: int = 1, cfl: float = 0.45, floor: float = 1e-10,
                 limiter_eps: float = 1e-8, slope_limiter: str = "minmod", boundary_quad: int = 80):
        if scheme not in ("kinetic", "lax-friedrichs"):
            raise ValueError(f"unknown flux scheme {scheme!r}")
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if closure.name == "qk1" and coeffs.sigma_s > 0:
            raise ValueError("the qk1 closure has no scattering treatment; sigma_s must be 0")
        if coeffs.sigma_s > 0 and closure.lb_mode == "tabulated" and closure.table is None:
            raise ValueError("tabulated scattering needs a quarter table")
        missing = [s for s in SIDES if s not in bc]
        if missing:
            raise ValueError(f"boundary conditions lacks sides {missing}")
        for a, b in (("left", "right"), ("bottom", "top")):
            if (bc[a].kind == "periodic") != (bc[b].kind == "periodic"):
                raise ValueError(f"periodic boundaries must pair {a} with {b}")
        self.closure = closure
        self.grid = grid
        self.coeffs = coeffs
        self.bc = bc
        self.scheme = scheme
        self.order = order
        self.cfl = cfl
        self.floor = floor
        self.limiter_eps = limiter_eps
        self.slope_limiter = slope_limiter
        self.periodic_x = bc["left"].kind == "periodic"
        self.periodic_y = bc["bottom"].kind == "periodic"
        self.source = closure.isotropic(coeffs.Q) if coeffs.Q > 0 else None
        self._ghosts = self._boundary_moments(boundary_quad)

    # -- boundary data -----------------------------------------------------

    def _side_moments(self, side: SideBC, coords, h, quad):
        n = self.closure.ncomp
        base = self.closure.isotropic(side.value)
        out = np.tile(base, (len(coords), 1))
        for beam in side.beams:
            lo, hi = sorted(beam.segment)
            frac = np.clip((np.minimum(coords + 0.5 * h, hi) - np.maximum(coords - 0.5 * h, lo)) / h, 0.0, 1.0)
            bm = self.closure.moments_at_nodes(beam.psi(quad.mu, quad.azimuth), quad)
            out += frac[:, None] * (bm - base)[None, :]
        return out.reshape(len(coords), n)

    def _boundary_moments(self, nq):
        g = self.grid
        quad = quadrature(Region.FULL, nq, nq)
        ghosts = {}
        for s in SIDES:
            if self.bc[s].kind == "periodic":
                continue
            coords, h = (g.yc, g.dy) if s in ("left", "right") else (g.xc, g.dx)
            ghosts[s] = self._side_moments(self.bc[s], coords, h, quad)
        return ghosts

    def boundary_ghosts(self):
        return dict(self._ghosts)

    def apply_bc(self, state: GridState):
        """Array of ``state.U`` with ghost layers filled from the boundary conditions."""
        return self.pad(state.U)

    def pad(self, U):
        g = self.grid
        n = U.shape[-1]
        P = np.empty((g.nx + 2 * NG, g.ny + 2 * NG, n))
        P[NG:-NG, NG:-NG] = U
        # corners are never read by the five-point stencil; keep them finite
        P[:NG, :NG] = P[:NG, -NG:] = P[-NG:, :NG] = P[-NG:, -NG:] = U[0, 0]
        if self.periodic_x:
            P[:NG, NG:-NG] = U[-NG:]
            P[-NG:, NG:-NG] = U[:NG]
        else:
            P[:NG, NG:-NG] = self._ghosts["left"][None]
            P[-NG:, NG:-NG] = self._ghosts["right"][None]
        if self.periodic_y:
            P[NG:-NG, :NG] = U[:, -NG:]
            P[NG:-NG, -NG:] = U[:, :NG]
        else:
            P[NG:-NG, :NG] = self._ghosts["bottom"][:, None]
            P[NG:-NG, -NG:] = self._ghosts["top"][:, None]
        return P

    # -- spatial operator -------------------------------------------------

    def _face_states(self, P, axis):
        """Left/right states on the faces normal to ``axis`` (arrays over faces x transverse cells)."""
        nx, ny = self.grid.nx, self.grid.ny
        if axis == 0:
            line = P[:, NG:NG + ny]
            periodic = self.periodic_x
            nc = nx
        else:
            line = np.swapaxes(P[NG:NG + nx, :], 0, 1)
            periodic = self.periodic_y
            nc = ny
        # cells NG-1 .. NG+nc along the line take part in the nc+1 faces
        if self.order == 1:
            left = line[NG - 1:NG + nc]
            right = line[NG:NG + nc + 1]
        else:
            dl = line[1:-1] - line[:-2]
            dr = line[2:] - line[1:-1]
            s = _slope(dl, dr, self.slope_limiter)  # slopes for cells 1 .. len-2
            if not periodic:
                s[NG - 2] = 0.0
                s[-1] = 0.0
            c = line[1:-1]
            plus, minus = c + 0.5 * s, c - 0.5 * s
            bad = ~(self.closure.realizable(plus, 0.0) & self.closure.realizable(minus, 0.0)
                    & (plus[..., 0] > 0) & (minus[..., 0] > 0))
            s[bad] = 0.0
            plus, minus = c + 0.5 * s, c - 0.5 * s
            left = plus[NG - 2:NG - 1 + nc]
            right = minus[NG - 1:NG + nc]
        if axis == 1:
            left, right = np.swapaxes(left, 0, 1), np.swapaxes(right, 0, 1)
        return left, right

    def _numerical_flux(self, evL: Evaluation, evR: Evaluation, uL, uR, axis):
        return _flux_from_evaluations(evL, evR, uL, uR, axis, self.scheme)

    def _eval(self, X, warm, key, offset=0):
        try:
            return self.closure.evaluate(X, warm, key)
        except DualConvergenceError as exc:
            shape = X.shape[:-1]
            where = [tuple(int(v) - offset for v in np.unravel_index(i, shape)) for i in list(exc.indices if exc.indices is not None else [])[:5]]
            label = "cells (i, j)" if key in ("padded", "cells") else f"{key} faces"
            raise SolverError(f"closure failed in {label} {where}: {exc}") from exc

    def rhs(self, U, warm):
        """Time derivative of the interior cells and the total mass rate (boundary flux plus sources)."""
        g = self.grid
        P = self.pad(U)
        c = self.closure
        if self.order == 1:
            ev = self._eval(P, warm, "padded", offset=NG)
            xin, yin = slice(NG, NG + g.nx), slice(NG, NG + g.ny)
            xL, xR = slice(NG - 1, NG + g.nx), slice(NG, NG + g.nx + 1)
            yL, yR = slice(NG - 1, NG + g.ny), slice(NG, NG + g.ny + 1)
            Fx = self._numerical_flux(_sub(ev, xL, yin), _sub(ev, xR, yin), P[xL, yin], P[xR, yin], 0)
            Fy = self._numerical_flux(_sub(ev, xin, yL), _sub(ev, xin, yR), P[xin, yL], P[xin, yR], 1)
            ev_cells = _sub(ev, xin, yin)
        else:
            Lx, Rx = self._face_states(P, 0)
            Ly, Ry = self._face_states(P, 1)
            Fx = self._numerical_flux(self._eval(Lx, warm, "xL"), self._eval(Rx, warm, "xR"), Lx, Rx, 0)
            Fy = self._numerical_flux(self._eval(Ly, warm, "yL"), self._eval(Ry, warm, "yR"), Ly, Ry, 1)
            ev_cells = self._eval(U, warm, "cells") if self.coeffs.sigma_s > 0 else None
        dU = -(Fx[1:] - Fx[:-1]) / g.dx - (Fy[:, 1:] - Fy[:, :-1]) / g.dy
        mx = c.mass(Fx)
        my = c.mass(Fy)
        rate = (mx[0].sum() - mx[-1].sum()) * g.dy + (my[:, 0].sum() - my[:, -1].sum()) * g.dx
        cell = g.dx * g.dy
        if self.coeffs.sigma_a > 0:
            dU -= self.coeffs.sigma_a * U
            rate -= self.coeffs.sigma_a * c.mass(U).sum() * cell
        if self.source is not None:
            dU += self.source
            rate += c.mass(self.source) * U.shape[0] * U.shape[1] * cell
        if self.coeffs.sigma_s > 0:
            dU += 0.5 * self.coeffs.sigma_s * c.lb(U, ev_cells)
        return dU, rate

    # -- time stepping -----------------------------------------------------

    def _limit(self, state: GridState, U):
        V, changed = self.closure.limit(U, self.limiter_eps, self.floor)
        state.limiter_activations += int(np.count_nonzero(changed))
        added = float(self.closure.mass(V - U).sum()) * self.grid.dx * self.grid.dy
        return V, added

    def dt_max(self):
        cap = self.closure.trace_cap if self.closure.lb_mode == "tabulated" else None
        return cfl_dt(self.grid, self.cfl, self.coeffs.sigma_s, cap)

    def step(self, state: GridState, dt: float) -> GridState:
        if dt <= 0 or dt > self.dt_max() * (1 + 1e-12):
            raise ValueError(f"dt {dt} outside (0, {self.dt_max()}]")
        cell = self.grid.dx * self.grid.dy
        m0 = float(self.closure.mass(state.U).sum()) * cell
        k0, r0 = self.rhs(state.U, state.warm)
        U1, a1 = self._limit(state, state.U + dt * k0)
        k1, r1 = self.rhs(U1, state.warm)
        U2, a2 = self._limit(state, 0.5 * state.U + 0.5 * (U1 + dt * k1))
        m2 = float(self.closure.mass(U2).sum()) * cell
        expected = m0 + 0.5 * dt * (r0 + r1) + 0.5 * a1 + a2
        defect = abs(m2 - expected) / max(abs(m0), 1e-300)
        state.U = U2
        state.t += dt
        state.steps += 1
        state.max_mass_defect = max(state.max_mass_defect, defect)
        state.mass_history.append((state.t, m2, 0.5 * dt * (r0 + r1), 0.5 * a1 + a2))
        return state

    def initial_state(self, U0) -> GridState:
        U0 = np.asarray(U0, dtype=float)
        if U0.shape != (self.grid.nx, self.grid.ny, self.closure.ncomp):
            raise ValueError(f"initial data has shape {U0.shape}")
        st = GridState(self.grid, U0.copy())
        st.mass_history.append((0.0, float(self.closure.mass(U0).sum()) * self.grid.dx * self.grid.dy, 0.0, 0.0))
        return st

    def run(self, state: GridState, t_final: float, callback=None) -> GridState:
        dtm = self.dt_max()
        t0 = time.perf_counter()
        while state.t < t_final * (1 - 1e-14):
            dt = min(dtm, t_final - state.t)
            self.step(state, dt)
            if callback is not None:
                callback(state)
        log.info("reached t=%.4g in %d steps (%.1fs)", state.t, state.steps, time.perf_counter() - t0)
        return state


# ---------------------------------------------------------------------------
# diagnostics


def bilinear_sample(grid: Grid, F, x, y):
    """Bilinear interpolation of cell-centred values ``F (nx, ny)``; points are clamped to the centre hull."""
    fx = np.clip((np.asarray(x) - grid.x_min) / grid.dx - 0.5, 0.0, grid.nx - 1)
    fy = np.clip((np.asarray(y) - grid.y_min) / grid.dy - 0.5, 0.0, grid.ny - 1)
    i = np.minimum(np.floor(fx).astype(int), max(grid.nx - 2, 0))
    j = np.minimum(np.floor(fy).astype(int), max(grid.ny - 2, 0))
    tx, ty = fx - i, fy - j
    i1 = np.minimum(i + 1, grid.nx - 1)
    j1 = np.minimum(j + 1, grid.ny - 1)
    # difference form reproduces constant fields exactly
    f00, f10, f01, f11 = F[i, j], F[i1, j], F[i, j1], F[i1, j1]
    return f00 + tx * (f10 - f00) + ty * (f01 - f00) + tx * ty * (f11 - f10 - f01 + f00)


def symmetry_error(grid: Grid, F, rotations: int = 16) -> float:
    """Max over rotations about the centre of ``max |F_rot - F| / max F`` inside the inscribed circle."""
    F = np.asarray(F, dtype=float)
    X, Y = grid.centers()
    cx, cy = 0.5 * (grid.x_min + grid.x_max), 0.5 * (grid.y_min + grid.y_max)
    R = 0.5 * min(grid.x_max - grid.x_min, grid.y_max - grid.y_min) - 0.5 * max(grid.dx, grid.dy)
    inside = np.hypot(X - cx, Y - cy) <= R
    scale = np.max(np.abs(F))
    if scale == 0.0:
        return 0.0
    err = 0.0
    for k in range(1, rotations):
        a = 2.0 * np.pi * k / rotations
        xr = cx + np.cos(a) * (X - cx) - np.sin(a) * (Y - cy)
        yr = cy + np.sin(a) * (X - cx) + np.cos(a) * (Y - cy)
        Fr = bilinear_sample(grid, F, xr[inside], yr[inside])
        err = max(err, float(np.max(np.abs(Fr - F[inside]))))
    return err / scale


def cut(grid: Grid, U, which: str = "horizontal", n: int | None = None):
    """Samples along the horizontal line through the centre or the diagonal ``x - x_min = y - y_min``.

    Returns ``(s, x, y, values)`` with arc length ``s`` measured from the start.
    """
    cy = 0.5 * (grid.y_min + grid.y_max)
    if which == "horizontal":
        n = n or grid.nx
        x = grid.xc if n == grid.nx else np.linspace(grid.x_min, grid.x_max, n)
        y = np.full_like(x, cy)
        s = x - grid.x_min
    elif which == "diagonal":
        n = n or min(grid.nx, grid.ny)
        t = (np.arange(n) + 0.5) / n
        x = grid.x_min + t * (grid.x_max - grid.x_min)
        y = grid.y_min + t * (grid.y_max - grid.y_min)
        s = np.hypot(x - grid.x_min, y - grid.y_min)
    else:
        raise ValueError(f"unknown cut {which!r}")
    U = np.asarray(U)
    vals = np.stack([bilinear_sample(grid, U[..., k], x, y) for k in range(U.shape[-1])], axis=-1)
    return s, x, y, vals


def diagnostics(state: GridState, closure: Closure) -> dict:
    g = state.grid
    rho = closure.mass(state.U)
    mass = float(rho.sum()) * g.dx * g.dy
    return {
        "t": state.t,
        "steps": state.steps,
        "mass": mass,
        "min_u00": float(rho.min()),
        "max_u00": float(rho.max()),
        "limiter_activations": state.limiter_activations,
        "symmetry_error": symmetry_error(g, rho),
        "realizability_violations": int(np.count_nonzero(~closure.realizable(state.U, 1e-10))),
        "max_mass_defect": state.max_mass_defect,
    }
