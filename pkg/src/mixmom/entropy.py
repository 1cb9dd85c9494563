"""Maxwell-Boltzmann minimum-entropy closures solved through their convex dual.

The dual objective is ``<exp(b.alpha)> - u.alpha``.  Solves are batched over
many moment vectors: each Newton iteration evaluates the exponential ansatz on
all quadrature nodes for every active vector at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .moments import MomentVec, realizable_mask, regularize_toward_isotropic
from .sphere import (
    BasisKind,
    QuadratureRule,
    Region,
    gram_matrix,
    quadrature,
    quarter1,
)

log = logging.getLogger(__name__)

EXP_LIMIT = 700.0
REGULARIZE_NORM = 0.98


class DualDomainError(ArithmeticError):
    """Multipliers so large that the exponential ansatz overflows."""


class DualConvergenceError(RuntimeError):
    def __init__(self, msg, indices=None):
        super().__init__(msg)
        self.indices = indices


@dataclass(frozen=True)
class MultiplierVec:
    kind: BasisKind
    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float).reshape(-1)
        if a.size != self.kind.size:
            raise ValueError(f"{self.kind} needs {self.kind.size} multipliers")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)


@dataclass
class DualInfo:
    iterations: np.ndarray
    blend: np.ndarray
    grad_norm: np.ndarray
    weights: np.ndarray | None = None  # quadrature-weighted ansatz at the nodes, when requested

    @property
    def regularized(self) -> int:
        return int(np.count_nonzero(self.blend > 0))


def default_quadrature(kind: BasisKind, n_mu: int = 40, n_phi: int = 40, hemisphere: bool = True) -> QuadratureRule:
    region = kind.quadrant if kind.name == "quarter1" else Region.FULL
    return quadrature(region, n_mu, n_phi, hemisphere=hemisphere)


def _check_kind(kind: BasisKind, quad: QuadratureRule):
    if kind.name == "quarter1":
        if quad.region != kind.quadrant:
            raise ValueError(f"quadrature region {quad.region} does not match {kind}")
    elif quad.region != Region.FULL:
        raise ValueError(f"{kind} needs a full-sphere quadrature")


def _exponent(A, B):
    z = A @ B.T
    if not np.all(np.isfinite(z)) or np.max(z, initial=-np.inf) > EXP_LIMIT:
        raise DualDomainError("multipliers outside the exponential range")
    return z


def dual_objective(alpha: MultiplierVec, u: MomentVec, quad: QuadratureRule):
    """Value, gradient and Hessian of the dual at ``alpha``."""
    if alpha.kind != u.kind:
        raise ValueError("multiplier and moment kinds differ")
    _check_kind(u.kind, quad)
    B = quad.basis(u.kind)
    psi = np.exp(_exponent(alpha.alpha, B))
    pw = psi * quad.weights
    value = pw.sum() - u.values @ alpha.alpha
    grad = pw @ B - u.values
    hess = (B * pw[:, None]).T @ B
    return float(value), grad, hess


class _Batch:
    """Precomputed node data for batched dual evaluations."""

    def __init__(self, kind: BasisKind, quad: QuadratureRule):
        _check_kind(kind, quad)
        self.kind = kind
        self.quad = quad
        self.B = np.ascontiguousarray(quad.basis(kind))
        self.w = np.asarray(quad.weights)
        n = kind.size
        self.BB = (self.B[:, :, None] * self.B[:, None, :]).reshape(-1, n * n)
        ox, oy = np.asarray(quad.ox)[:, None], np.asarray(quad.oy)[:, None]
        self.Bx, self.By = ox * self.B, oy * self.B
        self.Bxp, self.Bxm = np.maximum(ox, 0.0) * self.B, np.minimum(ox, 0.0) * self.B
        self.Byp, self.Bym = np.maximum(oy, 0.0) * self.B, np.minimum(oy, 0.0) * self.B

    def psi(self, A):
        return np.exp(_exponent(A, self.B))

    def value(self, A, U):
        z = A @ self.B.T
        with np.errstate(over="ignore", invalid="ignore"):
            v = np.exp(np.minimum(z, EXP_LIMIT)) @ self.w - np.einsum("ij,ij->i", U, A)
        bad = ~np.isfinite(v) | (np.max(z, axis=1) > EXP_LIMIT)
        v[bad] = np.inf
        return v

    def weighted_value(self, A, U):
        """Weighted ansatz values at the nodes and the dual value (``inf`` outside the range)."""
        z = A @ self.B.T
        bad = ~(np.max(z, axis=1) <= EXP_LIMIT)
        if np.any(bad):
            z[bad] = 0.0
        pw = np.exp(z, out=z)
        pw *= self.w
        v = pw.sum(axis=1) - np.einsum("ij,ij->i", U, A)
        v[bad] = np.inf
        return pw, v

    def grad_hess(self, A, U):
        pw = self.psi(A) * self.w
        g = pw @ self.B - U
        n = self.kind.size
        H = (pw @ self.BB).reshape(-1, n, n)
        return g, H


def isotropic_multipliers(kind: BasisKind, u00=1.0) -> np.ndarray:
    """Multipliers of the constant ansatz with density ``u00``."""
    area = np.pi if kind.name == "quarter1" else 4.0 * np.pi
    a = np.zeros(np.shape(u00) + (kind.size,))
    a[..., 0] = np.log(np.asarray(u00, dtype=float) / area)
    return a


def _newton(batch: _Batch, U, A, tol, max_iter, keep_weights=False):
    m, n = U.shape
    iters = np.zeros(m, dtype=int)
    gnorm = np.full(m, np.inf)
    active = np.arange(m)
    # weighted ansatz values at the current iterate; an accepted trial supplies the next ones
    pw = batch.psi(A) * batch.w
    PW = np.empty_like(pw) if keep_weights else None
    for it in range(max_iter + 1):
        if active.size == 0:
            break
        u0 = U[active]
        a0 = A[active]
        g = pw @ batch.B - u0
        gn = np.linalg.norm(g, axis=1)
        gnorm[active] = gn
        keep = gn > tol
        if keep_weights:
            PW[active[~keep]] = pw[~keep]
        if not np.any(keep) or it == max_iter:
            if keep_weights:
                PW[active[keep]] = pw[keep]
            break
        active, g, pw, u0, a0 = active[keep], g[keep], pw[keep], u0[keep], a0[keep]
        H = (pw @ batch.BB).reshape(-1, n, n)
        iters[active] += 1
        try:
            d = -np.linalg.solve(H, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            d = -np.stack([np.linalg.lstsq(h, gg, rcond=None)[0] for h, gg in zip(H, g)])
        f0 = pw.sum(axis=1) - np.einsum("ij,ij->i", u0, a0)
        slope = np.einsum("ij,ij->i", g, d)
        # near the solution the decrease is below roundoff in f; take the full Newton step
        check = -slope > 1e-13 * np.maximum(1.0, np.abs(f0))
        t = np.ones(active.size)
        new_pw = np.empty_like(pw)
        pending = np.arange(active.size)
        for _ in range(40):
            trial = a0[pending] + t[pending, None] * d[pending]
            pt, ft = batch.weighted_value(trial, u0[pending])
            new_pw[pending] = pt
            ok = ~check[pending] | (ft <= f0[pending] + 1e-4 * t[pending] * slope[pending])
            pending = pending[~ok]
            if pending.size == 0:
                break
            t[pending] *= 0.5
        if pending.size:
            # line search exhausted: keep the last (tiny) step but recompute finite weights
            new_pw[pending] = batch.psi(a0[pending] + t[pending, None] * d[pending]) * batch.w
        A[active] = a0 + t[:, None] * d
        pw = new_pw
    return A, iters, gnorm, PW


def solve_dual_batch(kind: BasisKind, U, quad: QuadratureRule | None = None, alpha0=None,
                     tol: float = 1e-9, max_iter: int = 200, regularize: bool = True,
                     raise_on_failure: bool = True, weights: bool = False):
    """Solve the dual for every row of ``U`` (shape ``(m, kind.size)``).

    Rows are normalised by their density before solving; the multipliers are
    shifted back by ``log(u00)`` afterwards.  ``alpha0`` gives warm starts in
    the same (unnormalised) convention.  Returns ``(alpha, DualInfo)``.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if quad is None:
        quad = default_quadrature(kind)
    if not np.all(realizable_mask(kind, U, 1e-12)) or np.any(U[:, 0] <= 0.0):
        bad = np.flatnonzero(~realizable_mask(kind, U, 1e-12) | (U[:, 0] <= 0.0))
        raise ValueError(f"moments not realizable at rows {bad[:10].tolist()}")
    u00 = U[:, 0].copy()
    Un = U / u00[:, None]
    blend = np.zeros(len(U))
    if regularize:
        Un, blend = regularize_toward_isotropic(kind, Un, REGULARIZE_NORM)
    if alpha0 is None:
        A = isotropic_multipliers(kind, np.ones(len(U)))
    else:
        A = np.array(np.atleast_2d(alpha0), dtype=float, copy=True)
        A[:, 0] -= np.log(u00)
        z = A @ default_batch(kind, quad).B.T
        reset = ~np.all(np.isfinite(A), axis=1) | (np.max(z, axis=1) > EXP_LIMIT)
        A[reset] = isotropic_multipliers(kind, np.ones(int(reset.sum())))
    batch = default_batch(kind, quad)
    A, iters, gnorm, PW = _newton(batch, Un, A, tol, max_iter, weights)
    failed = ~(gnorm <= tol)
    if np.any(failed) and alpha0 is not None:
        # a poor warm start can stall; retry those rows from the isotropic guess
        idx = np.flatnonzero(failed)
        A2 = isotropic_multipliers(kind, np.ones(idx.size))
        A2, it2, g2, PW2 = _newton(batch, Un[idx], A2, tol, max_iter, weights)
        A[idx], iters[idx], gnorm[idx] = A2, iters[idx] + it2, g2
        if weights:
            PW[idx] = PW2
        failed = ~(gnorm <= tol)
    if np.any(failed) and raise_on_failure:
        idx = np.flatnonzero(failed)
        raise DualConvergenceError(
            f"dual solve did not converge for {idx.size} vectors (first rows {idx[:10].tolist()})", idx
        )
    A[:, 0] += np.log(u00)
    if weights:
        PW *= u00[:, None]
    return A, DualInfo(iters, blend, gnorm, PW)


_BATCH_CACHE: dict = {}


def default_batch(kind: BasisKind, quad: QuadratureRule) -> _Batch:
    key = (kind, id(quad))
    b = _BATCH_CACHE.get(key)
    if b is None or b.quad is not quad:
        b = _Batch(kind, quad)
        _BATCH_CACHE[key] = b
    return b


def solve_dual(u: MomentVec, alpha0: MultiplierVec | None = None, tol: float = 1e-9,
               max_iter: int = 200, quad: QuadratureRule | None = None) -> MultiplierVec:
    """Newton solve of the dual for one moment vector."""
    a0 = None if alpha0 is None else alpha0.alpha[None, :]
    A, _ = solve_dual_batch(u.kind, u.values[None, :], quad, a0, tol, max_iter)
    return MultiplierVec(u.kind, A[0])


def ansatz_moments(alpha: MultiplierVec, quad: QuadratureRule | None = None) -> np.ndarray:
    """``<b exp(b.alpha)>``."""
    quad = quad or default_quadrature(alpha.kind)
    B = quad.basis(alpha.kind)
    return (np.exp(_exponent(alpha.alpha, B)) * quad.weights) @ B


def flux_arrays(kind: BasisKind, A, quad: QuadratureRule, halves: bool = False, weights=None):
    """Fluxes ``<omega b psi>`` for batched multipliers ``A``.

    With ``halves`` the x- and y-fluxes are split by the sign of the transport
    direction and returned as ``(Fx_pos, Fx_neg, Fy_pos, Fy_neg)``.  ``weights``
    may carry the quadrature-weighted ansatz values already computed for ``A``.
    """
    batch = default_batch(kind, quad)
    pw = batch.psi(np.atleast_2d(A)) * batch.w if weights is None else weights
    if not halves:
        return pw @ batch.Bx, pw @ batch.By
    return pw @ batch.Bxp, pw @ batch.Bxm, pw @ batch.Byp, pw @ batch.Bym


def closure_flux_entropy(alpha: MultiplierVec, quad: QuadratureRule | None = None):
    quad = quad or default_quadrature(alpha.kind)
    _check_kind(alpha.kind, quad)
    fx, fy = flux_arrays(alpha.kind, alpha.alpha[None, :], quad)
    return fx[0], fy[0]


@dataclass(frozen=True)
class LinearAnsatz:
    """Coefficients ``c`` of the linear ansatz ``psi = b.c``; may be negative somewhere."""

    kind: BasisKind
    coeffs: np.ndarray

    def __call__(self, ox, oy, qidx):
        from .sphere import basis_values

        return basis_values(self.kind, ox, oy, qidx) @ self.coeffs


def linear_closure(u: MomentVec) -> LinearAnsatz:
    return LinearAnsatz(u.kind, np.linalg.solve(gram_matrix(u.kind), u.values))


# ---------------------------------------------------------------------------
# quarter-moment table


TABLE_VERSION = "qm1-table v1"
TABLE_COLUMNS = ("phi10", "phi01", "u20", "u11", "u02", "trace0", "trace90", "alpha0", "alpha1", "alpha2", "clamped")
CLAMP_NORM = 0.98
CLAMP_MIN = 0.02
BOUNDARY_FLAG_NORM = 0.995
ISO_QUARTER = np.array([0.5, 0.5])
_LOG_COLUMNS = ("trace0", "trace90")


def _inside(V):
    return (np.hypot(V[..., 0], V[..., 1]) <= CLAMP_NORM) & (np.min(V, axis=-1) >= CLAMP_MIN)


def clamp_quarter_phi(phi):
    """Blend PP-frame normalised moments toward (1/2, 1/2) into the tabulated region.

    The region is ``|phi| <= 0.98`` with both components at least 0.02.  Returns
    ``(clamped, r)`` where ``r`` is the blend fraction (0 for points already inside).
    """
    P = np.asarray(phi, dtype=float)
    need = ~_inside(P)
    r = np.zeros(P.shape[:-1])
    if np.any(need):
        lo = np.zeros(P.shape[:-1])
        hi = np.ones(P.shape[:-1])
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            ok = _inside((1.0 - mid[..., None]) * P + mid[..., None] * ISO_QUARTER)
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        r = np.where(need, hi, 0.0)
    return (1.0 - r[..., None]) * P + r[..., None] * ISO_QUARTER, r


def ring_points(m: int) -> np.ndarray:
    """``m`` points on the boundary of the tabulated region at uniform angles about (1/2, 1/2)."""
    ang = 2.0 * np.pi * np.arange(m) / m
    far = ISO_QUARTER + 2.0 * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    return clamp_quarter_phi(far)[0]


def _edge_traces(A, n_theta: int = 64):
    """Integrals over the polar angle of the PP ansatz on its two straight edges.

    ``trace0`` is taken on the edge where ``omega_y = 0`` and ``trace90`` where
    ``omega_x = 0``; the integrals run over ``theta`` in ``[0, pi]``.
    """
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = 0.25 * np.pi * (x + 1.0)  # half range, the integrand is symmetric
    wt = 0.5 * np.pi * w
    s = np.sin(theta)
    t0 = np.exp(np.minimum(A[:, :1] + A[:, 1:2] * s, EXP_LIMIT)) @ wt
    t90 = np.exp(np.minimum(A[:, :1] + A[:, 2:3] * s, EXP_LIMIT)) @ wt
    return t0, t90


@dataclass(frozen=True)
class QM1Table:
    """Tabulated PP-quadrant entropy closure.

    ``data`` is a uniform ``(res+1)^2`` grid over ``[0,1]^2`` indexed ``[i10, i01]``;
    nodes outside the tabulated region store the solution at their clamped
    position.  ``ring`` holds exact solutions on the region boundary at uniform
    angles about (1/2, 1/2) and serves clamped queries.
    """

    resolution: int
    data: np.ndarray
    ring: np.ndarray
    n_mu: int = 40
    n_phi: int = 40
    tol: float = 1e-9

    def column(self, name):
        return self.data[..., TABLE_COLUMNS.index(name)]

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.resolution + 1)

    def save(self, path):
        path = Path(path)
        header = [
            f"# {TABLE_VERSION}",
            f"# resolution={self.resolution}",
            f"# ring={len(self.ring)}",
            f"# n_mu={self.n_mu}",
            f"# n_phi={self.n_phi}",
            f"# tol={self.tol!r}",
            "# columns=" + ",".join(TABLE_COLUMNS),
        ]
        flat = np.concatenate([self.data.reshape(-1, len(TABLE_COLUMNS)), self.ring])
        with path.open("w") as fh:
            fh.write("\n".join(header) + "\n")
            np.savetxt(fh, flat, fmt="%.17g")

    @classmethod
    def load(cls, path) -> "QM1Table":
        path = Path(path)
        meta = {}
        with path.open() as fh:
            first = fh.readline().strip()
            if first != f"# {TABLE_VERSION}":
                raise ValueError(f"{path}: not a {TABLE_VERSION} file")
            for line in fh:
                if not line.startswith("#"):
                    break
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
        try:
            res, m = int(meta["resolution"]), int(meta["ring"])
            n_mu, n_phi, tol = int(meta["n_mu"]), int(meta["n_phi"]), float(meta["tol"])
        except KeyError as exc:
            raise ValueError(f"{path}: header lacks {exc}") from None
        if meta.get("columns") != ",".join(TABLE_COLUMNS):
            raise ValueError(f"{path}: unexpected columns {meta.get('columns')}")
        flat = np.loadtxt(path, comments="#", ndmin=2)
        n = (res + 1) ** 2
        if flat.shape != (n + m, len(TABLE_COLUMNS)):
            raise ValueError(f"{path}: table shape {flat.shape} does not match the header")
        return cls(res, flat[:n].reshape(res + 1, res + 1, -1), flat[n:], n_mu, n_phi, tol)


def _solve_quarter_points(points, quad, tol, chunk):
    """Dual multipliers for PP points, solved outward from the isotropic point with warm starts."""
    kind = quarter1(Region.PP)
    order = np.argsort(np.hypot(*(points - ISO_QUARTER).T))
    U = np.concatenate([np.ones((len(points), 1)), points], axis=1)
    A = np.zeros((len(points), 3))
    prev = None
    for start in range(0, len(order), chunk):
        idx = order[start:start + chunk]
        a0 = None
        if prev is not None:
            src_idx, src_phi = prev
            d = np.linalg.norm(points[idx, None, :] - src_phi[None, :, :], axis=-1)
            a0 = A[src_idx[np.argmin(d, axis=1)]]
        A[idx], _ = solve_dual_batch(kind, U[idx], quad, a0, tol=tol, regularize=False)
        done = order[:start + chunk]
        sel = done[:: max(1, done.size // 512)]
        prev = (sel, points[sel])
    return A


def _rows(points, A, quad, flag):
    pw = default_batch(quarter1(Region.PP), quad).psi(A) * quad.weights
    ox, oy = np.asarray(quad.ox), np.asarray(quad.oy)
    t0, t90 = _edge_traces(A)
    return np.column_stack([points, pw @ (ox * ox), pw @ (ox * oy), pw @ (oy * oy), t0, t90, A, flag])


def qm1_tabulate(resolution: int = 128, quad: QuadratureRule | None = None, tol: float = 1e-9,
                 chunk: int = 2048, ring_size: int | None = None) -> QM1Table:
    """Solve the PP quarter dual on every grid node (at its clamped position) and on the boundary ring."""
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    quad = quad or quadrature(Region.PP, 40, 40, hemisphere=True)
    g = np.linspace(0.0, 1.0, resolution + 1)
    P10, P01 = np.meshgrid(g, g, indexing="ij")
    nodes = np.stack([P10.ravel(), P01.ravel()], axis=-1)
    clamped, r = clamp_quarter_phi(nodes)
    ring = ring_points(ring_size or 16 * resolution)
    pts = np.concatenate([clamped, ring])
    A = _solve_quarter_points(pts, quad, tol, chunk)
    n = len(nodes)
    grid_rows = _rows(clamped, A[:n], quad, (r > 0).astype(float))
    grid_rows[:, :2] = nodes
    ring_rows = _rows(ring, A[n:], quad, np.ones(len(ring)))
    nq = int(round(np.sqrt(len(quad) / len(quad.region.quadrants))))
    return QM1Table(resolution, grid_rows.reshape(resolution + 1, resolution + 1, -1), ring_rows, nq, nq, tol)


@dataclass(frozen=True)
class QM1Lookup:
    """Interpolated quantities for one or more queries, scaled by the density."""

    tensor: np.ndarray  # (..., 2, 2)
    trace0: np.ndarray
    trace90: np.ndarray
    near_boundary: np.ndarray


def _values(table_cols, names, getter):
    out = []
    for name in names:
        v = getter(table_cols(name), name in _LOG_COLUMNS)
        out.append(v)
    return out


def _bilinear(table: QM1Table, P, names):
    res = table.resolution
    s = np.clip(P * res, 0.0, res)
    i = np.minimum(np.floor(s).astype(int), res - 1)
    t = s - i
    i0, j0 = i[..., 0], i[..., 1]
    tx, ty = t[..., 0], t[..., 1]

    def interp(c, logscale):
        c = np.log(c) if logscale else c
        v = ((1 - tx) * (1 - ty) * c[i0, j0] + tx * (1 - ty) * c[i0 + 1, j0]
             + (1 - tx) * ty * c[i0, j0 + 1] + tx * ty * c[i0 + 1, j0 + 1])
        return np.exp(v) if logscale else v

    return _values(table.column, names, interp)


def _ring_interp(table: QM1Table, P, names):
    m = len(table.ring)
    d = P - ISO_QUARTER
    s = np.mod(np.arctan2(d[..., 1], d[..., 0]), 2.0 * np.pi) * m / (2.0 * np.pi)
    k = np.floor(s).astype(int) % m
    t = s - np.floor(s)
    k1 = (k + 1) % m

    def interp(c, logscale):
        c = np.log(c) if logscale else c
        v = (1 - t) * c[k] + t * c[k1]
        return np.exp(v) if logscale else v

    return _values(lambda name: table.ring[:, TABLE_COLUMNS.index(name)], names, interp)


def qm1_lookup_arrays(table: QM1Table, P, trace_cap: float | None = None):
    """Vectorised lookup for PP-frame normalised moments ``P[..., 2]``.

    Returns ``(u20, u11, u02, trace0, trace90, near_boundary)`` for density one.
    Traces are interpolated logarithmically.  Queries outside the tabulated
    region are clamped onto its boundary and read from the ring; their traces are
    then scaled by the ratio of clamped to actual transverse moment, which
    reproduces the divergence of the edge density as a component vanishes.
    """
    P = np.asarray(P, dtype=float)
    Pc, r = clamp_quarter_phi(P)
    names = ("u20", "u11", "u02", "trace0", "trace90")
    clamped = r > 0
    vals = _bilinear(table, Pc, names)
    if np.any(clamped):
        ring_vals = _ring_interp(table, Pc, names)
        vals = [np.where(clamped, b, a) for a, b in zip(vals, ring_vals)]
    u20, u11, u02, t0, t90 = vals
    with np.errstate(divide="ignore", invalid="ignore"):
        s0 = np.where(clamped, Pc[..., 1] / P[..., 1], 1.0)
        s90 = np.where(clamped, Pc[..., 0] / P[..., 0], 1.0)
    t0 = np.where(np.isfinite(s0), t0 * np.maximum(s0, 1.0), np.inf)
    t90 = np.where(np.isfinite(s90), t90 * np.maximum(s90, 1.0), np.inf)
    if trace_cap is not None:
        t0 = np.minimum(t0, trace_cap)
        t90 = np.minimum(t90, trace_cap)
    near = clamped | (np.hypot(P[..., 0], P[..., 1]) > BOUNDARY_FLAG_NORM)
    return u20, u11, u02, t0, t90, near


def qm1_lookup(table: QM1Table, phi, q: Region | str = Region.PP, u00: float = 1.0,
               trace_cap: float | None = None) -> QM1Lookup:
    """Second-moment tensor and edge traces for normalised quarter moments in quadrant ``q``."""
    from .sphere import region_from_name

    q = region_from_name(q)
    if not q.is_quadrant:
        raise ValueError(f"{q} is not a quadrant")
    phi = np.asarray(phi, dtype=float)
    sx, sy = q.signs
    P = np.stack([sx * phi[..., 0], sy * phi[..., 1]], axis=-1)
    if np.any(P < -1e-12) or np.any(np.hypot(P[..., 0], P[..., 1]) > 1.0 + 1e-12):
        raise ValueError(f"phi {phi} is not in the closed quadrant {q.value} and unit disk")
    P = np.clip(P, 0.0, None)
    u20, u11, u02, t0, t90, near = qm1_lookup_arrays(table, P, trace_cap)
    T = np.stack([np.stack([u20, sx * sy * u11], -1), np.stack([sx * sy * u11, u02], -1)], -2)
    return QM1Lookup(u00 * T, u00 * t0, u00 * t90, near)


def qm1_eigen_deviation(table: QM1Table, phi) -> float:
    """Smallest angle in degrees between ``phi`` and an eigenvector of the tabulated tensor."""
    res = qm1_lookup(table, phi)
    _, vecs = np.linalg.eigh(res.tensor)
    p = np.asarray(phi, dtype=float)
    p = p / np.linalg.norm(p)
    cosines = np.abs(vecs.T @ p)
    return float(np.degrees(np.arccos(np.clip(cosines.max(), -1.0, 1.0))))


_TABLE_CACHE: dict = {}


def cached_table(resolution: int = 64, path: str | Path | None = None) -> QM1Table:
    """Load ``path`` if it exists, else tabulate (and save to ``path`` when given)."""
    key = (resolution, str(path) if path else None)
    if key in _TABLE_CACHE:
        return _TABLE_CACHE[key]
    if path is not None and Path(path).exists():
        table = QM1Table.load(path)
        if table.resolution != resolution:
            log.warning("table %s has resolution %d, requested %d", path, table.resolution, resolution)
    else:
        log.info("tabulating quarter closure at resolution %d", resolution)
        table = qm1_tabulate(resolution)
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            table.save(path)
    _TABLE_CACHE[key] = table
    return table


__all__ = [
    "DualConvergenceError",
    "DualDomainError",
    "LinearAnsatz",
    "MultiplierVec",
    "QM1Table",
    "closure_flux_entropy",
    "dual_objective",
    "linear_closure",
    "qm1_eigen_deviation",
    "qm1_lookup",
    "qm1_tabulate",
    "solve_dual",
    "solve_dual_batch",
]

