"""Closure adapters used by the finite-volume solver.

Each adapter maps cell moment arrays ``U (..., n)`` to the split fluxes
``<max(omega_x, 0) b psi>``, ``<min(omega_x, 0) b psi>`` (and the y analogues)
plus the Laplace-Beltrami moments.  Entropy adapters keep warm-start
multipliers keyed by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import collision, entropy, kershaw
from .moments import limit_array, realizable_mask
from .sphere import (
    FULL1,
    MIXED1,
    QUADRANTS,
    Region,
    basis_integral,
    basis_values,
    gram_matrix,
    quadrature,
    quarter1,
)

CLOSURES = ("p1", "m1", "mm1", "mk1", "qk1")
LB_MODES = {"p1": ("exact",), "m1": ("exact",), "mm1": ("ansatz", "polynomial", "tabulated"),
            "mk1": ("tabulated", "polynomial"), "qk1": ("none",)}


@dataclass
class Evaluation:
    xp: np.ndarray
    xm: np.ndarray
    yp: np.ndarray
    ym: np.ndarray
    aux: object = None

    @property
    def fx(self):
        return self.xp + self.xm

    @property
    def fy(self):
        return self.yp + self.ym


class Closure:
    name = ""
    ncomp = 0
    basis = ""

    def __init__(self, lb: str | None = None, trace_cap: float = collision.DEFAULT_TRACE_CAP, table=None):
        modes = LB_MODES[self.name]
        self.lb_mode = lb or modes[0]
        if self.lb_mode not in modes:
            raise ValueError(f"closure {self.name} supports lb in {modes}, got {lb!r}")
        self.trace_cap = trace_cap
        self.table = table
        self.capped = 0

    @property
    def labels(self):
        return self.kind.labels

    def realizable(self, U, slack=0.0):
        return realizable_mask(self.kind, U, slack)

    def limit(self, U, eps=1e-8, floor=1e-10):
        return limit_array(self.kind, U, eps, floor)

    def mass(self, U):
        return U[..., 0]

    def moments_at_nodes(self, psi, quad):
        """Moments of node samples ``psi (..., K)`` of a distribution on a full-sphere rule."""
        B = basis_values(self.kind, quad.ox, quad.oy, quad.quadrant)
        return (np.asarray(psi) * quad.weights) @ B

    def isotropic(self, value):
        """Moments of the constant distribution ``psi = value``."""
        return np.asarray(value, dtype=float)[..., None] * basis_integral(self.kind)

    def evaluate(self, U, warm=None, key=None) -> Evaluation:
        raise NotImplementedError

    def lb(self, U, ev: Evaluation):
        raise NotImplementedError


class P1Closure(Closure):
    """Linear ansatz in the full first-order basis."""

    name, ncomp, basis = "p1", 3, "full1"
    kind = FULL1

    def __init__(self, **kw):
        super().__init__(**kw)
        q = quadrature(Region.FULL, 40, 40, hemisphere=True)
        B = q.basis(FULL1)
        Gi = np.linalg.inv(gram_matrix(FULL1))
        ox, oy = np.asarray(q.ox), np.asarray(q.oy)

        def mat(f):
            return (B.T * (q.weights * f)) @ B @ Gi

        self.mxp, self.mxm = mat(np.maximum(ox, 0)), mat(np.minimum(ox, 0))
        self.myp, self.mym = mat(np.maximum(oy, 0)), mat(np.minimum(oy, 0))

    def evaluate(self, U, warm=None, key=None):
        return Evaluation(U @ self.mxp.T, U @ self.mxm.T, U @ self.myp.T, U @ self.mym.T)

    def lb(self, U, ev):
        return collision.lb_full1(U)


class _EntropyClosure(Closure):
    def __init__(self, n_mu=16, n_phi=16, tol=1e-9, max_iter=200, **kw):
        super().__init__(**kw)
        self.quad = quadrature(Region.FULL, n_mu, n_phi, hemisphere=True)
        self.tol = tol
        self.max_iter = max_iter
        self.regularized = 0

    def evaluate(self, U, warm=None, key=None):
        shape = U.shape[:-1]
        flat = U.reshape(-1, self.ncomp)
        a0 = None
        if warm is not None and key in warm and warm[key].shape == flat.shape:
            a0 = warm[key]
        A, info = entropy.solve_dual_batch(self.kind, flat, self.quad, a0, self.tol, self.max_iter, weights=True)
        self.regularized += info.regularized
        if warm is not None:
            warm[key] = A
        xp, xm, yp, ym = entropy.flux_arrays(self.kind, A, self.quad, halves=True, weights=info.weights)
        r = lambda F: F.reshape(shape + (self.ncomp,))  # noqa: E731
        return Evaluation(r(xp), r(xm), r(yp), r(ym), A.reshape(shape + (self.ncomp,)))


class M1Closure(_EntropyClosure):
    name, ncomp, basis = "m1", 3, "full1"
    kind = FULL1

    def lb(self, U, ev):
        return collision.lb_full1(U)


class MM1Closure(_EntropyClosure):
    name, ncomp, basis = "mm1", 5, "mixed1"
    kind = MIXED1

    def lb(self, U, ev):
        if self.lb_mode == "ansatz":
            return collision.lb_mixed_entropy_arrays(U, ev.aux)
        return _mixed_lb(self, U)


def _mixed_lb(closure, U):
    if closure.lb_mode == "polynomial":
        return collision.lb_mixed_polynomial(U)
    out, capped = collision.lb_mixed_tabulated_arrays(U, closure.table, closure.trace_cap)
    closure.capped += int(np.count_nonzero(capped))
    return out


class MK1Closure(Closure):
    name, ncomp, basis = "mk1", 5, "mixed1"
    kind = MIXED1

    def evaluate(self, U, warm=None, key=None):
        W, D, T = kershaw.mk1_arrays(U, "kershaw")
        fx, fy = kershaw.quarter_flux_arrays(W, D, T)
        return Evaluation(*kershaw.split_quarter_fluxes(fx, fy))

    def lb(self, U, ev):
        return _mixed_lb(self, U)


class QK1Closure(Closure):
    """Four independent quarter systems (PP, MP, MM, PM), three moments each; no scattering."""

    name, ncomp, basis = "qk1", 12, "quarter1x4"
    kind = None
    _kinds = tuple(quarter1(q) for q in QUADRANTS)

    @property
    def labels(self):
        return tuple(lab for k in self._kinds for lab in k.labels)

    def realizable(self, U, slack=0.0):
        ok = np.ones(U.shape[:-1], dtype=bool)
        for k, kind in enumerate(self._kinds):
            ok &= realizable_mask(kind, U[..., 3 * k:3 * k + 3], slack)
        return ok

    def limit(self, U, eps=1e-8, floor=1e-10):
        U = np.array(U, dtype=float, copy=True)
        changed = np.zeros(U.shape[:-1], dtype=bool)
        for k, kind in enumerate(self._kinds):
            U[..., 3 * k:3 * k + 3], c = limit_array(kind, U[..., 3 * k:3 * k + 3], eps, floor)
            changed |= c
        return U, changed

    def mass(self, U):
        return U[..., 0::3].sum(axis=-1)

    def moments_at_nodes(self, psi, quad):
        return np.concatenate(
            [(np.asarray(psi) * quad.weights) @ basis_values(k, quad.ox, quad.oy, quad.quadrant) for k in self._kinds],
            axis=-1,
        )

    def isotropic(self, value):
        return np.asarray(value, dtype=float)[..., None] * np.concatenate([basis_integral(k) for k in self._kinds])

    def evaluate(self, U, warm=None, key=None):
        shape = U.shape[:-1]
        z = np.zeros(shape + (12,))
        xp, xm, yp, ym = z.copy(), z.copy(), z.copy(), z.copy()
        for k, q in enumerate(QUADRANTS):
            sx, sy = q.signs
            V = U[..., 3 * k:3 * k + 3]
            u0 = np.maximum(V[..., 0], 1e-300)
            P = np.clip(np.stack([sx * V[..., 1], sy * V[..., 2]], -1) / u0[..., None], 0.0, 1.0)
            u20, u11, u02 = kershaw.qk1_tensor_arrays(P)
            u11 = sx * sy * u11
            fx = np.stack([V[..., 1], u0 * u20, u0 * u11], -1)
            fy = np.stack([V[..., 2], u0 * u11, u0 * u02], -1)
            sl = slice(3 * k, 3 * k + 3)
            (xp if sx > 0 else xm)[..., sl] = fx
            (yp if sy > 0 else ym)[..., sl] = fy
        return Evaluation(xp, xm, yp, ym)

    def lb(self, U, ev):
        raise ValueError("the quarter Kershaw model has no scattering operator")


def make_closure(name: str, lb: str | None = None, *, trace_cap: float = collision.DEFAULT_TRACE_CAP,
                 table=None, n_mu: int = 16, n_phi: int = 16, tol: float = 1e-9, max_iter: int = 200) -> Closure:
    name = name.lower()
    if name not in CLOSURES:
        raise ValueError(f"unknown closure {name!r}; choose from {CLOSURES}")
    kw = dict(lb=lb, trace_cap=trace_cap, table=table)
    if name in ("m1", "mm1"):
        kw.update(n_mu=n_mu, n_phi=n_phi, tol=tol, max_iter=max_iter)
    cls = {"p1": P1Closure, "m1": M1Closure, "mm1": MM1Closure, "mk1": MK1Closure, "qk1": QK1Closure}[name]
    return cls(**kw)
