"""Moment vectors, first-order realizability and constructive realizing atoms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere import (
    FULL1,
    MIXED1,
    QUADRANT_SX,
    QUADRANT_SY,
    QUADRANTS,
    BasisKind,
    Region,
    basis_values,
    quadrant_index_of_omega,
)

DEFAULT_FLOOR = 1e-10


class NotRealizableError(ValueError):
    """Raised when a moment vector has no non-negative realizing distribution."""


@dataclass(frozen=True)
class MomentVec:
    kind: BasisKind
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.kind.size,):
            raise ValueError(f"{self.kind} needs {self.kind.size} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def u00(self) -> float:
        return float(self.values[0])

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class NormalizedMixed1:
    """First mixed moments divided by the density: (phi_x+, phi_x-, phi_y+, phi_y-)."""

    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float).reshape(4))

    @classmethod
    def from_moments(cls, u: MomentVec) -> "NormalizedMixed1":
        if u.kind != MIXED1:
            raise ValueError("expected a mixed1 moment vector")
        return cls(u.values[1:] / u.values[0])


@dataclass(frozen=True)
class GammaPair:
    gamma1: float
    gamma2: float


@dataclass(frozen=True)
class AtomicDistribution:
    """Weighted Dirac atoms on the projected unit disk.

    ``tags`` holds a quadrant index per atom (``-1`` when untagged); tags decide
    the indicator values of atoms that sit on a quadrant boundary.
    """

    weights: np.ndarray
    omega: np.ndarray
    tags: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        om = np.asarray(self.omega, dtype=float).reshape(-1, 2)
        t = np.asarray(self.tags, dtype=int).reshape(-1)
        if not (w.size == om.shape[0] == t.size):
            raise ValueError("weights, omega and tags must have matching lengths")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "tags", t)

    @classmethod
    def from_atoms(cls, atoms) -> "AtomicDistribution":
        """Build from ``(weight, (ox, oy), tag)`` triples; tag is a Region or None."""
        ws, om, tags = [], [], []
        for w, o, tag in atoms:
            ws.append(w)
            om.append(o)
            tags.append(-1 if tag is None else tag.index)
        return cls(np.array(ws), np.array(om).reshape(-1, 2), np.array(tags))

    def __len__(self):
        return self.weights.size

    def quadrant_indices(self) -> np.ndarray:
        q = quadrant_index_of_omega(self.omega[:, 0], self.omega[:, 1])
        return np.where(self.tags >= 0, self.tags, q)

    def is_valid(self, tol: float = 1e-12) -> bool:
        if np.any(self.weights < -tol):
            return False
        if np.any(np.hypot(self.omega[:, 0], self.omega[:, 1]) > 1.0 + tol):
            return False
        tagged = self.tags >= 0
        sx = QUADRANT_SX[self.tags[tagged]]
        sy = QUADRANT_SY[self.tags[tagged]]
        om = self.omega[tagged]
        return bool(np.all(sx * om[:, 0] >= -tol) and np.all(sy * om[:, 1] >= -tol))


def moments_of_atomic(a: AtomicDistribution, kind: BasisKind) -> MomentVec:
    b = basis_values(kind, a.omega[:, 0], a.omega[:, 1], a.quadrant_indices())
    return MomentVec(kind, a.weights @ b)


# ---------------------------------------------------------------------------
# realizability tests (array versions operate on the trailing axis)


def full1_realizable(U, slack: float = 0.0) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    return (U[..., 0] >= -slack) & (np.hypot(U[..., 1], U[..., 2]) <= U[..., 0] + slack)


def quarter1_realizable(U, q: Region, slack: float = 0.0) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    sx, sy = q.signs
    return (
        (U[..., 0] >= -slack)
        & (np.hypot(U[..., 1], U[..., 2]) <= U[..., 0] + slack)
        & (sx * U[..., 1] >= -slack)
        & (sy * U[..., 2] >= -slack)
    )


def mixed1_realizable(U, slack: float = 0.0) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    norm = np.hypot(U[..., 1] - U[..., 2], U[..., 3] - U[..., 4])
    return (
        (U[..., 0] >= -slack)
        & (norm <= U[..., 0] + slack)
        & (U[..., 1] >= -slack)
        & (U[..., 3] >= -slack)
        & (U[..., 2] <= slack)
        & (U[..., 4] <= slack)
    )


def realizable_mask(kind: BasisKind, U, slack: float = 0.0) -> np.ndarray:
    if kind.name == "full1":
        return full1_realizable(U, slack)
    if kind.name == "mixed1":
        return mixed1_realizable(U, slack)
    return quarter1_realizable(U, kind.quadrant, slack)


def is_realizable_full1(u: MomentVec, slack: float = 0.0) -> bool:
    if u.kind != FULL1:
        raise ValueError("expected a full1 moment vector")
    return bool(full1_realizable(u.values, slack))


def is_realizable_quarter1(u: MomentVec, slack: float = 0.0) -> bool:
    if u.kind.name != "quarter1":
        raise ValueError("expected a quarter1 moment vector")
    return bool(quarter1_realizable(u.values, u.kind.quadrant, slack))


def is_realizable_mixed1(u: MomentVec, slack: float = 0.0) -> bool:
    if u.kind != MIXED1:
        raise ValueError("expected a mixed1 moment vector")
    return bool(mixed1_realizable(u.values, slack))


def is_realizable(u: MomentVec, slack: float = 0.0) -> bool:
    return bool(realizable_mask(u.kind, u.values, slack))


# ---------------------------------------------------------------------------
# mixed-moment geometry


def mm_norm(phi) -> float:
    p = phi.phi if isinstance(phi, NormalizedMixed1) else np.asarray(phi, dtype=float)
    return np.hypot(p[..., 0] - p[..., 1], p[..., 2] - p[..., 3])


def _safe_ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.full(np.broadcast(num, den).shape, 0.5)
    ok = den > 0.0
    np.divide(num, den, out=out, where=ok)
    return np.clip(out, 0.0, 1.0)


def gamma_arrays(P):
    """Convex weights (gamma1, gamma2) for normalised mixed moments ``P[..., 4]``.

    A vanishing denominator means both half moments are zero; any weight
    reproduces the moments there and 1/2 is used.
    """
    P = np.asarray(P, dtype=float)
    g1 = _safe_ratio(P[..., 2], P[..., 2] - P[..., 3])
    g2 = _safe_ratio(P[..., 0], P[..., 0] - P[..., 1])
    return g1, g2


def gamma_interpolation(phi: NormalizedMixed1) -> GammaPair:
    g1, g2 = gamma_arrays(phi.phi)
    return GammaPair(float(g1), float(g2))


def quadrant_weights(g1, g2) -> np.ndarray:
    """Weights of the four quarter pieces in PP, MP, MM, PM order."""
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    return np.stack([g2 * g1, (1.0 - g2) * g1, (1.0 - g2) * (1.0 - g1), g2 * (1.0 - g1)], axis=-1)


def projected_first_moment(P) -> np.ndarray:
    """PP-frame projection (phi_x+ - phi_x-, phi_y+ - phi_y-) shared by all quadrants."""
    P = np.asarray(P, dtype=float)
    return np.stack([P[..., 0] - P[..., 1], P[..., 2] - P[..., 3]], axis=-1)


def quadrant_projection(phi: NormalizedMixed1) -> np.ndarray:
    """Projected first moments for PP, MP, MM, PM (shape (4, 2))."""
    d = projected_first_moment(phi.phi)
    return np.stack([QUADRANT_SX * d[0], QUADRANT_SY * d[1]], axis=-1)


# ---------------------------------------------------------------------------
# realizing distributions


def realize_quarter1(u: MomentVec) -> AtomicDistribution:
    if not is_realizable_quarter1(u):
        raise NotRealizableError(f"{u.values} is not realizable for {u.kind}")
    u0 = u.u00
    pos = u.values[1:] / u0 if u0 > 0 else np.zeros(2)
    return AtomicDistribution(np.array([u0]), pos.reshape(1, 2), np.array([u.kind.quadrant.index]))


def realize_mixed1(u: MomentVec) -> AtomicDistribution:
    """Four tagged atoms, one per quadrant, combined with the gamma weights."""
    if not is_realizable_mixed1(u):
        raise NotRealizableError(f"{u.values} is not mixed1-realizable")
    u0 = u.u00
    if u0 == 0.0:
        return AtomicDistribution(np.zeros(4), np.zeros((4, 2)), np.arange(4))
    phi = NormalizedMixed1(u.values[1:] / u0)
    g = gamma_interpolation(phi)
    w = u0 * quadrant_weights(g.gamma1, g.gamma2)
    return AtomicDistribution(w, quadrant_projection(phi), np.arange(4))


# ---------------------------------------------------------------------------
# limiter


def limit_array(kind: BasisKind, U, eps: float = 1e-8, floor: float = DEFAULT_FLOOR):
    """Project moments onto the realizable set.

    Returns ``(limited, changed_mask)``.  The density is floored, wrong-signed
    half moments are zeroed, and first moments are scaled toward zero when
    their norm exceeds ``(1 - eps) * u00``.
    """
    U = np.array(U, dtype=float, copy=True)
    orig = U.copy()
    if kind.name == "quarter1":
        sx, sy = kind.quadrant.signs
        U[..., 0] = np.maximum(U[..., 0], floor)
        U[..., 1] = sx * np.maximum(sx * U[..., 1], 0.0)
        U[..., 2] = sy * np.maximum(sy * U[..., 2], 0.0)
        norm = np.hypot(U[..., 1], U[..., 2])
        idx = slice(1, 3)
    elif kind.name == "full1":
        U[..., 0] = np.maximum(U[..., 0], floor)
        norm = np.hypot(U[..., 1], U[..., 2])
        idx = slice(1, 3)
    else:
        U[..., 0] = np.maximum(U[..., 0], floor)
        U[..., 1] = np.maximum(U[..., 1], 0.0)
        U[..., 3] = np.maximum(U[..., 3], 0.0)
        U[..., 2] = np.minimum(U[..., 2], 0.0)
        U[..., 4] = np.minimum(U[..., 4], 0.0)
        norm = np.hypot(U[..., 1] - U[..., 2], U[..., 3] - U[..., 4])
        idx = slice(1, 5)
    bound = (1.0 - eps) * U[..., 0]
    over = norm > bound
    theta = np.ones_like(norm)
    np.divide(bound, norm, out=theta, where=over)
    U[..., idx] *= theta[..., None]
    changed = np.any(U != orig, axis=-1)
    return U, changed


def limit_to_realizable(u: MomentVec, eps: float = 1e-8, floor: float = DEFAULT_FLOOR) -> MomentVec:
    limited, _ = limit_array(u.kind, u.values, eps, floor)
    return MomentVec(u.kind, limited)


def regularize_toward_isotropic(kind: BasisKind, U, max_norm: float = 0.98):
    """Blend normalised moments toward the isotropic point until they are safely interior.

    With ``d = 1 - max_norm`` a vector ``V`` counts as interior when
    ``(V - d * iso) / (1 - d)`` is realizable.  For the full and quarter bases
    this is the familiar bound ``|phi| <= max_norm``; for the mixed basis it
    also keeps every half-space component away from zero.  Works on vectors
    with density one.  Returns ``(blended, r)`` with the smallest blend
    fraction ``r`` (to bisection accuracy) that makes the vector interior.
    """
    from .sphere import isotropic_moments

    U = np.asarray(U, dtype=float)
    iso = isotropic_moments(kind)
    d = 1.0 - max_norm

    def interior(V):
        return realizable_mask(kind, (V - d * iso) / (1.0 - d), 0.0)

    r = np.zeros(U.shape[:-1])
    need = ~interior(U)
    if np.any(need):
        lo = np.zeros(U.shape[:-1])
        hi = np.ones(U.shape[:-1])
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            ok = interior((1.0 - mid[..., None]) * U + mid[..., None] * iso)
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        r = np.where(need, hi, 0.0)
    return (1.0 - r[..., None]) * U + r[..., None] * iso, r


__all__ = [
    "AtomicDistribution",
    "GammaPair",
    "MomentVec",
    "NormalizedMixed1",
    "NotRealizableError",
    "QUADRANTS",
    "gamma_interpolation",
    "is_realizable",
    "is_realizable_full1",
    "is_realizable_mixed1",
    "is_realizable_quarter1",
    "limit_to_realizable",
    "mm_norm",
    "moments_of_atomic",
    "quadrant_projection",
    "realize_mixed1",
    "realize_quarter1",
]
