"""Kershaw closures: the QK1 second moment, its four-atom realization and the MK1 mixed closure.

Array functions work in the PP frame on normalised first moments ``P[..., 2]``
with non-negative components; other quadrants follow by reflection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .moments import (
    AtomicDistribution,
    MomentVec,
    gamma_arrays,
    mixed1_realizable,
    projected_first_moment,
    quadrant_weights,
)
from .sphere import (
    MIXED1,
    QUADRANT_SX,
    QUADRANT_SY,
    QUADRANTS,
    BasisKind,
    Region,
    basis_values,
    region_from_name,
)

SQRT2 = np.sqrt(2.0)
GAMMA_ISO = -(2.0 * np.pi - 3.0 * np.pi * SQRT2 + 4.0) / (3.0 * np.pi * (SQRT2 - 1.0))
ALPHA1_SCALE = 8.0 / 3.0 - 16.0 / (3.0 * np.pi)


def qk1_gamma(norm_phi):
    """Interpolation weight, linear in the norm and equal to its isotropic value at ``1/sqrt(2)``."""
    g = 1.0 - SQRT2 * (1.0 - GAMMA_ISO) * np.asarray(norm_phi, dtype=float)
    return float(g) if np.ndim(g) == 0 else g


@dataclass(frozen=True)
class KershawCoefficients:
    alpha1: float
    alpha2: float
    gamma: float
    lam: float


def _coefficient_arrays(P):
    P = np.asarray(P, dtype=float)
    n = np.hypot(P[..., 0], P[..., 1])
    g = qk1_gamma(n)
    lam = g * n * n + (1.0 - g) * n
    a1 = np.abs(P[..., 0] * P[..., 1]) * ALPHA1_SCALE * (1.0 - n * n)
    return n, g, lam, a1


def _pp_frame(phi, q: Region):
    if not q.is_quadrant:
        raise ValueError(f"{q} is not a quadrant")
    phi = np.asarray(phi, dtype=float).reshape(2)
    sx, sy = q.signs
    P = np.array([sx * phi[0], sy * phi[1]])
    if np.any(P < -1e-14) or np.hypot(*P) > 1.0 + 1e-14:
        raise ValueError(f"phi {phi} is not in the closed quadrant {q.value} and unit disk")
    return np.clip(P, 0.0, None)


def qk1_coefficients(phi, q: Region | str = Region.PP) -> KershawCoefficients:
    P = _pp_frame(phi, region_from_name(q))
    _, g, lam, a1 = _coefficient_arrays(P)
    return KershawCoefficients(float(a1), float(lam - a1), float(g), float(lam))


def qk1_tensor_arrays(P):
    """PP-frame QK1 second moments ``(u20, u11, u02)`` for density one.

    The tensor is ``alpha1 I + alpha2 phi phi^T / |phi|^2``; it tends to zero
    with ``phi`` (all mass at the pole), which is the value used at ``phi = 0``.
    """
    P = np.asarray(P, dtype=float)
    n, _, lam, a1 = _coefficient_arrays(P)
    a2 = lam - a1
    n2 = n * n
    safe = np.where(n2 > 0.0, n2, 1.0)
    scale = np.where(n2 > 0.0, a2 / safe, 0.0)
    u20 = a1 + scale * P[..., 0] ** 2
    u11 = scale * P[..., 0] * P[..., 1]
    u02 = a1 + scale * P[..., 1] ** 2
    return u20, u11, u02


def qk1_second_moment(phi, q: Region | str = Region.PP) -> np.ndarray:
    q = region_from_name(q)
    P = _pp_frame(phi, q)
    u20, u11, u02 = qk1_tensor_arrays(P)
    sxy = q.signs[0] * q.signs[1]
    return np.array([[u20, sxy * u11], [sxy * u11, u02]])


@dataclass(frozen=True)
class KershawAtoms:
    """Four-atom data; index 0 is the transverse pair, index 1 the pair along ``phi``."""

    c_plus: np.ndarray
    c_minus: np.ndarray
    d_plus: np.ndarray
    d_minus: np.ndarray
    vectors: np.ndarray  # rows v1, v2
    eigenvalues: np.ndarray


def qk1_atom_arrays(P):
    """Vectorised PP-frame atoms: ``(weights (..., 4), positions (..., 4, 2), parts)``.

    Atom order is ``phi + d1p v1, phi - d1m v1, phi + d2p v2, phi - d2m v2``.
    ``parts`` is ``(cp, cm, dp, dm, v1, v2, lam1, lam2)`` with pair data stacked on the last axis.
    """
    P = np.asarray(P, dtype=float)
    n, _, lam, a1 = _coefficient_arrays(P)
    safe_n = np.where(n > 0.0, n, 1.0)
    v2 = np.where((n > 0.0)[..., None], P / safe_n[..., None], 0.0)
    v1 = np.stack([-v2[..., 1], v2[..., 0]], axis=-1)
    lam1 = a1
    lam2 = np.maximum(lam - n * n, 0.0)
    safe_a = np.where(P[..., 0] > 0.0, P[..., 0], 1.0)
    ratio = np.where(P[..., 0] > 0.0, P[..., 1] / safe_a * n, np.inf)
    d1m = np.minimum(ratio, np.sqrt(np.maximum(1.0 - n * n, 0.0)))
    d2m = n
    dm = np.stack([d1m, d2m], axis=-1)
    lamb = np.stack([lam1, lam2], axis=-1)
    den = 2.0 * lamb + dm * dm
    ok = den > 0.0
    safe_den = np.where(ok, den, 1.0)
    cm = np.where(ok, lamb / safe_den, 0.5)
    cp = np.where(ok, 0.5 * dm * dm / safe_den, 0.0)
    safe_dm = np.where(dm > 0.0, dm, 1.0)
    dp = np.where(dm > 0.0, 2.0 * lamb / safe_dm, 0.0)
    w = np.stack([cp[..., 0], cm[..., 0], cp[..., 1], cm[..., 1]], axis=-1)
    pos = np.stack(
        [
            P + dp[..., 0, None] * v1,
            P - dm[..., 0, None] * v1,
            P + dp[..., 1, None] * v2,
            P - dm[..., 1, None] * v2,
        ],
        axis=-2,
    )
    return w, pos, (cp, cm, dp, dm, v1, v2, lam1, lam2)


def qk1_atoms(phi, q: Region | str = Region.PP):
    """Four-atom realization of ``(1, phi, qk1_second_moment(phi))`` in quadrant ``q``.

    Returns ``(KershawAtoms, AtomicDistribution)``; the atoms are expressed in
    the frame of ``q`` and tagged with it.
    """
    q = region_from_name(q)
    P = _pp_frame(phi, q)
    w, pos, (cp, cm, dp, dm, v1, v2, lam1, lam2) = qk1_atom_arrays(P)
    sx, sy = q.signs
    flip = np.array([sx, sy], dtype=float)
    atoms = KershawAtoms(cp, cm, dp, dm, np.stack([v1 * flip, v2 * flip]), np.array([lam1, lam2]))
    dist = AtomicDistribution(w, pos * flip, np.full(4, q.index))
    return atoms, dist


# ---------------------------------------------------------------------------
# mixed closure


@dataclass(frozen=True)
class MK1SecondMoments:
    """Quarter second moments ``(u20, u11, u02)`` per quadrant (PP, MP, MM, PM), scaled by density and weight."""

    quarter: np.ndarray  # (..., 4, 3)

    def half(self, name: str):
        """``u20`` over Sx+/Sx-, ``u02`` over Sy+/Sy-, ``u11`` over any half-space."""
        idx = {"u20": 0, "u11": 1, "u02": 2}
        comp, _, region = name.partition("_")
        qs = [QUADRANTS.index(r) for r in region_from_name(region).quadrants]
        return self.quarter[..., qs, idx[comp]].sum(axis=-1)

    @property
    def full(self) -> np.ndarray:
        """Full-sphere tensor ``[[u20, u11], [u11, u02]]``."""
        s = self.quarter.sum(axis=-2)
        return np.stack([np.stack([s[..., 0], s[..., 1]], -1), np.stack([s[..., 1], s[..., 2]], -1)], -2)


def mixed_quarter_data(U):
    """Per-quadrant weights (density included) and the shared PP-frame point for mixed moments ``U``."""
    U = np.asarray(U, dtype=float)
    u00 = U[..., 0]
    safe = np.where(u00 > 0.0, u00, 1.0)
    phi = U[..., 1:] / safe[..., None]
    g1, g2 = gamma_arrays(phi)
    w = u00[..., None] * quadrant_weights(g1, g2)
    d = projected_first_moment(phi)
    return w, np.clip(d, 0.0, None)


_XP = np.array([1.0, 0.0, 0.0, 1.0])
_YP = np.array([1.0, 1.0, 0.0, 0.0])


def quarter_flux_arrays(W, D, T):
    """Per-quadrant mixed fluxes ``<omega_x b psi_q>`` and ``<omega_y b psi_q>``.

    ``W (..., 4)`` are quadrant masses, ``D (..., 2)`` the PP-frame first moment
    and ``T = (u20, u11, u02)`` PP-frame second moments, all per unit mass.
    Returns two arrays of shape ``(..., 4, 5)``.
    """
    W = np.asarray(W, dtype=float)
    m10 = W * QUADRANT_SX * D[..., 0, None]
    m01 = W * QUADRANT_SY * D[..., 1, None]
    u20 = W * T[0][..., None]
    u11 = W * (QUADRANT_SX * QUADRANT_SY) * T[1][..., None]
    u02 = W * T[2][..., None]
    fx = np.stack([m10, u20 * _XP, u20 * (1 - _XP), u11 * _YP, u11 * (1 - _YP)], axis=-1)
    fy = np.stack([m01, u11 * _XP, u11 * (1 - _XP), u02 * _YP, u02 * (1 - _YP)], axis=-1)
    return fx, fy


def split_quarter_fluxes(fx, fy):
    """Half fluxes ``(Fx_pos, Fx_neg, Fy_pos, Fy_neg)`` from per-quadrant fluxes."""
    return (
        fx[..., 0, :] + fx[..., 3, :],
        fx[..., 1, :] + fx[..., 2, :],
        fy[..., 0, :] + fy[..., 1, :],
        fy[..., 2, :] + fy[..., 3, :],
    )


def mk1_arrays(U, engine="kershaw", table=None):
    """Quadrant weights, PP-frame point and PP-frame tensors for mixed moments ``U``."""
    W, D = mixed_quarter_data(U)
    if engine == "kershaw":
        T = qk1_tensor_arrays(D)
    elif engine == "table":
        if table is None:
            raise ValueError("the table engine needs a QM1Table")
        from .entropy import qm1_lookup_arrays

        T = qm1_lookup_arrays(table, D)[:3]
    else:
        raise ValueError(f"unknown quarter engine {engine!r}")
    return W, D, T


def mk1_closure(u: MomentVec, quarter_engine: str = "kershaw", table=None, slack: float = 1e-12) -> MK1SecondMoments:
    """Second moments of the mixed Kershaw closure.

    The mixed state is split into four quarter states with the convex weights of
    the realizing construction; each quarter is closed by QK1 (``"kershaw"``) or
    by the tabulated quarter entropy closure (``"table"``).
    """
    if u.kind != MIXED1:
        raise ValueError("expected a mixed1 moment vector")
    if not mixed1_realizable(u.values, slack):
        raise ValueError(f"{u.values} is not mixed1-realizable")
    W, D, T = mk1_arrays(u.values, quarter_engine, table)
    sxy = QUADRANT_SX * QUADRANT_SY
    quarter = np.stack([W * T[0], W * sxy * T[1], W * T[2]], axis=-1)
    return MK1SecondMoments(quarter)


def mk1_atoms(u: MomentVec) -> AtomicDistribution:
    """The 16-atom realizing distribution behind the Kershaw mixed closure."""
    if not mixed1_realizable(u.values, 1e-12):
        raise ValueError(f"{u.values} is not mixed1-realizable")
    W, D = mixed_quarter_data(u.values)
    w, pos, _ = qk1_atom_arrays(D)
    weights, omega, tags = [], [], []
    for k, q in enumerate(QUADRANTS):
        flip = np.array(q.signs, dtype=float)
        weights.append(W[k] * w)
        omega.append(pos * flip)
        tags.append(np.full(4, k))
    return AtomicDistribution(np.concatenate(weights), np.concatenate(omega), np.concatenate(tags))


def flux_from_atoms(a: AtomicDistribution, kind: BasisKind, axis: str = "x", sign_filter: str = "all") -> np.ndarray:
    """``sum_k w_k omega_axis,k b(omega_k)`` with an optional sign filter on the transport component."""
    comp = {"x": 0, "y": 1}[axis.lower()]
    o = a.omega[:, comp]
    f = sign_filter.lower()
    if f in ("pos", "positive", "positiveonly"):
        o = np.maximum(o, 0.0)
    elif f in ("neg", "negative", "negativeonly"):
        o = np.minimum(o, 0.0)
    elif f != "all":
        raise ValueError(f"unknown sign filter {sign_filter!r}")
    b = basis_values(kind, a.omega[:, 0], a.omega[:, 1], a.quadrant_indices())
    return (a.weights * o) @ b


def quarter_flux_kershaw(U):
    """QK1 fluxes for quarter moments ``U (..., 3)`` of quadrant PP-frame data; used for spectra.

    ``U`` must be in the PP frame.  Returns ``(Fx, Fy)`` of shape ``(..., 3)``.
    """
    U = np.asarray(U, dtype=float)
    u0 = U[..., 0]
    P = U[..., 1:] / u0[..., None]
    u20, u11, u02 = qk1_tensor_arrays(P)
    fx = np.stack([U[..., 1], u0 * u20, u0 * u11], axis=-1)
    fy = np.stack([U[..., 2], u0 * u11, u0 * u02], axis=-1)
    return fx, fy


def mk1_fluxes(U, engine="kershaw", table=None):
    """Full mixed fluxes ``(Fx, Fy)`` for moments ``U (..., 5)``."""
    W, D, T = mk1_arrays(U, engine, table)
    fx, fy = quarter_flux_arrays(W, D, T)
    return fx.sum(axis=-2), fy.sum(axis=-2)


__all__ = [
    "GAMMA_ISO",
    "KershawAtoms",
    "KershawCoefficients",
    "MK1SecondMoments",
    "flux_from_atoms",
    "mk1_atoms",
    "mk1_closure",
    "qk1_atoms",
    "qk1_coefficients",
    "qk1_gamma",
    "qk1_second_moment",
]
