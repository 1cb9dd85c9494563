"""Moments of the Laplace-Beltrami scattering operator.

For a mixed basis function such as ``omega_x 1_{x+}`` the operator produces,
besides ``-2 omega_x 1_{x+}``, a line source on the great half-circles where the
indicator switches (``omega_x = 0``).  Pairing with ``psi`` turns these into
traces ``int_0^pi psi(theta, a) dtheta`` along the meridians at azimuth ``a``.
"""

from __future__ import annotations

import logging
import numpy as np

from .moments import MomentVec
from .sphere import MIXED1

log = logging.getLogger(__name__)

PI = np.pi
_D = (2.0 * PI - 4.0) * (PI - 4.0)
S0 = -3.0 / (PI - 4.0) - 1.0
S1 = 3.0 * PI * (PI - 3.0) / _D
S2 = -3.0 * PI / _D - 1.5
S3 = 3.0 * PI / _D - 0.5

DEFAULT_TRACE_CAP = 1e6


def lb_matrix_mm1() -> np.ndarray:
    """Mixed-moment Laplace-Beltrami matrix for the linear ansatz."""
    return np.array(
        [
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [S0, S3, S2, S1, -S1],
            [-S0, S2, S3, -S1, S1],
            [S0, S1, -S1, S3, S2],
            [-S0, -S1, S1, S2, S3],
        ]
    )


def lb_full_moment(ix: int, iy: int, u) -> float:
    """Laplace-Beltrami moment for the monomial ``omega_x^ix omega_y^iy``.

    ``u`` maps ``(ix, iy)`` to full moments (a dict or any object indexable by tuples).
    """
    if ix < 0 or iy < 0:
        raise ValueError("powers must be non-negative")
    k = ix + iy
    out = -k * (k + 1) * u[(ix, iy)] if k > 0 else 0.0
    if ix >= 2:
        out += ix * (ix - 1) * u[(ix - 2, iy)]
    if iy >= 2:
        out += iy * (iy - 1) * u[(ix, iy - 2)]
    return float(out)


def lb_full1(U) -> np.ndarray:
    """First-order full moments: ``(0, -2 u10, -2 u01)``."""
    U = np.asarray(U, dtype=float)
    out = -2.0 * U
    out[..., 0] = 0.0
    return out


def lb_mixed_polynomial(u) -> np.ndarray:
    U = u.values if isinstance(u, MomentVec) else np.asarray(u, dtype=float)
    return U @ lb_matrix_mm1().T


def lb_mixed_from_traces(U, t0, t90, t180, t270) -> np.ndarray:
    """Mixed moments of the operator given the four meridian traces (same density scale as ``U``)."""
    U = np.asarray(U, dtype=float)
    ty = t90 + t270
    tx = t0 + t180
    return np.stack(
        [np.zeros_like(U[..., 0]), -2.0 * U[..., 1] + ty, -2.0 * U[..., 2] - ty,
         -2.0 * U[..., 3] + tx, -2.0 * U[..., 4] - tx],
        axis=-1,
    )


def lb_mixed_tabulated_arrays(U, table, trace_cap: float = DEFAULT_TRACE_CAP):
    """Vectorised tabulated treatment; returns ``(LB (..., 5), capped mask)``.

    The ansatz is the convex combination of tabulated quarter entropy
    distributions that realizes ``U``.  It jumps across quadrant edges; the
    trace there is the mean of the two one-sided values.  Every quarter piece
    shares the same PP-frame point, so the result does not depend on the weights.
    ``trace_cap`` bounds the normalised traces.
    """
    from .entropy import qm1_lookup_arrays
    from .kershaw import mixed_quarter_data

    U = np.asarray(U, dtype=float)
    _, D = mixed_quarter_data(U)
    _, _, _, t0, t90, _ = qm1_lookup_arrays(table, D)
    capped = (t0 > trace_cap) | (t90 > trace_cap)
    t0 = np.minimum(t0, trace_cap)
    t90 = np.minimum(t90, trace_cap)
    half = 0.25 * U[..., 0]
    return lb_mixed_from_traces(U, half * t0, half * t90, half * t0, half * t90), capped


def lb_mixed_tabulated(u: MomentVec, table, gammas=None, trace_cap: float = DEFAULT_TRACE_CAP) -> np.ndarray:
    """Tabulated Laplace-Beltrami moments for one mixed vector.

    ``gammas`` is accepted for interface symmetry; the averaged edge traces make
    the result independent of the convex weights.
    """
    if u.kind != MIXED1:
        raise ValueError("expected a mixed1 moment vector")
    out, capped = lb_mixed_tabulated_arrays(u.values, table, trace_cap)
    if np.any(capped):
        log.info("trace cap %g reached for u = %s", trace_cap, u.values)
    return out


_THETA_X, _THETA_W = np.polynomial.legendre.leggauss(64)


def meridian_integral(coef0, coef1, n: int = 64):
    """``int_0^pi exp(coef0 + coef1 sin(theta)) dtheta`` for arrays of coefficients."""
    x, w = (_THETA_X, _THETA_W) if n == 64 else np.polynomial.legendre.leggauss(n)
    s = np.sin(0.25 * PI * (x + 1.0))
    wt = 0.5 * PI * w
    c0 = np.asarray(coef0, dtype=float)[..., None]
    c1 = np.asarray(coef1, dtype=float)[..., None]
    return np.exp(np.minimum(c0 + c1 * s, 700.0)) @ wt


def lb_mixed_entropy_arrays(U, A):
    """Mixed moments of the operator for the exponential mixed ansatz with multipliers ``A``.

    The mixed exponential ansatz is continuous, so each meridian trace is the
    ansatz restricted to that meridian.
    """
    A = np.asarray(A, dtype=float)
    a0 = A[..., 0]
    t0 = meridian_integral(a0, A[..., 1])
    t180 = meridian_integral(a0, -A[..., 2])
    t90 = meridian_integral(a0, A[..., 3])
    t270 = meridian_integral(a0, -A[..., 4])
    return lb_mixed_from_traces(U, t0, t90, t180, t270)


def quarter_lb_defect(pieces, quad_mu: int = 64):
    """Zeroth quarter moments of the operator applied to a piecewise ansatz.

    ``pieces`` holds one ``(psi, dpsi)`` pair of callables ``f(mu, azimuth)`` per
    quadrant (PP, MP, MM, PM order), the ansatz and its azimuthal derivative.
    Inside a quadrant the polar part of the operator integrates to zero, and the
    azimuthal part leaves ``int (d_azimuth psi)|_a^b / (1 - mu^2) dmu``.  The
    one-sided derivatives at shared edges cancel in the total only when they
    agree.  Returns ``(per_quadrant (4,), total)``.
    """
    if len(pieces) != 4:
        raise ValueError("need one piece per quadrant")
    x, w = np.polynomial.legendre.leggauss(quad_mu)
    theta = 0.5 * PI * (x + 1.0)
    mu = np.cos(theta)
    # dmu / (1 - mu^2) = dtheta / sin(theta)
    jac = 0.5 * PI * w / np.sin(theta)
    out = np.zeros(4)
    for k, (_, dpsi) in enumerate(pieces):
        a, b = k * 0.5 * PI, (k + 1) * 0.5 * PI
        g = np.asarray(dpsi(mu, np.full_like(mu, b))) - np.asarray(dpsi(mu, np.full_like(mu, a)))
        out[k] = g @ jac
    return out, float(out.sum())


__all__ = [
    "DEFAULT_TRACE_CAP",
    "S0",
    "S1",
    "S2",
    "S3",
    "lb_full1",
    "lb_full_moment",
    "lb_matrix_mm1",
    "lb_mixed_entropy_arrays",
    "lb_mixed_polynomial",
    "lb_mixed_tabulated",
    "quarter_lb_defect",
]
