"""Angular geometry on the unit sphere reduced to the projected disk.

Directions are parametrised by ``mu`` (cosine of the polar angle) and the
azimuth; only the projected components ``(omega_x, omega_y)`` enter the 2D
moment systems.  Quadrants and half-spaces use half-open azimuth intervals so
every direction belongs to exactly one quadrant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import betaln

HALF_PI = 0.5 * np.pi
TWO_PI = 2.0 * np.pi


class Region(enum.Enum):
    FULL = "full"
    PP = "PP"
    MP = "MP"
    MM = "MM"
    PM = "PM"
    XP = "Xp"
    XM = "Xm"
    YP = "Yp"
    YM = "Ym"

    @property
    def quadrants(self) -> tuple["Region", ...]:
        return _REGION_QUADRANTS[self]

    @property
    def is_quadrant(self) -> bool:
        return self in QUADRANTS

    @property
    def index(self) -> int:
        """Position of a quadrant in counter-clockwise order starting at PP."""
        return QUADRANTS.index(self)

    @property
    def signs(self) -> tuple[int, int]:
        """Signs ``(sx, sy)`` of the projected direction inside a quadrant."""
        return _QUADRANT_SIGNS[self]

    @property
    def azimuth_range(self) -> tuple[float, float]:
        i = self.index
        return i * HALF_PI, (i + 1) * HALF_PI


QUADRANTS = (Region.PP, Region.MP, Region.MM, Region.PM)
HALF_SPACES = (Region.XP, Region.XM, Region.YP, Region.YM)

_REGION_QUADRANTS = {
    Region.FULL: QUADRANTS,
    Region.PP: (Region.PP,),
    Region.MP: (Region.MP,),
    Region.MM: (Region.MM,),
    Region.PM: (Region.PM,),
    Region.XP: (Region.PP, Region.PM),
    Region.XM: (Region.MP, Region.MM),
    Region.YP: (Region.PP, Region.MP),
    Region.YM: (Region.MM, Region.PM),
}
_QUADRANT_SIGNS = {Region.PP: (1, 1), Region.MP: (-1, 1), Region.MM: (-1, -1), Region.PM: (1, -1)}

# quadrant index -> sign arrays, used by vectorised code
QUADRANT_SX = np.array([1.0, -1.0, -1.0, 1.0])
QUADRANT_SY = np.array([1.0, 1.0, -1.0, -1.0])


def region_from_name(name: str | Region) -> Region:
    if isinstance(name, Region):
        return name
    for r in Region:
        if r.value.lower() == str(name).lower() or r.name.lower() == str(name).lower():
            return r
    raise ValueError(f"unknown region {name!r}")


@dataclass(frozen=True)
class Direction:
    mu: float
    azimuth: float

    def __post_init__(self):
        if not -1.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [-1, 1], got {self.mu}")


def omega_project(d: Direction) -> tuple[float, float]:
    s = np.sqrt(max(0.0, 1.0 - d.mu * d.mu))
    return float(s * np.cos(d.azimuth)), float(s * np.sin(d.azimuth))


def quadrant_index_of_azimuth(azimuth):
    """Quadrant index (0=PP, 1=MP, 2=MM, 3=PM) for half-open azimuth intervals."""
    a = np.mod(np.asarray(azimuth, dtype=float), TWO_PI)
    return np.minimum((a // HALF_PI).astype(int), 3)


def quadrant_index_of_omega(ox, oy):
    """Quadrant index of a projected direction; the pole maps to PP."""
    return quadrant_index_of_azimuth(np.arctan2(oy, ox))


@dataclass(frozen=True)
class BasisKind:
    """Order-one angular basis: ``full1``, ``quarter1`` (with a quadrant) or ``mixed1``."""

    name: str
    quadrant: Region | None = None

    def __post_init__(self):
        if self.name not in ("full1", "quarter1", "mixed1"):
            raise ValueError(f"unknown basis {self.name!r}")
        if (self.name == "quarter1") != (self.quadrant is not None):
            raise ValueError("quarter1 needs a quadrant, the other bases do not")
        if self.quadrant is not None and not self.quadrant.is_quadrant:
            raise ValueError(f"{self.quadrant} is not a quadrant")

    @property
    def size(self) -> int:
        return 5 if self.name == "mixed1" else 3

    @property
    def labels(self) -> tuple[str, ...]:
        if self.name == "mixed1":
            return ("u00", "ux_p", "ux_m", "uy_p", "uy_m")
        if self.name == "full1":
            return ("u00", "u10", "u01")
        q = self.quadrant.value.lower()
        return (f"u00_{q}", f"u10_{q}", f"u01_{q}")

    def __str__(self):
        return self.name if self.quadrant is None else f"quarter1({self.quadrant.value})"


FULL1 = BasisKind("full1")
MIXED1 = BasisKind("mixed1")


def quarter1(q: Region | str) -> BasisKind:
    return BasisKind("quarter1", region_from_name(q))


def basis_components(kind: BasisKind) -> list[tuple[int, int, tuple[Region, ...]]]:
    """Each component as (x power, y power, quadrants carrying its indicator)."""
    if kind.name == "full1":
        return [(0, 0, QUADRANTS), (1, 0, QUADRANTS), (0, 1, QUADRANTS)]
    if kind.name == "quarter1":
        q = (kind.quadrant,)
        return [(0, 0, q), (1, 0, q), (0, 1, q)]
    return [
        (0, 0, QUADRANTS),
        (1, 0, Region.XP.quadrants),
        (1, 0, Region.XM.quadrants),
        (0, 1, Region.YP.quadrants),
        (0, 1, Region.YM.quadrants),
    ]


def basis_values(kind: BasisKind, ox, oy, qidx) -> np.ndarray:
    """Vectorised basis evaluation at projected directions with known quadrant index.

    Returns an array of shape ``ox.shape + (kind.size,)``.
    """
    ox = np.asarray(ox, dtype=float)
    oy = np.asarray(oy, dtype=float)
    qidx = np.asarray(qidx)
    one = np.ones_like(ox)
    if kind.name == "full1":
        return np.stack([one, ox, oy], axis=-1)
    if kind.name == "quarter1":
        ind = (qidx == kind.quadrant.index).astype(float)
        return np.stack([ind, ox * ind, oy * ind], axis=-1)
    xp = ((qidx == 0) | (qidx == 3)).astype(float)
    yp = (qidx <= 1).astype(float)
    return np.stack([one, ox * xp, ox * (1.0 - xp), oy * yp, oy * (1.0 - yp)], axis=-1)


def basis_eval(kind: BasisKind, d: Direction, tag: Region | None = None) -> np.ndarray:
    """Basis components at ``d``; ``tag`` overrides the quadrant for boundary directions."""
    ox, oy = omega_project(d)
    q = tag.index if tag is not None else int(quadrant_index_of_azimuth(d.azimuth))
    return basis_values(kind, ox, oy, q)


@dataclass(frozen=True)
class QuadratureRule:
    """Product rule on a union of quadrants.  Arrays are read-only."""

    mu: np.ndarray
    azimuth: np.ndarray
    weights: np.ndarray
    region: Region
    ox: np.ndarray = field(init=False, repr=False)
    oy: np.ndarray = field(init=False, repr=False)
    quadrant: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = np.sqrt(np.clip(1.0 - self.mu**2, 0.0, None))
        object.__setattr__(self, "ox", s * np.cos(self.azimuth))
        object.__setattr__(self, "oy", s * np.sin(self.azimuth))
        object.__setattr__(self, "quadrant", quadrant_index_of_azimuth(self.azimuth))
        for name in ("mu", "azimuth", "weights", "ox", "oy", "quadrant"):
            getattr(self, name).setflags(write=False)

    def __len__(self):
        return self.weights.size

    def basis(self, kind: BasisKind) -> np.ndarray:
        return basis_values(kind, self.ox, self.oy, self.quadrant)

    def integrate(self, values) -> np.ndarray:
        """Integrate samples of shape ``(..., nodes)`` against the weights."""
        return np.asarray(values) @ self.weights


@lru_cache(maxsize=64)
def _polar_nodes(n: int, hemisphere: bool):
    x, w = np.polynomial.legendre.leggauss(n)
    top = HALF_PI if hemisphere else np.pi
    theta = 0.5 * top * (x + 1.0)
    wt = 0.5 * top * w * np.sin(theta)
    if hemisphere:
        wt = 2.0 * wt
    return np.cos(theta), wt


def quadrature(region: Region | str, n_mu: int = 40, n_phi: int = 40, hemisphere: bool = False) -> QuadratureRule:
    """Tensor Gauss-Legendre rule over ``region``, built per quadrant.

    The polar rule is Gauss-Legendre in the polar angle (nodes ``mu = cos(theta)``)
    so the half-integer powers of ``1 - mu**2`` in odd monomials are integrated
    spectrally.  ``hemisphere=True`` folds the rule onto ``mu >= 0`` with doubled
    weights; it is exact only for integrands even in ``mu``, which holds for
    every z-independent quantity here.
    """
    region = region_from_name(region)
    if int(n_mu) < 2 or int(n_phi) < 2:
        raise ValueError("quadrature sizes must be >= 2")
    mu1, wmu = _polar_nodes(int(n_mu), bool(hemisphere))
    xa, wa = np.polynomial.legendre.leggauss(int(n_phi))
    mus, azs, ws = [], [], []
    for q in region.quadrants:
        a, b = q.azimuth_range
        az = a + 0.5 * (b - a) * (xa + 1.0)
        waz = 0.5 * (b - a) * wa
        M, A = np.meshgrid(mu1, az, indexing="ij")
        mus.append(M.ravel())
        azs.append(A.ravel())
        ws.append(np.outer(wmu, waz).ravel())
    return QuadratureRule(np.concatenate(mus), np.concatenate(azs), np.concatenate(ws), region)


def quarter_monomial_integral(ix: int, iy: int, q: Region | str) -> float:
    """Integral of ``omega_x**ix * omega_y**iy`` over quadrant ``q`` (beta-function form)."""
    q = region_from_name(q)
    if not q.is_quadrant:
        raise ValueError(f"{q} is not a quadrant")
    if ix < 0 or iy < 0:
        raise ValueError("powers must be non-negative")
    logval = betaln(0.5, 1.0 + 0.5 * (ix + iy)) + betaln(0.5 * (ix + 1), 0.5 * (iy + 1))
    sx, sy = q.signs
    return float(sx**ix * sy**iy * 0.5 * np.exp(logval))


def half_monomial_integral(k: int, h: Region | str) -> float:
    """Integral of the axis-aligned monomial ``omega_x**k`` (or ``omega_y**k``) over a half-space."""
    h = region_from_name(h)
    if h not in HALF_SPACES:
        raise ValueError(f"{h} is not a half-space")
    if k < 1:
        raise ValueError("k must be >= 1")
    sign = (-1.0) ** k if h in (Region.XM, Region.YM) else 1.0
    return sign * TWO_PI / (k + 1)


def region_monomial_integral(ix: int, iy: int, quadrants) -> float:
    return sum(quarter_monomial_integral(ix, iy, q) for q in quadrants)


def gram_matrix(kind: BasisKind) -> np.ndarray:
    """Exact ``<b b^T>`` over the sphere assembled from quarter integrals."""
    comps = basis_components(kind)
    n = len(comps)
    G = np.zeros((n, n))
    for a, (ia, ja, qa) in enumerate(comps):
        for b, (ib, jb, qb) in enumerate(comps):
            common = [q for q in qa if q in qb]
            G[a, b] = region_monomial_integral(ia + ib, ja + jb, common)
    return G


def basis_integral(kind: BasisKind) -> np.ndarray:
    """``<b>``, the moments of the constant density one."""
    return np.array([region_monomial_integral(i, j, qs) for i, j, qs in basis_components(kind)])


def isotropic_moments(kind: BasisKind, u00: float = 1.0) -> np.ndarray:
    b = basis_integral(kind)
    return u00 * b / b[0]
