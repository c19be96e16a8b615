"""Reciprocal space of the triangular light crystal.

Three lattice beams propagating in the x-y plane interfere to form a
triangular optical lattice. Pairwise differences of the beam wavevectors
span the reciprocal lattice, and the Wigner-Seitz cell of that lattice is
the hexagonal first Brillouin zone (FBZ): the rigid k-space coordinate
frame against which every wavevector measurement is calibrated.

All wavevectors are 2-vectors in m^-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import DEFAULT_WAVELENGTH

__all__ = [
    "BeamGeometry",
    "ReciprocalLattice",
    "build_reciprocal_lattice",
    "fold_to_fbz",
    "bragg_peak_positions",
    "bragg_peak_shells",
]

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BeamGeometry:
    """Lattice-beam layout: laser wavelength and the three in-plane propagation angles."""

    wavelength: float  # m
    beam_angles: tuple[float, float, float]  # rad, measured from +x

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        angles = tuple(float(a) for a in self.beam_angles)
        if len(angles) != 3:
            raise ValueError("exactly three beam angles required")
        for i in range(3):
            for j in range(i + 1, 3):
                if math.isclose(angles[i] % _TWO_PI, angles[j] % _TWO_PI,
                                abs_tol=1e-12):
                    raise ValueError(
                        f"beam angles {i} and {j} coincide modulo 2*pi")
        object.__setattr__(self, "beam_angles", angles)

    @classmethod
    def default(cls, wavelength: float = DEFAULT_WAVELENGTH) -> "BeamGeometry":
        """Three beams at mutual 120 degrees, one along +y."""
        deg = math.pi / 180.0
        return cls(wavelength, (90.0 * deg, 210.0 * deg, 330.0 * deg))

    def beam_wavevectors(self) -> np.ndarray:
        """(3, 2) array of beam wavevectors k_i = (2*pi/lambda)(cos, sin)."""
        k = _TWO_PI / self.wavelength
        return np.array([[k * math.cos(a), k * math.sin(a)]
                         for a in self.beam_angles])


@dataclass(frozen=True, eq=False)
class ReciprocalLattice:
    """Primitive reciprocal vectors b1, b2 and the FBZ hexagon they define."""

    b1: np.ndarray  # (2,) m^-1
    b2: np.ndarray  # (2,) m^-1
    fbz_vertices: np.ndarray = field(repr=False)  # (6, 2) m^-1, counterclockwise

    @property
    def cell_area(self) -> float:
        """Area of the reciprocal unit cell, |b1 x b2|."""
        return abs(float(self.b1[0] * self.b2[1] - self.b1[1] * self.b2[0]))

    @property
    def fbz_area(self) -> float:
        """Shoelace area of the FBZ polygon."""
        v = self.fbz_vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def b_norm(self) -> float:
        """Length of the shorter primitive vector (the k-space scale)."""
        return float(min(np.linalg.norm(self.b1), np.linalg.norm(self.b2)))

    def points(self, index_range: int) -> np.ndarray:
        """Reciprocal lattice points n*b1 + m*b2 for n, m in [-index_range, index_range]."""
        idx = np.arange(-index_range, index_range + 1)
        n, m = np.meshgrid(idx, idx, indexing="ij")
        return (n.reshape(-1, 1) * self.b1[None, :]
                + m.reshape(-1, 1) * self.b2[None, :])


def _clip_halfplane(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Sutherland-Hodgman clip of polygon against {p : p . normal <= offset}."""
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        da = float(np.dot(a, normal)) - offset
        db = float(np.dot(b, normal)) - offset
        if da <= 0:
            out.append(a)
            if db > 0:
                out.append(a + (b - a) * (da / (da - db)))
        elif db <= 0:
            out.append(a + (b - a) * (da / (da - db)))
    return np.array(out)


def _wigner_seitz_vertices(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """Vertices of the Wigner-Seitz cell at the origin, counterclockwise.

    Clips a large box by the perpendicular-bisector half-planes of every
    nonzero lattice point within two index shells; more than enough for any
    2D lattice.
    """
    neighbors = []
    for n in range(-2, 3):
        for m in range(-2, 3):
            if n == 0 and m == 0:
                continue
            neighbors.append(n * b1 + m * b2)
    neighbors = np.array(neighbors)
    scale = float(np.min(np.linalg.norm(neighbors, axis=1)))
    big = 4.0 * float(np.max(np.linalg.norm(neighbors, axis=1)))
    poly = np.array([[-big, -big], [big, -big], [big, big], [-big, big]])
    # Clip nearest planes first: keeps the polygon small for later planes.
    for g in sorted(neighbors, key=lambda v: float(np.dot(v, v))):
        poly = _clip_halfplane(poly, g, 0.5 * float(np.dot(g, g)))
        if len(poly) == 0:
            raise ValueError("degenerate lattice: Wigner-Seitz cell collapsed")
    # Merge consecutive near-duplicate vertices left by tangent planes.
    keep = []
    for p in poly:
        if not keep or np.linalg.norm(p - keep[-1]) > 1e-9 * scale:
            keep.append(p)
    if len(keep) > 1 and np.linalg.norm(keep[0] - keep[-1]) <= 1e-9 * scale:
        keep.pop()
    verts = np.array(keep)
    order = np.argsort(np.arctan2(verts[:, 1], verts[:, 0]))
    return verts[order]


def build_reciprocal_lattice(geom: BeamGeometry) -> ReciprocalLattice:
    """Construct the reciprocal lattice spanned by beam-wavevector differences.

    b1 = k1 - k2 and b2 = k2 - k3; for three beams at mutual 120 degrees
    both have length sqrt(3)*2*pi/lambda. Raises ValueError for collinear
    beams (differences linearly dependent).
    """
    k = geom.beam_wavevectors()
    b1 = k[0] - k[1]
    b2 = k[1] - k[2]
    cross = float(b1[0] * b2[1] - b1[1] * b2[0])
    scale = float(np.linalg.norm(b1) * np.linalg.norm(b2))
    if scale == 0 or abs(cross) < 1e-9 * scale:
        raise ValueError("degenerate beam geometry: reciprocal vectors are collinear")
    verts = _wigner_seitz_vertices(b1, b2)
    return ReciprocalLattice(b1=b1, b2=b2, fbz_vertices=verts)


def fold_to_fbz(q, lat: ReciprocalLattice) -> np.ndarray:
    """Reduce a wavevector into the closed first Brillouin zone.

    Returns q - G for the reciprocal lattice point G minimizing |q - G|.
    Boundary ties are broken by the lexicographically (x, then y) smallest
    folded result, which makes folding deterministic and idempotent.
    """
    q = np.asarray(q, dtype=float)
    basis = np.column_stack([lat.b1, lat.b2])
    frac = np.linalg.solve(basis, q)
    n0, m0 = np.rint(frac).astype(int)
    best_d2 = math.inf
    candidates = []
    for dn in range(-2, 3):
        for dm in range(-2, 3):
            g = (n0 + dn) * lat.b1 + (m0 + dm) * lat.b2
            r = q - g
            d2 = float(r @ r)
            candidates.append((d2, r))
            if d2 < best_d2:
                best_d2 = d2
    tol = 1e-12 * lat.b_norm ** 2
    best = None
    for d2, r in candidates:
        if d2 <= best_d2 + tol:
            if best is None or (r[0], r[1]) < (best[0], best[1]):
                best = r
    return best


def bragg_peak_shells(lat: ReciprocalLattice, shell_cutoff: int):
    """Reciprocal lattice points within `shell_cutoff` magnitude shells.

    Shell 0 is the origin, shell 1 the six nearest points, and so on by
    distinct |G|. Returns (points (n, 2), shell_index (n,)), sorted by
    shell then lexicographically.
    """
    if shell_cutoff < 0:
        raise ValueError("shell_cutoff must be >= 0")
    pts = lat.points(2 * (shell_cutoff + 1))
    mags = np.linalg.norm(pts, axis=1)
    order = np.argsort(mags, kind="stable")
    tol = 1e-9 * lat.b_norm
    shells = np.empty(len(pts), dtype=int)
    shell = -1
    last = -math.inf
    for i in order:
        if mags[i] > last + tol:
            shell += 1
            last = mags[i]
        shells[i] = shell
    mask = shells <= shell_cutoff
    pts, shells = pts[mask], shells[mask]
    key = np.lexsort((pts[:, 1], pts[:, 0], shells))
    return pts[key], shells[key]


def bragg_peak_positions(lat: ReciprocalLattice, q, shell_cutoff: int) -> np.ndarray:
    """Positions {G + q} of the matter wave's Bragg copies.

    Always includes q itself (G = 0); sorted by |G| then lexicographically.
    """
    q = np.asarray(q, dtype=float)
    pts, _ = bragg_peak_shells(lat, shell_cutoff)
    return pts + q[None, :]
