"""Union Jack and triangular lattices with periodic boundary conditions.

A lattice is an immutable bundle of sites, triangles (the three-body
plaquettes), and the site -> incident-triangle tables the Monte Carlo
engine sweeps over.  Coordinates are stored in lattice units: Union Jack
corner sites sit at integer positions and center sites at half-integer
positions; triangular-lattice sites carry their (m, n) cell indices.
The first coordinate fixes the Fourier phases used for the wave-vector
susceptibility, with smallest nonzero wave vector k_min = 2*pi/L along x.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

COLOR_NAMES = ("A", "B", "C")


class LatticeKind(str, Enum):
    UNION_JACK = "union_jack"
    TRIANGULAR = "triangular"


class LatticeError(ValueError):
    """Raised for invalid lattice sizes."""


@dataclass(frozen=True)
class Site:
    """Read-only view of one lattice site."""

    id: int
    coords: tuple
    color: str
    coordination: int


@dataclass(frozen=True)
class Lattice:
    """Immutable lattice geometry plus flattened incidence tables.

    ``inc_tri[inc_ptr[s]:inc_ptr[s+1]]`` lists the triangles containing
    site ``s``; ``inc_nbr1``/``inc_nbr2`` hold, slot-aligned, the other
    two vertices of each of those triangles.  Safe to share read-only
    across any number of workers.
    """

    kind: LatticeKind
    L: int
    coords: np.ndarray  # (N, 2) float64
    colors: np.ndarray  # (N,) uint8; 0=A, 1=B, 2=C
    triangles: np.ndarray  # (N_tri, 3) int32
    inc_ptr: np.ndarray  # (N+1,) int64
    inc_tri: np.ndarray  # (3*N_tri,) int32
    inc_nbr1: np.ndarray  # (3*N_tri,) int32
    inc_nbr2: np.ndarray  # (3*N_tri,) int32

    @property
    def n_sites(self) -> int:
        return self.coords.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def coordination(self) -> np.ndarray:
        return np.diff(self.inc_ptr)

    @property
    def k_min(self) -> float:
        return 2.0 * np.pi / self.L

    @property
    def max_coordination(self) -> int:
        return int(self.coordination.max())

    def sites(self):
        """Iterate over Site views (introspection and validation only)."""
        coord = self.coordination
        for i in range(self.n_sites):
            yield Site(
                id=i,
                coords=(float(self.coords[i, 0]), float(self.coords[i, 1])),
                color=COLOR_NAMES[self.colors[i]],
                coordination=int(coord[i]),
            )

    def fourier_phases(self):
        """cos/sin of k_min * x per site, for the k=(2*pi/L, 0) sums."""
        arg = self.k_min * self.coords[:, 0]
        return np.cos(arg), np.sin(arg)


def _finalize(kind: LatticeKind, L: int, coords, colors, triangles) -> Lattice:
    """Build the flattened incidence tables and freeze the lattice."""
    n_sites = coords.shape[0]
    n_tri = triangles.shape[0]
    per_site = [[] for _ in range(n_sites)]
    for t in range(n_tri):
        i, j, k = triangles[t]
        per_site[i].append((t, j, k))
        per_site[j].append((t, i, k))
        per_site[k].append((t, i, j))
    inc_ptr = np.zeros(n_sites + 1, dtype=np.int64)
    for s in range(n_sites):
        inc_ptr[s + 1] = inc_ptr[s] + len(per_site[s])
    total = int(inc_ptr[-1])
    inc_tri = np.zeros(total, dtype=np.int32)
    inc_nbr1 = np.zeros(total, dtype=np.int32)
    inc_nbr2 = np.zeros(total, dtype=np.int32)
    for s in range(n_sites):
        for slot, (t, a, b) in enumerate(per_site[s]):
            inc_tri[inc_ptr[s] + slot] = t
            inc_nbr1[inc_ptr[s] + slot] = a
            inc_nbr2[inc_ptr[s] + slot] = b
    return Lattice(
        kind=kind,
        L=L,
        coords=coords,
        colors=colors,
        triangles=triangles,
        inc_ptr=inc_ptr,
        inc_tri=inc_tri,
        inc_nbr1=inc_nbr1,
        inc_nbr2=inc_nbr2,
    )


def build_union_jack(L: int) -> Lattice:
    """Union Jack lattice with L x L unit squares, periodic boundaries.

    Sites: L^2 corners at integer (x, y) plus L^2 centers at
    (x+1/2, y+1/2), ids row-major with corners first.  Each unit square
    contributes four triangles (its center with each adjacent corner
    pair), so there are 4 L^2 triangles; corners end up in 8 of them and
    centers in 4.  Corners are colored by checkerboard parity (A/B) and
    centers C, which needs L even to close periodically.
    """
    if L < 2 or L % 2 != 0:
        raise LatticeError(
            f"Union Jack size must be a positive even integer (the corner "
            f"checkerboard coloring does not close periodically otherwise); got L={L}"
        )
    n_corner = L * L

    def corner(x, y):
        return (y % L) * L + (x % L)

    def center(x, y):
        return n_corner + (y % L) * L + (x % L)

    coords = np.zeros((2 * n_corner, 2), dtype=np.float64)
    colors = np.zeros(2 * n_corner, dtype=np.uint8)
    for y in range(L):
        for x in range(L):
            coords[corner(x, y)] = (x, y)
            colors[corner(x, y)] = (x + y) % 2  # A/B checkerboard
            coords[center(x, y)] = (x + 0.5, y + 0.5)
            colors[center(x, y)] = 2  # C
    triangles = np.zeros((4 * n_corner, 3), dtype=np.int32)
    t = 0
    for y in range(L):
        for x in range(L):
            c = center(x, y)
            sw, se = corner(x, y), corner(x + 1, y)
            ne, nw = corner(x + 1, y + 1), corner(x, y + 1)
            for a, b in ((sw, se), (se, ne), (ne, nw), (nw, sw)):
                triangles[t] = (c, a, b)
                t += 1
    return _finalize(LatticeKind.UNION_JACK, L, coords, colors, triangles)


def build_triangular(L: int) -> Lattice:
    """Triangular lattice with L x L sites, periodic boundaries.

    Site (m, n) has id n*L + m and coordinates (m, n) in units of the
    primitive vectors.  Each cell contributes an up triangle
    {(m,n), (m+1,n), (m,n+1)} and a down triangle
    {(m+1,n), (m,n+1), (m+1,n+1)}; every site sits in six of them.
    The sublattice coloring (m + 2n) mod 3 needs L divisible by 3.
    """
    if L < 3 or L % 3 != 0:
        raise LatticeError(
            f"triangular size must be a positive multiple of 3 (the sublattice "
            f"three-coloring does not close periodically otherwise); got L={L}"
        )

    def site(m, n):
        return (n % L) * L + (m % L)

    n_sites = L * L
    coords = np.zeros((n_sites, 2), dtype=np.float64)
    colors = np.zeros(n_sites, dtype=np.uint8)
    for n in range(L):
        for m in range(L):
            coords[site(m, n)] = (m, n)
            colors[site(m, n)] = (m + 2 * n) % 3
    triangles = np.zeros((2 * n_sites, 3), dtype=np.int32)
    t = 0
    for n in range(L):
        for m in range(L):
            triangles[t] = (site(m, n), site(m + 1, n), site(m, n + 1))
            triangles[t + 1] = (site(m + 1, n), site(m, n + 1), site(m + 1, n + 1))
            t += 2
    return _finalize(LatticeKind.TRIANGULAR, L, coords, colors, triangles)


def build_lattice(kind, L: int) -> Lattice:
    kind = LatticeKind(kind)
    if kind is LatticeKind.UNION_JACK:
        return build_union_jack(L)
    return build_triangular(L)


PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "n/a"


@dataclass
class Check:
    status: str
    detail: str = ""


@dataclass
class ValidationReport:
    """Outcome of the structural lattice checks, one entry per check."""

    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.status != FAIL for c in self.checks.values())

    def summary(self) -> str:
        return "\n".join(
            f"{name}: {c.status}" + (f" ({c.detail})" if c.detail else "")
            for name, c in self.checks.items()
        )


def verify_lattice(lat: Lattice) -> ValidationReport:
    """Run the structural checks: three-coloring, coordination histogram,
    incidence identities, and (Union Jack only) that every site touches a
    multiple-of-four number of triangles."""
    report = ValidationReport()

    bad = 0
    for t in range(lat.n_triangles):
        tri = lat.triangles[t]
        if len(set(int(v) for v in tri)) != 3 or set(int(lat.colors[v]) for v in tri) != {0, 1, 2}:
            bad += 1
    report.checks["three_coloring"] = Check(
        PASS if bad == 0 else FAIL,
        "every triangle has three distinct vertices, one of each color"
        if bad == 0
        else f"{bad} triangles violate the coloring",
    )

    coord = lat.coordination
    hist = {int(k): int(v) for k, v in zip(*np.unique(coord, return_counts=True))}
    if lat.kind is LatticeKind.UNION_JACK:
        expected = {4: lat.L**2, 8: lat.L**2}
    else:
        expected = {6: lat.L**2}
    report.checks["coordination_histogram"] = Check(
        PASS if hist == expected else FAIL, f"observed {hist}, expected {expected}"
    )

    inc_sum = int(coord.sum())
    report.checks["incidence_sum"] = Check(
        PASS if inc_sum == 3 * lat.n_triangles else FAIL,
        f"sum of incidence counts {inc_sum} vs 3*N_tri = {3 * lat.n_triangles}",
    )

    consistent = True
    for s in range(lat.n_sites):
        for j in range(lat.inc_ptr[s], lat.inc_ptr[s + 1]):
            if s not in lat.triangles[lat.inc_tri[j]]:
                consistent = False
    for t in range(lat.n_triangles):
        for v in lat.triangles[t]:
            row = lat.inc_tri[lat.inc_ptr[v] : lat.inc_ptr[v + 1]]
            if t not in row:
                consistent = False
    report.checks["incidence_consistency"] = Check(
        PASS if consistent else FAIL, "site <-> triangle membership tables agree"
    )

    if lat.kind is LatticeKind.UNION_JACK:
        ok = bool(np.all(coord % 4 == 0))
        report.checks["coordination_multiple_of_four"] = Check(
            PASS if ok else FAIL,
            "every site touches a multiple-of-four number of triangles",
        )
    else:
        report.checks["coordination_multiple_of_four"] = Check(
            NOT_APPLICABLE, "only meaningful on the Union Jack lattice"
        )
    return report


def lattice_to_json(lat: Lattice) -> str:
    """Canonical JSON dump (debugging, reference computations, hashing)."""
    doc = {
        "kind": lat.kind.value,
        "L": lat.L,
        "sites": [
            {
                "id": i,
                "x": float(lat.coords[i, 0]),
                "y": float(lat.coords[i, 1]),
                "color": COLOR_NAMES[lat.colors[i]],
            }
            for i in range(lat.n_sites)
        ],
        "triangles": [[int(v) for v in tri] for tri in lat.triangles],
    }
    return json.dumps(doc, separators=(",", ":"), sort_keys=True)


def lattice_hash(lat: Lattice) -> str:
    """SHA-256 of the canonical JSON dump, used by checkpoint integrity checks."""
    return hashlib.sha256(lattice_to_json(lat).encode("utf-8")).hexdigest()
