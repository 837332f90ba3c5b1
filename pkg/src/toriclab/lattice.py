"""Torus geometry for the edge-based toric code.

Spins live on the edges of a k x k square torus, so n = 2*k^2 spins.
Site indexing: horizontal edge (r, c) -> r*k + c, vertical edge
(r, c) -> k^2 + r*k + c, rows and columns mod k.  Horizontal edge (r, c)
joins vertices (r, c)-(r, c+1); vertical edge (r, c) joins (r, c)-(r+1, c).

Operators are n-bit masks: star A_s reads sigma^z parities on the four
edges at a vertex, plaquette B_p flips the four edges around a face.
Incontractible loop operators and the spin regions used for entanglement
cuts and Wilson loops are built from the same masks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class PauliMask:
    """A Pauli string: `sites` is an n-bit mask, axis 'x' flips, 'z' reads parity."""

    sites: int
    axis: str  # 'x' or 'z'

    def __post_init__(self):
        if self.axis not in ("x", "z"):
            raise LatticeError(f"axis must be 'x' or 'z', got {self.axis!r}")

    @property
    def weight(self) -> int:
        return self.sites.bit_count()

    def site_list(self) -> list[int]:
        return _bits(self.sites)


@dataclass(frozen=True)
class Region:
    """A set of spins (edge sites) used for entanglement cuts or Wilson blocks."""

    sites: int
    label: str
    faces: tuple[int, ...] = field(default=())

    @property
    def size(self) -> int:
        return self.sites.bit_count()

    def site_list(self) -> list[int]:
        return _bits(self.sites)


def _bits(mask: int) -> list[int]:
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return out


@dataclass(frozen=True)
class TorusLattice:
    """k x k torus with spins on the n = 2*k^2 edges."""

    k: int

    def __post_init__(self):
        if self.k < 2:
            raise LatticeError(f"torus needs k >= 2, got k={self.k}")

    @property
    def n(self) -> int:
        return 2 * self.k * self.k

    @property
    def n_faces(self) -> int:
        return self.k * self.k

    # ---- edge indexing ----
    def h_edge(self, r: int, c: int) -> int:
        """Horizontal edge from vertex (r, c) to (r, c+1)."""
        k = self.k
        return (r % k) * k + (c % k)

    def v_edge(self, r: int, c: int) -> int:
        """Vertical edge from vertex (r, c) to (r+1, c)."""
        k = self.k
        return k * k + (r % k) * k + (c % k)

    def edge_coords(self, site: int) -> tuple[int, int, str]:
        """Inverse of the edge indexing: site -> (row, col, orientation)."""
        if not 0 <= site < self.n:
            raise LatticeError(f"site {site} out of range [0, {self.n})")
        k = self.k
        if site < k * k:
            return site // k, site % k, "h"
        site -= k * k
        return site // k, site % k, "v"


def build_lattice(k: int) -> TorusLattice:
    """Construct the k x k torus (k=2,3,4 give n=8,18,32 spins)."""
    return TorusLattice(k)


def star_mask(lat: TorusLattice, s: int) -> PauliMask:
    """Star operator at vertex s = r*k + c: z-parity of the 4 incident edges."""
    if not 0 <= s < lat.n_faces:
        raise LatticeError(f"star index {s} out of range [0, {lat.n_faces})")
    r, c = divmod(s, lat.k)
    sites = (
        (1 << lat.h_edge(r, c))
        | (1 << lat.h_edge(r, c - 1))
        | (1 << lat.v_edge(r, c))
        | (1 << lat.v_edge(r - 1, c))
    )
    return PauliMask(sites, "z")


def plaq_mask(lat: TorusLattice, p: int) -> PauliMask:
    """Plaquette operator at face p = r*k + c: flips the 4 boundary edges."""
    if not 0 <= p < lat.n_faces:
        raise LatticeError(f"plaquette index {p} out of range [0, {lat.n_faces})")
    r, c = divmod(p, lat.k)
    sites = (
        (1 << lat.h_edge(r, c))
        | (1 << lat.h_edge(r + 1, c))
        | (1 << lat.v_edge(r, c))
        | (1 << lat.v_edge(r, c + 1))
    )
    return PauliMask(sites, "x")


LOOP_KINDS = ("t1x", "t2x", "z-cut-1", "z-cut-2")


def loop_mask(lat: TorusLattice, kind: str) -> PauliMask:
    """Incontractible loops and their conjugate winding-parity cuts.

    t1x / t2x flip a straight row of horizontal edges / column of vertical
    edges (x-type, length k).  z-cut-1 / z-cut-2 read the winding parities:
    each plaquette overlaps each cut evenly, while t1x anticommutes with
    z-cut-1 only and t2x with z-cut-2 only.
    """
    k = lat.k
    if kind == "t1x":
        sites = 0
        for c in range(k):
            sites |= 1 << lat.h_edge(0, c)
        return PauliMask(sites, "x")
    if kind == "t2x":
        sites = 0
        for r in range(k):
            sites |= 1 << lat.v_edge(r, 0)
        return PauliMask(sites, "x")
    if kind == "z-cut-1":
        sites = 0
        for r in range(k):
            sites |= 1 << lat.h_edge(r, 0)
        return PauliMask(sites, "z")
    if kind == "z-cut-2":
        sites = 0
        for c in range(k):
            sites |= 1 << lat.v_edge(0, c)
        return PauliMask(sites, "z")
    raise LatticeError(f"unknown loop kind {kind!r}, expected one of {LOOP_KINDS}")


# ---------------------------------------------------------------------------
# Entropy ring and Wilson blocks
# ---------------------------------------------------------------------------

def ring_edges(lat: TorusLattice, diameter: int = 2, anchor: tuple[int, int] = (0, 0)):
    """Boundary edges of a diameter x diameter block of faces, in cyclic order.

    The cyclic order walks the ring once: top edges left to right, right
    edges top to bottom, bottom edges right to left, left edges bottom to top.
    """
    r0, c0 = anchor
    d = diameter
    if d < 1 or d > lat.k - 1:
        raise LatticeError(
            f"ring diameter {d} does not fit a k={lat.k} torus without wrapping"
        )
    top = [lat.h_edge(r0, c0 + i) for i in range(d)]
    right = [lat.v_edge(r0 + i, c0 + d) for i in range(d)]
    bottom = [lat.h_edge(r0 + d, c0 + d - 1 - i) for i in range(d)]
    left = [lat.v_edge(r0 + d - 1 - i, c0) for i in range(d)]
    edges = top + right + bottom + left
    if len(set(edges)) != 4 * d:
        raise LatticeError("ring edges collide around the torus")
    return edges


RING_PARTITIONS = ("half", "opposite")


def ring_regions(lat: TorusLattice, diameter: int = 2,
                 partition: str = "half") -> dict[str, Region]:
    """The four entanglement cuts A, AB, AC, ABC on a ring of 4*diameter edges.

    ABC is the full ring.  With partition='half', A is one contiguous
    half-ring and B, C are the two remaining quarter-arcs; with
    partition='opposite', A is two opposite quarter-arcs and B, C the other
    two.  Which (diameter, partition) pair reproduces unit topological
    entropy on the exact string-condensed state is frozen by
    observables.calibrate_ring, not hardcoded here.
    """
    if lat.k < 3:
        raise LatticeError("entropy ring needs k >= 3 (n=8 torus is too small)")
    edges = ring_edges(lat, diameter)
    m = len(edges)
    q = m // 4
    if partition == "half":
        a_idx = list(range(2 * q))
        b_idx = list(range(2 * q, 3 * q))
        c_idx = list(range(3 * q, 4 * q))
    elif partition == "opposite":
        a_idx = list(range(q)) + list(range(2 * q, 3 * q))
        b_idx = list(range(q, 2 * q))
        c_idx = list(range(3 * q, 4 * q))
    else:
        raise LatticeError(f"unknown partition {partition!r}, expected {RING_PARTITIONS}")

    def mask(idxs):
        out = 0
        for i in idxs:
            out |= 1 << edges[i]
        return out

    a, b, c = mask(a_idx), mask(b_idx), mask(c_idx)
    return {
        "A": Region(a, "A"),
        "B": Region(b, "B"),
        "C": Region(c, "C"),
        "AB": Region(a | b, "AB"),
        "AC": Region(a | c, "AC"),
        "ABC": Region(a | b | c, "ABC"),
    }


def wilson_region(lat: TorusLattice, w: int, h: int, anchor: int = 0) -> Region:
    """A w x h block of faces; `sites` holds the x-mask (XOR of its plaquettes)."""
    if not (1 <= w <= lat.k and 1 <= h <= lat.k):
        raise LatticeError(f"wilson block {w}x{h} exceeds the k={lat.k} lattice")
    if not 0 <= anchor < lat.n_faces:
        raise LatticeError(f"anchor face {anchor} out of range")
    r0, c0 = divmod(anchor, lat.k)
    faces = []
    xmask = 0
    for dr in range(h):
        for dc in range(w):
            p = ((r0 + dr) % lat.k) * lat.k + (c0 + dc) % lat.k
            faces.append(p)
            xmask ^= plaq_mask(lat, p).sites
    return Region(xmask, f"wilson-{w}x{h}", faces=tuple(sorted(faces)))


# ---------------------------------------------------------------------------
# Debug dumps
# ---------------------------------------------------------------------------

def mask_dump(lat: TorusLattice) -> dict:
    """All masks and the default ring regions as site-index lists (JSON-ready)."""
    out = {
        "k": lat.k,
        "n": lat.n,
        "stars": [star_mask(lat, s).site_list() for s in range(lat.n_faces)],
        "plaquettes": [plaq_mask(lat, p).site_list() for p in range(lat.n_faces)],
        "loops": {kind: loop_mask(lat, kind).site_list() for kind in LOOP_KINDS},
    }
    if lat.k >= 3:
        regions = ring_regions(lat)
        out["ring"] = {name: reg.site_list() for name, reg in regions.items()}
    return out


def mask_dump_json(lat: TorusLattice, indent: int = 2) -> str:
    return json.dumps(mask_dump(lat), indent=indent)
