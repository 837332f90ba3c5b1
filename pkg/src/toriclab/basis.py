"""Hilbert-space bases: full, gauge-invariant, and winding sectors.

A spin configuration is an n-bit integer; bit j = 1 means spin j is
flipped from |0>.  The gauge-invariant subspace (all star parities even)
splits into four winding sectors labelled by the loop parities read off
the two z-cuts.  winding(0,0) is the XOR orbit of the vacuum under the
plaquette group and has size 2^(k^2-1); the other sectors are its images
under the incontractible loops t1x, t2x.
"""

from __future__ import annotations

import numpy as np

from .lattice import TorusLattice, loop_mask, plaq_mask, star_mask

FULL_SPACE_MAX_SPINS = 26  # memory guard for 2^n enumeration
SECTORS = ("full", "gauge", "winding00", "winding01", "winding10", "winding11")


class CapacityError(MemoryError):
    pass


class SectorBasis:
    """Ordered configuration list spanning one symmetry sector.

    Configurations are stored ascending in a uint64 array, so index lookup
    is a binary search.  Flip-permutation tables (index image of config XOR
    mask) are built on demand and cached; they are the hop tables consumed
    by the matvec kernel.
    """

    def __init__(self, n: int, sector: str, configs: np.ndarray,
                 lattice: TorusLattice | None = None):
        self.n = n
        self.sector = sector
        self.configs = configs
        self.lattice = lattice
        self._flip_tables: dict[int, np.ndarray] = {}
        self._popcounts: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.configs.shape[0])

    def index_of(self, config: int) -> int:
        """Position of a configuration; raises KeyError if not in the sector."""
        i = int(np.searchsorted(self.configs, np.uint64(config)))
        if i == self.size or int(self.configs[i]) != config:
            raise KeyError(f"config {config:#x} not in sector {self.sector}")
        return i

    def __contains__(self, config: int) -> bool:
        i = int(np.searchsorted(self.configs, np.uint64(config)))
        return i < self.size and int(self.configs[i]) == config

    def popcounts(self) -> np.ndarray:
        if self._popcounts is None:
            self._popcounts = np.bitwise_count(self.configs).astype(np.float64)
        return self._popcounts

    def flip_table(self, mask: int) -> np.ndarray:
        """int32 index table: i -> index of configs[i] XOR mask.

        The mask must map the sector into itself (plaquette masks do for
        every sector; single-site flips only for the full basis).
        """
        table = self._flip_tables.get(mask)
        if table is None:
            flipped = self.configs ^ np.uint64(mask)
            if self.sector == "full":
                table = flipped.astype(np.int32)
            else:
                table = np.searchsorted(self.configs, flipped).astype(np.int32)
                if not np.array_equal(self.configs[table], flipped):
                    raise ValueError(
                        f"mask {mask:#x} does not preserve sector {self.sector}"
                    )
            self._flip_tables[mask] = table
        return table

    def embed(self, psi: np.ndarray) -> np.ndarray:
        """Amplitudes over this sector -> full 2^n vector (memory-guarded)."""
        n = self.n
        if n > FULL_SPACE_MAX_SPINS:
            raise CapacityError(
                f"embedding needs 2^{n} amplitudes; guard is n <= {FULL_SPACE_MAX_SPINS}"
            )
        full = np.zeros(1 << n, dtype=psi.dtype)
        full[self.configs.astype(np.int64)] = psi
        return full


def _winding00_orbit(lat: TorusLattice) -> np.ndarray:
    """XOR closure of the vacuum under k^2-1 independent plaquette generators.

    Dropping one plaquette removes the single product relation, so the
    closure has exactly 2^(k^2-1) elements and costs O(size * k^2).
    """
    gens = [plaq_mask(lat, p).sites for p in range(lat.n_faces - 1)]
    configs = np.zeros(1, dtype=np.uint64)
    for g in gens:
        configs = np.concatenate([configs, configs ^ np.uint64(g)])
    configs.sort()
    return configs


def enumerate_sector(lat: TorusLattice, sector: str) -> SectorBasis:
    """Build the ordered basis of one symmetry sector."""
    if sector not in SECTORS:
        raise ValueError(f"unknown sector {sector!r}, expected one of {SECTORS}")
    if sector == "full":
        if lat.n > FULL_SPACE_MAX_SPINS:
            raise CapacityError(
                f"full basis needs 2^{lat.n} configs; guard is n <= {FULL_SPACE_MAX_SPINS}"
            )
        configs = np.arange(1 << lat.n, dtype=np.uint64)
        return SectorBasis(lat.n, sector, configs, lattice=lat)

    base = _winding00_orbit(lat)
    if sector == "winding00":
        return SectorBasis(lat.n, sector, base, lattice=lat)

    t1 = np.uint64(loop_mask(lat, "t1x").sites)
    t2 = np.uint64(loop_mask(lat, "t2x").sites)
    if sector == "gauge":
        configs = np.concatenate([base, base ^ t1, base ^ t2, base ^ t1 ^ t2])
        configs.sort()
        return SectorBasis(lat.n, sector, configs, lattice=lat)
    i, j = int(sector[-2]), int(sector[-1])
    configs = base.copy()
    if i:
        configs ^= t1
    if j:
        configs ^= t2
    configs.sort()
    return SectorBasis(lat.n, sector, configs, lattice=lat)


def sector_mixing_detector(basis: SectorBasis):
    """Detector for winding-sector mixing of a full-basis state.

    Returns max_ij |<v| t1^i t2^j |v>| over the three nontrivial loop
    translations; this vanishes for sector-pure states and is O(1) for
    sector cats.  None for sector-restricted bases (nothing can mix).
    """
    if basis.sector != "full" or basis.lattice is None:
        return None
    lat = basis.lattice
    t1 = loop_mask(lat, "t1x").sites
    t2 = loop_mask(lat, "t2x").sites
    tables = [basis.flip_table(t1), basis.flip_table(t2), basis.flip_table(t1 ^ t2)]

    def detector(v: np.ndarray) -> float:
        return max(float(abs(np.vdot(v, v[t]))) for t in tables)

    return detector


def classify(lat: TorusLattice, config: int) -> str:
    """Sector of a configuration: winding(i,j) if gauge-invariant, else 'full only'."""
    if not 0 <= config < (1 << lat.n):
        raise ValueError(f"config {config} out of range for n={lat.n}")
    for s in range(lat.n_faces):
        if (config & star_mask(lat, s).sites).bit_count() % 2:
            return "full only"
    i = (config & loop_mask(lat, "z-cut-1").sites).bit_count() % 2
    j = (config & loop_mask(lat, "z-cut-2").sites).bit_count() % 2
    return f"winding{i}{j}"
