"""Matrix-free Hamiltonians.

The interpolating model on the edge torus is

    H0(tau) = -U sum_s A_s - tau*g sum_p B_p - (1-tau)*xi sum_j sigma^z_j,

with |0> the sigma^z = +1 eigenstate, so the vacuum is the tau=0 ground
state.  The perturbed model adds random fields sum_j (hx_j sigma^x_j +
hz_j sigma^z_j) and lives in the full basis.  A 2D transverse-field Ising
model on an L x L vertex torus serves as the no-topological-order control.

Every Hamiltonian is applied via one diagonal vector plus hop terms
(index-permutation tables with real coefficients); no matrix is stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import SectorBasis
from .kernels import apply_indexed_terms
from .lattice import TorusLattice, plaq_mask, star_mask

PERTURBED_MAX_SPINS = 18  # full-space perturbed work stops at n=18
ISING_MAX_SPINS = 18

_EMPTY_PERMS = np.zeros((0, 0), dtype=np.int32)
_EMPTY_COEFS = np.zeros(0, dtype=np.float64)


@dataclass(frozen=True)
class ModelParams:
    """Couplings of the interpolating model plus the schedule variable tau."""

    U: float = 100.0
    g: float = 1.0
    xi: float = 1.0
    tau: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.U <= 0 or self.g <= 0 or self.xi <= 0:
            raise ValueError("couplings U, g, xi must be positive")

    @property
    def lam(self) -> float:
        """Fluctuation/tension ratio tau*g / ((1-tau)*xi); inf at tau=1."""
        if self.tau == 1.0:
            return float("inf")
        return self.tau * self.g / ((1.0 - self.tau) * self.xi)

    def at(self, tau: float) -> "ModelParams":
        return ModelParams(self.U, self.g, self.xi, tau)

    def to_dict(self) -> dict:
        return {"U": self.U, "g": self.g, "xi": self.xi, "tau": self.tau}


@dataclass(frozen=True)
class PerturbationField:
    """Random per-site fields; hx bounded by P, hz by 0.2 (or identically 0)."""

    hx: np.ndarray
    hz: np.ndarray
    P: float
    hz_mode: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "P": self.P,
            "hz_mode": self.hz_mode,
            "seed": self.seed,
            "hx": self.hx.tolist(),
            "hz": self.hz.tolist(),
        }

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.hx) or np.any(self.hz))


HZ_MODES = ("zero", "uniform02")
HZ_BOUND = 0.2


def sample_field(lat: TorusLattice, P: float, hz_mode: str = "zero",
                 seed: int | np.random.SeedSequence = 0) -> PerturbationField:
    """Draw a perturbation realization; deterministic given the seed.

    Uses a PCG64 generator; hx is drawn first (n uniforms in [-P, P]),
    then hz (n uniforms in [-0.2, 0.2] for 'uniform02', else zeros).
    """
    if P < 0:
        raise ValueError("perturbation amplitude P must be >= 0")
    if hz_mode not in HZ_MODES:
        raise ValueError(f"hz_mode must be one of {HZ_MODES}")
    rng = np.random.Generator(np.random.PCG64(seed))
    hx = rng.uniform(-P, P, lat.n) if P > 0 else np.zeros(lat.n)
    if hz_mode == "uniform02":
        hz = rng.uniform(-HZ_BOUND, HZ_BOUND, lat.n)
    else:
        hz = np.zeros(lat.n)
    seed_int = seed if isinstance(seed, int) else -1
    return PerturbationField(hx=hx, hz=hz, P=P, hz_mode=hz_mode, seed=seed_int)


class HamiltonianAction:
    """Callable psi -> H psi at one fixed parameter point."""

    def __init__(self, diag: np.ndarray, perms: np.ndarray, coefs: np.ndarray):
        self.diag = np.ascontiguousarray(diag, dtype=np.float64)
        self.perms = np.ascontiguousarray(perms, dtype=np.int32)
        self.coefs = np.ascontiguousarray(coefs, dtype=np.float64)
        self.dim = self.diag.shape[0]

    def __call__(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if psi.shape != (self.dim,):
            raise ValueError(f"state has dim {psi.shape}, operator needs ({self.dim},)")
        psi = np.ascontiguousarray(psi)
        if out is None:
            out = np.empty_like(psi)
        apply_indexed_terms(psi, self.diag, self.perms, self.coefs, out)
        return out


# ---------------------------------------------------------------------------
# diagonal pieces (cached per basis)
# ---------------------------------------------------------------------------

def _star_sum(basis: SectorBasis) -> np.ndarray:
    """sum_s <A_s> per configuration (constant k^2 inside gauge sectors)."""
    cache = getattr(basis, "_star_sum", None)
    if cache is not None:
        return cache
    lat = basis.lattice
    if basis.sector != "full":
        out = np.full(basis.size, float(lat.n_faces))
    else:
        out = np.zeros(basis.size)
        for s in range(lat.n_faces):
            par = np.bitwise_count(
                basis.configs & np.uint64(star_mask(lat, s).sites)
            ).astype(np.float64) % 2.0
            out += 1.0 - 2.0 * par
    basis._star_sum = out
    return out


def _z_sum(basis: SectorBasis) -> np.ndarray:
    """sum_j <sigma^z_j> per configuration = n - 2 popcount."""
    return basis.n - 2.0 * basis.popcounts()


def _site_field_diagonal(basis: SectorBasis, hz: np.ndarray) -> np.ndarray:
    out = np.zeros(basis.size)
    for j in np.nonzero(hz)[0]:
        bit = ((basis.configs >> np.uint64(j)) & np.uint64(1)).astype(np.float64)
        out += hz[j] * (1.0 - 2.0 * bit)
    return out


def _plaquette_perms(basis: SectorBasis) -> np.ndarray:
    lat = basis.lattice
    tables = [basis.flip_table(plaq_mask(lat, p).sites) for p in range(lat.n_faces)]
    return np.stack(tables)


def h0_action(params: ModelParams, basis: SectorBasis) -> HamiltonianAction:
    """H0(tau) on any sector (stars and plaquettes preserve them all)."""
    diag = -params.U * _star_sum(basis) - (1.0 - params.tau) * params.xi * _z_sum(basis)
    perms = _plaquette_perms(basis)
    coefs = np.full(perms.shape[0], -params.tau * params.g)
    return HamiltonianAction(diag, perms, coefs)


def perturbed_action(params: ModelParams, field: PerturbationField,
                     basis: SectorBasis) -> HamiltonianAction:
    """H0(tau) + sum_j (hx_j sigma^x_j + hz_j sigma^z_j) on the full basis."""
    if np.any(field.hx) and basis.sector != "full":
        raise ValueError(
            "x-type perturbations break the star symmetry; use the full basis"
        )
    if basis.n > PERTURBED_MAX_SPINS:
        raise ValueError(
            f"perturbed model guard: n <= {PERTURBED_MAX_SPINS}, got n={basis.n}"
        )
    diag = -params.U * _star_sum(basis) - (1.0 - params.tau) * params.xi * _z_sum(basis)
    if np.any(field.hz):
        diag = diag + _site_field_diagonal(basis, field.hz)
    perms = [_plaquette_perms(basis)]
    coefs = [np.full(basis.lattice.n_faces, -params.tau * params.g)]
    active = np.nonzero(field.hx)[0]
    if active.size:
        perms.append(np.stack([basis.flip_table(1 << int(j)) for j in active]))
        coefs.append(field.hx[active])
    return HamiltonianAction(diag, np.concatenate(perms), np.concatenate(coefs))


# ---------------------------------------------------------------------------
# spec-shaped single-application wrappers
# ---------------------------------------------------------------------------

def apply_h0(params: ModelParams, basis: SectorBasis, psi: np.ndarray) -> np.ndarray:
    return h0_action(params, basis)(psi)


def apply_perturbed(params: ModelParams, field: PerturbationField,
                    basis: SectorBasis, psi: np.ndarray) -> np.ndarray:
    return perturbed_action(params, field, basis)(psi)


# ---------------------------------------------------------------------------
# transverse-field Ising control model (spins on vertices)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsingLattice:
    """L x L vertex torus for the symmetry-breaking control model."""

    L: int

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("Ising torus needs L >= 2")

    @property
    def m(self) -> int:
        return self.L * self.L

    def site(self, r: int, c: int) -> int:
        return (r % self.L) * self.L + (c % self.L)

    def bonds(self) -> list[tuple[int, int]]:
        out = []
        for r in range(self.L):
            for c in range(self.L):
                out.append((self.site(r, c), self.site(r, c + 1)))
                out.append((self.site(r, c), self.site(r + 1, c)))
        return out

    def block_sites(self) -> list[int]:
        """2 x 2 vertex block used for the block entropy."""
        return [self.site(0, 0), self.site(0, 1), self.site(1, 0), self.site(1, 1)]

    def ring_sites(self) -> list[int]:
        """Eight vertices of a 3 x 3 block minus its center, in cyclic order."""
        if self.L < 4:
            raise ValueError("vertex ring needs L >= 4 to avoid wrapping")
        s = self.site
        return [s(0, 0), s(0, 1), s(0, 2), s(1, 2), s(2, 2), s(2, 1), s(2, 0), s(1, 0)]


def ising_basis(ising: IsingLattice) -> SectorBasis:
    if ising.m > ISING_MAX_SPINS:
        raise ValueError(f"Ising guard: m <= {ISING_MAX_SPINS}, got m={ising.m}")
    return SectorBasis(ising.m, "full", np.arange(1 << ising.m, dtype=np.uint64))


def ising_action(j_coupling: float, h_field: float, ising: IsingLattice,
                 basis: SectorBasis) -> HamiltonianAction:
    """H = -J sum_<uv> sigma^z_u sigma^z_v - h sum_u sigma^x_u."""
    cache = getattr(basis, "_ising_zz", None)
    if cache is None:
        cache = np.zeros(basis.size)
        for (u, w) in ising.bonds():
            su = 1.0 - 2.0 * ((basis.configs >> np.uint64(u)) & np.uint64(1)).astype(float)
            sw = 1.0 - 2.0 * ((basis.configs >> np.uint64(w)) & np.uint64(1)).astype(float)
            cache += su * sw
        basis._ising_zz = cache
    diag = -j_coupling * cache
    if h_field == 0.0:
        return HamiltonianAction(diag, _EMPTY_PERMS, _EMPTY_COEFS)
    perms = np.stack([basis.flip_table(1 << j) for j in range(ising.m)])
    coefs = np.full(ising.m, -h_field)
    return HamiltonianAction(diag, perms, coefs)


def apply_ising(j_coupling: float, h_field: float, ising: IsingLattice,
                psi: np.ndarray, basis: SectorBasis | None = None) -> np.ndarray:
    if basis is None:
        basis = ising_basis(ising)
    return ising_action(j_coupling, h_field, ising, basis)(psi)


def gauge_block_matrix(params: ModelParams, gauge_basis: SectorBasis) -> np.ndarray:
    """Dense H0(tau) restricted to the gauge-invariant block.

    Used as the core of a block preconditioner for full-space solves: the
    perturbed ground state lives almost entirely in this block (x fields
    leave it only through O(hx/4U) charge-pair dressing), and the block is
    small (2^(k^2+1) configurations).
    """
    lat = gauge_basis.lattice
    g = gauge_basis.size
    block = np.zeros((g, g))
    rows = np.arange(g)
    block[rows, rows] = -params.U * lat.n_faces - \
        (1.0 - params.tau) * params.xi * _z_sum(gauge_basis)
    for p in range(lat.n_faces):
        table = gauge_basis.flip_table(plaq_mask(lat, p).sites)
        block[rows, table] += -params.tau * params.g
    return block
