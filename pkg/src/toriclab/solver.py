"""Eigensolvers.

Ground and first-excited states of matrix-free hermitian operators come
from a seeded Lanczos iteration with full reorthogonalization (Krylov
dimensions here stay small enough to keep every basis vector).  The first
excited state is obtained by deflation: a second Lanczos run constrained
to the orthogonal complement of the converged ground state.  Convergence
is certified by the explicit residual norm ||H psi - E psi||.

Dense spectra (small matrices: reduced density matrices, the n=8 full
space) are delegated to LAPACK's symmetric solver via numpy.linalg.eigh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import enumerate_sector
from .lattice import TorusLattice
from .model import ModelParams, h0_action

DENSE_DIM_GUARD = 4096
DEGENERACY_TOL = 1e-8
_START_SEED = 0x5EED0_701  # fixed default start vector, bit-reproducible


class SolverError(RuntimeError):
    def __init__(self, message: str, best_residual: float | None = None):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass
class EigenResult:
    """Lowest eigenpairs with their certified residuals."""

    energies: np.ndarray
    states: list[np.ndarray]
    residuals: np.ndarray
    iterations: int
    degenerate: bool = False

    @property
    def gap(self) -> float:
        if len(self.energies) < 2:
            raise ValueError("gap needs two converged eigenpairs")
        return float(self.energies[1] - self.energies[0])


def default_start(dim: int) -> np.ndarray:
    """Fixed pseudo-random start vector used when no seed state is given."""
    rng = np.random.Generator(np.random.PCG64(_START_SEED))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _orthogonalize(w: np.ndarray, vecs: list[np.ndarray]) -> np.ndarray:
    for _ in range(2):  # two Gram-Schmidt passes
        for v in vecs:
            w -= (v @ w) * v
    return w


def _ritz_ground(alphas, betas):
    T = np.diag(alphas)
    if betas:
        T += np.diag(betas, 1) + np.diag(betas, -1)
    w, S = np.linalg.eigh(T)
    return w[0], S[:, 0]


def _lanczos_one(apply_h, dim: int, start: np.ndarray, tol: float,
                 max_iter: int, deflate: list[np.ndarray],
                 check_every: int = 5):
    """Converge the lowest eigenpair in the complement of `deflate`.

    The Krylov basis is kept and reorthogonalized in full; the Ritz
    residual estimate |beta_m s_m| is polled every few iterations and the
    returned pair always carries an explicitly verified residual.  If a
    cycle hits its length cap without converging, the iteration restarts
    from the current Ritz vector.
    """
    cycle_len = min(dim, 250)
    total_iters = 0
    best_res = np.inf
    q = start.astype(np.float64, copy=True)
    q = _orthogonalize(q, deflate)
    nrm = np.linalg.norm(q)
    if nrm < 1e-14:
        raise SolverError("start vector vanishes inside the deflated subspace")
    q /= nrm

    while total_iters < max_iter:
        V = [q]
        alphas: list[float] = []
        betas: list[float] = []
        r = apply_h(q)
        total_iters += 1
        a = float(q @ r)
        alphas.append(a)
        r = r - a * q
        r = _orthogonalize(r, deflate)
        exhausted = False
        while len(alphas) < cycle_len and total_iters < max_iter:
            b = float(np.linalg.norm(r))
            if b < 1e-13 * max(1.0, abs(alphas[0])):
                exhausted = True
                break
            qn = r / b
            qn = _orthogonalize(qn, V)
            nn = float(np.linalg.norm(qn))
            if nn < 1e-10:
                exhausted = True
                break
            qn /= nn
            V.append(qn)
            betas.append(b)
            r = apply_h(qn)
            total_iters += 1
            a = float(qn @ r)
            alphas.append(a)
            r = r - a * qn - b * V[-2]
            r = _orthogonalize(r, deflate)
            if len(alphas) % check_every == 0:
                _, s = _ritz_ground(alphas, betas)
                if float(np.linalg.norm(r)) * abs(float(s[-1])) < 0.3 * tol:
                    break

        _, s = _ritz_ground(alphas, betas)
        vec = np.zeros(dim)
        for i, v in enumerate(V):
            vec += s[i] * v
        vec = _orthogonalize(vec, deflate)
        vec /= np.linalg.norm(vec)
        hv = apply_h(vec)
        energy = float(vec @ hv)
        res = float(np.linalg.norm(hv - energy * vec))
        best_res = min(best_res, res)
        if res < tol or exhausted:
            return energy, vec, res, total_iters
        q = vec  # restart from the current Ritz vector

    raise SolverError(
        f"Lanczos did not reach residual {tol:g} in {max_iter} applications",
        best_residual=best_res,
    )


def lanczos_lowest(apply_h, dim: int, seed_vector=None, count: int = 1,
                   tol: float = 1e-10, max_iter: int = 4000,
                   engine: str = "lanczos", precond_block=None) -> EigenResult:
    """Lowest `count` (1 or 2) eigenpairs of a hermitian operator.

    `seed_vector` may be a single start vector, a (ground, excited) pair of
    start vectors, or None for the fixed default start.  Deterministic for
    identical inputs.  engine='lobpcg' swaps the Krylov inner loop for the
    diagonally preconditioned solver (same residual contract).
    """
    if dim < 1:
        raise ValueError("operator dimension must be >= 1")
    if count not in (1, 2):
        raise ValueError("count must be 1 or 2")
    seeds: list[np.ndarray | None] = [None, None]
    if seed_vector is not None:
        if isinstance(seed_vector, (tuple, list)):
            for i, s in enumerate(seed_vector[:2]):
                seeds[i] = s
        else:
            seeds[0] = seed_vector
    for s in seeds:
        if s is not None and np.linalg.norm(s) < 1e-14:
            raise SolverError("seed vector has zero norm")

    if dim == 1:
        e = float(apply_h(np.ones(1))[0])
        if count == 2:
            raise SolverError("cannot return two eigenpairs of a 1x1 operator")
        return EigenResult(np.array([e]), [np.ones(1)], np.array([0.0]), 1)

    start0 = seeds[0] if seeds[0] is not None else default_start(dim)
    e0, v0, r0, it0 = _ground_one(apply_h, dim, start0, tol, max_iter, [], engine,
                                  precond_block)
    if count == 1:
        return EigenResult(np.array([e0]), [v0], np.array([r0]), it0)

    start1 = seeds[1] if seeds[1] is not None else default_start(dim)
    e1, v1, r1, it1 = _ground_one(apply_h, dim, start1, tol, max_iter, [v0], engine,
                                  precond_block)
    return EigenResult(
        np.array([e0, e1]),
        [v0, v1],
        np.array([r0, r1]),
        it0 + it1,
        degenerate=(e1 - e0) < DEGENERACY_TOL,
    )


def _lobpcg_one(apply_h, dim: int, start: np.ndarray, tol: float,
                max_iter: int, deflate: list[np.ndarray], precond_block=None):
    """Preconditioned LOBPCG with restart cycles and verified residuals.

    The full-space spectrum is dominated by the star term: the diagonal
    spans O(U*k^2) while the gap is O(1), which stalls plain Krylov
    iterations.  The preconditioner is the shifted inverse diagonal
    (Jacobi), optionally upgraded on the gauge-invariant block to the
    Cholesky inverse of the dense block restriction (`precond_block` is
    an (indices, dense matrix) pair): the ground state lives almost
    entirely in that block, so this removes the remaining in-block
    stiffness as well.  LOBPCG tends to stagnate close to convergence, so
    the solve runs in short cycles, re-centering the shift on the current
    Ritz value.  Requires the operator to expose its diagonal
    (HamiltonianAction does).
    """
    import warnings

    from scipy.linalg import cho_factor, cho_solve
    from scipy.sparse.linalg import LinearOperator, lobpcg

    diag = getattr(apply_h, "diag", None)
    if diag is None:
        raise SolverError("preconditioned engine needs an operator with a diagonal")
    q = start.astype(np.float64, copy=True)
    q = _orthogonalize(q, deflate)
    nrm = np.linalg.norm(q)
    if nrm < 1e-14:
        raise SolverError("start vector vanishes inside the deflated subspace")
    q /= nrm
    hq = apply_h(q)
    sigma = float(q @ hq)
    res0 = float(np.linalg.norm(hq - sigma * q))
    iters = 1
    if res0 < tol:
        return sigma, q, res0, iters
    if res0 > 1.0:  # cold start: Rayleigh shift unreliable, anchor below the band
        sigma = float(diag.min()) - 1.0

    def matmat(block):
        if block.ndim == 1:
            return apply_h(np.ascontiguousarray(block))
        return np.column_stack(
            [apply_h(np.ascontiguousarray(block[:, j])) for j in range(block.shape[1])]
        )

    def make_precond(shift):
        jac = 1.0 / np.maximum(np.abs(diag - shift), 0.5)
        cho = None
        if precond_block is not None:
            idx, dense = precond_block
            # keep the shifted block positive definite; back off if the
            # shift overshoots the block's lowest eigenvalue
            margin = 0.25
            while cho is None:
                try:
                    cho = cho_factor(
                        dense - (shift - margin) * np.eye(dense.shape[0]),
                        lower=True, check_finite=False)
                except np.linalg.LinAlgError:
                    margin *= 4.0
                    if margin > 1e6:
                        raise SolverError("block preconditioner is not definite")

        def apply_m(v):
            if v.ndim == 2:
                return np.column_stack([apply_m(v[:, j]) for j in range(v.shape[1])])
            out = jac * v
            if cho is not None:
                out[idx] = cho_solve(cho, v[idx], check_finite=False)
            return out

        return LinearOperator((dim, dim), matvec=apply_m, matmat=apply_m,
                              dtype=np.float64)

    op_a = LinearOperator((dim, dim), matvec=matmat, matmat=matmat, dtype=np.float64)
    y = np.column_stack(deflate) if deflate else None
    best: tuple[float, np.ndarray, float] | None = None
    while iters < max_iter:
        op_m = make_precond(sigma)
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Exited")
            out = lobpcg(op_a, q[:, None], M=op_m, Y=y, tol=tol / 2,
                         maxiter=120, largest=False, retResidualNormsHistory=True)
        w, v_block = out[0], out[1]
        iters += 3 * len(out[-1])  # LOBPCG applies H to the (X, W, P) blocks
        vec = v_block[:, 0]
        vec = _orthogonalize(vec, deflate)
        vec /= np.linalg.norm(vec)
        hv = apply_h(vec)
        iters += 1
        energy = float(vec @ hv)
        res = float(np.linalg.norm(hv - energy * vec))
        if best is None or res < best[2]:
            best = (energy, vec, res)
        if res < tol:
            return energy, vec, res, iters
        q = vec
        sigma = energy
    raise SolverError(
        f"preconditioned solve stalled at residual {best[2]:.3e} (target {tol:g})",
        best_residual=best[2],
    )


ENGINES = ("lanczos", "lobpcg")


def _ground_one(apply_h, dim, start, tol, max_iter, deflate, engine: str,
                precond_block=None):
    if engine == "lanczos":
        return _lanczos_one(apply_h, dim, start, tol, max_iter, deflate)
    if engine == "lobpcg":
        return _lobpcg_one(apply_h, dim, start, tol, max_iter, deflate,
                           precond_block=precond_block)
    raise ValueError(f"unknown engine {engine!r}, expected one of {ENGINES}")


def lanczos_manifold(apply_h, dim: int, seed_vector=None, tol: float = 1e-10,
                     window: float = 1.2, max_states: int = 4,
                     ground: tuple[float, np.ndarray, float, int] | None = None,
                     engine: str = "lanczos") -> EigenResult:
    """Lowest states until the energy climbs more than `window` above E0.

    Used to resolve a near-degenerate ground manifold (the four winding
    branches under a perturbation) without resolving it one state at a
    time from outside.  `ground` may carry an already converged lowest
    pair (energy, state, residual, iterations) to avoid recomputing it.
    """
    if ground is None:
        start = seed_vector if seed_vector is not None else default_start(dim)
        ground = _ground_one(apply_h, dim, start, tol, 4000, [], engine)
    e0, v0, r0, iters = ground
    energies, states, residuals = [e0], [v0], [r0]
    while len(states) < min(max_states, dim):
        start = seed_vector if seed_vector is not None else default_start(dim)
        try:
            e, v, r, it = _ground_one(apply_h, dim, start, tol, 4000, states, engine)
        except SolverError:
            break
        if e - e0 > window:
            break
        energies.append(e)
        states.append(v)
        residuals.append(r)
        iters += it
    return EigenResult(np.array(energies), states, np.array(residuals), iters,
                       degenerate=len(states) > 1 and
                       (energies[1] - energies[0]) < DEGENERACY_TOL)


def branch_ground_state(apply_h, dim: int, prev: np.ndarray | None,
                        tol: float = 1e-10, window: float = 1.2,
                        mixing_detector=None, detector_threshold: float = 0.005,
                        engine: str = "lanczos"):
    """Adiabatically continued ground state.

    Returns the Lanczos ground state unless `mixing_detector` reports that
    it has hybridized across a near-degenerate ground manifold (winding
    sectors coupled by a perturbation).  In that case the manifold within
    `window` of E0 is resolved and the previous branch state is projected
    onto its span, which recovers the sector-pure adiabatic branch that a
    seeded low-precision iteration would have followed.
    """
    res = lanczos_lowest(apply_h, dim, seed_vector=prev, tol=tol, engine=engine)
    v0 = res.states[0]
    if prev is None:
        return v0, res
    overlap = float(prev @ v0)
    aligned = v0 if overlap >= 0 else -v0
    if mixing_detector is None or mixing_detector(v0) <= detector_threshold:
        return aligned, res
    res_m = lanczos_manifold(
        apply_h, dim, seed_vector=prev, tol=tol, window=window, engine=engine,
        ground=(float(res.energies[0]), v0, float(res.residuals[0]), res.iterations),
    )
    coeffs = np.array([v @ prev for v in res_m.states])
    proj = sum(c * v for c, v in zip(coeffs, res_m.states))
    nrm = float(np.linalg.norm(proj))
    if nrm < 0.5:  # prev points mostly outside the manifold: genuine state change
        return aligned, res_m
    return proj / nrm, res_m


def dense_symmetric_eig(matrix: np.ndarray, want_vectors: bool = True):
    """Full ascending spectrum of a hermitian matrix (LAPACK symmetric solver)."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("matrix must be square")
    if matrix.shape[0] > DENSE_DIM_GUARD:
        raise ValueError(
            f"dense solver guard: dimension <= {DENSE_DIM_GUARD}, got {matrix.shape[0]}"
        )
    scale = max(1.0, float(np.abs(matrix).max()))
    if np.abs(matrix - matrix.conj().T).max() > 1e-12 * scale:
        raise ValueError("matrix is not hermitian to 1e-12")
    if want_vectors:
        w, v = np.linalg.eigh(matrix)
        return w, v
    return np.linalg.eigvalsh(matrix), None


@dataclass
class GapSeries:
    taus: np.ndarray
    gaps: np.ndarray
    energies: np.ndarray  # shape (len(taus), 2)
    min_gap: float = field(init=False)
    argmin_tau: float = field(init=False)

    def __post_init__(self):
        i = int(np.argmin(self.gaps))
        self.min_gap = float(self.gaps[i])
        self.argmin_tau = float(self.taus[i])


def gap_series(lat: TorusLattice, sector: str, taus,
               params: ModelParams = ModelParams(), tol: float = 1e-10) -> GapSeries:
    """Delta(tau) = E1 - E0 within one sector, with seeded continuation."""
    basis = enumerate_sector(lat, sector)
    taus = np.asarray(taus, dtype=float)
    gaps = np.empty(len(taus))
    energies = np.empty((len(taus), 2))
    seed = None
    for i, tau in enumerate(taus):
        act = h0_action(params.at(float(tau)), basis)
        res = lanczos_lowest(act, basis.size, seed_vector=seed, count=2, tol=tol)
        gaps[i] = res.gap
        energies[i] = res.energies
        seed = (res.states[0], res.states[1])
    return GapSeries(taus, gaps, energies)
