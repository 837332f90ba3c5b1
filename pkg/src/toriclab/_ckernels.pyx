# cython: boundscheck=False, wraparound=False, initializedcheck=False, language_level=3
"""Compiled hot kernel for matrix-free Hamiltonian application.

A Hamiltonian acting on an amplitude vector over an ordered basis is
represented as a real diagonal plus a list of off-diagonal "hop" terms,
each a permutation of basis indices (spin-flip pattern resolved to index
tables) with a real coefficient.  This is the inner loop of every Lanczos
iteration and every Runge-Kutta stage.
"""

ctypedef fused ampl:
    double
    double complex


def apply_indexed_terms(ampl[::1] psi, double[::1] diag,
                        int[:, ::1] perms, double[::1] coefs,
                        ampl[::1] out):
    """out <- diag*psi + sum_t coefs[t] * psi[perms[t]], fused single pass per term."""
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t nterms = perms.shape[0]
    cdef Py_ssize_t i, t
    cdef double c
    if out.shape[0] != dim or diag.shape[0] != dim:
        raise ValueError("shape mismatch between psi, diag and out")
    if nterms != coefs.shape[0]:
        raise ValueError("one coefficient per hop term required")
    for i in range(dim):
        out[i] = diag[i] * psi[i]
    for t in range(nterms):
        c = coefs[t]
        if c == 0.0:
            continue
        for i in range(dim):
            out[i] = out[i] + c * psi[perms[t, i]]
