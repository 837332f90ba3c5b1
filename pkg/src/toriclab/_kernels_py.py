"""Pure-numpy fallback for the compiled kernel (same contract as _ckernels)."""

import numpy as np


def apply_indexed_terms(psi, diag, perms, coefs, out):
    """out <- diag*psi + sum_t coefs[t] * psi[perms[t]]."""
    dim = psi.shape[0]
    if out.shape[0] != dim or diag.shape[0] != dim:
        raise ValueError("shape mismatch between psi, diag and out")
    if perms.shape[0] != coefs.shape[0]:
        raise ValueError("one coefficient per hop term required")
    np.multiply(diag, psi, out=out)
    for t in range(perms.shape[0]):
        c = coefs[t]
        if c == 0.0:
            continue
        out += c * psi[perms[t]]
