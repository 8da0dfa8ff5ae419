"""Pure-numpy element kernels: the fallback backend for assembly.

All kernels consume per-element geometry arrays plus coefficient samples at
the quadrature points and return dense per-element blocks. The quadrature
weights are uniform (area / n_qp), matching the symmetric midpoint rule.
"""

import numpy as np

BACKEND_NAME = "python"


def stiffness_blocks(grads: np.ndarray, areas: np.ndarray, amat: np.ndarray) -> np.ndarray:
    """K_e[i,j] = w sum_q grad_i . A_q grad_j; amat has shape (nt, q, 3, 3)."""
    q = amat.shape[1]
    w = areas / q
    return np.einsum("t,tia,tqab,tjb->tij", w, grads, amat, grads, optimize=True)


def convection_blocks(
    grads: np.ndarray, areas: np.ndarray, phi: np.ndarray, bvec: np.ndarray
) -> np.ndarray:
    """G_e[i,j] = w sum_q phi_j(q) (b_q . grad_i); bvec has shape (nt, q, 3)."""
    q = bvec.shape[1]
    w = areas / q
    return np.einsum("t,qj,tqa,tia->tij", w, phi, bvec, grads, optimize=True)


def mass_blocks(areas: np.ndarray, phi: np.ndarray, dvals: np.ndarray) -> np.ndarray:
    """M_e[i,j] = w sum_q d_q phi_i(q) phi_j(q); dvals has shape (nt, q)."""
    q = dvals.shape[1]
    w = areas / q
    return np.einsum("t,tq,qi,qj->tij", w, dvals, phi, phi, optimize=True)


def load_entries(areas: np.ndarray, phi: np.ndarray, fvals: np.ndarray) -> np.ndarray:
    """l_e[i] = w sum_q f_q phi_i(q)."""
    q = fvals.shape[1]
    w = areas / q
    return np.einsum("t,tq,qi->ti", w, fvals, phi, optimize=True)


def load_div_entries(grads: np.ndarray, areas: np.ndarray, fvec: np.ndarray) -> np.ndarray:
    """l_e[i] = -w sum_q F_q . grad_i (divergence-form right-hand side)."""
    q = fvec.shape[1]
    w = areas / q
    return -np.einsum("t,tqa,tia->ti", w, fvec, grads, optimize=True)


def power_sum(areas: np.ndarray, vals: np.ndarray, p: float) -> float:
    """sum_t w sum_q |v_{t,q}|^p (the L^p integrand accumulator)."""
    q = vals.shape[1]
    w = areas / q
    if p == 2.0:
        return float(np.einsum("t,tq,tq->", w, vals, vals))
    return float(np.einsum("t,tq->", w, np.abs(vals) ** p))
