"""Pure-numpy tensor kernels.

Reference implementation of the hot contractions. The compiled module
``_ckernels`` exposes the same functions with the same index conventions
and is preferred when it is importable.

Index conventions (row-major):

``dg[k, i, j]``        partial_k g_ij
``gamma[k, i, j]``     Gamma^k_ij
``dgamma[m, k, i, j]`` partial_m Gamma^k_ij
``riem[i, j, k, l]``   R^i_jkl
"""

import numpy as np


def christoffel_from_derivs(ginv, dg):
    # lowered symbols Gamma_{l,ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    low = 0.5 * (np.transpose(dg, (2, 0, 1)) + np.transpose(dg, (2, 1, 0)) - dg)
    gamma = np.einsum("kl,lij->kij", ginv, low)
    # exact symmetry in the lower pair
    return 0.5 * (gamma + np.transpose(gamma, (0, 2, 1)))


def riemann_from_christoffel(gamma, dgamma):
    # R^i_jkl = d_k G^i_lj - d_l G^i_kj + G^i_km G^m_lj - G^i_lm G^m_kj
    d = np.transpose(dgamma, (1, 3, 0, 2))  # [i, j, k, l] = d_k Gamma^i_lj
    quad = np.einsum("ikm,mlj->ijkl", gamma, gamma)
    return d - np.transpose(d, (0, 1, 3, 2)) + quad - np.transpose(quad, (0, 1, 3, 2))


def quadratic_contract(gamma, v):
    return np.einsum("kij,i,j->k", gamma, v, v)


def bilinear_contract(gamma, v, w):
    return np.einsum("kij,i,j->k", gamma, v, w)


def tidal_matrix(riem, v):
    return np.einsum("ikjl,k,l->ij", riem, v, v)


def inspect_metric(g, sym_tol, deg_thresh):
    """Return ``(code, det)``; code 0 ok, 1 non-finite, 2 non-symmetric, 3 degenerate."""
    if not np.all(np.isfinite(g)):
        return 1, float("nan")
    scale = float(np.max(np.abs(g))) if g.size else 0.0
    if np.max(np.abs(g - g.T)) > sym_tol * max(1.0, scale):
        return 2, float("nan")
    if scale == 0.0:
        return 3, 0.0
    det = float(np.linalg.det(g))
    if abs(det) <= deg_thresh * scale ** g.shape[0]:
        return 3, det
    return 0, det


def invert(g):
    return np.linalg.inv(g)


def geodesic_spray(ginv, dg, v):
    low = np.einsum("ijl,i,j->l", dg, v, v) - 0.5 * np.einsum("lij,i,j->l", dg, v, v)
    return ginv @ low
