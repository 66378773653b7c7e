"""Pure-numpy batch kernels (fallback path, also the reference semantics).

Shapes: Bhat (E, G, 4, 12) maps element nodal displacements to the flattened
deformation-gradient increment per quadrature point, wdetJ (E, G) are
quadrature weights times Jacobian determinants, Fcol (E, G, 4) holds
[F11, F12, F21, F22].
"""

import numpy as np

_I4 = np.array([1.0, 0.0, 0.0, 1.0])


def def_grads(Bhat, ue):
    """Deformation gradients at all quadrature points, F = I + du/dX."""
    return _I4 + np.einsum("egcd,ed->egc", Bhat, ue)


def psi_batch(Fcol, c1, c2, k):
    """Energy density per quadrature point and the minimum Jacobian."""
    F11, F12, F21, F22 = Fcol[..., 0], Fcol[..., 1], Fcol[..., 2], Fcol[..., 3]
    J = F11 * F22 - F12 * F21
    minJ = float(np.min(J)) if J.size else 1.0
    if minJ <= 0.0:
        return np.zeros(Fcol.shape[:-1]), minJ
    e = F11 * F11 + F12 * F12 + F21 * F21 + F22 * F22 + 1.0 - 3.0
    psi = c1 * e + c2 * e * e - 2.0 * c1 * np.log(J) + 0.5 * k * (J - 1.0) ** 2
    return psi, minJ


def pk1_batch(Fcol, c1, c2, k):
    """Energy and PK1 stress (flattened) per quadrature point."""
    F11, F12, F21, F22 = Fcol[..., 0], Fcol[..., 1], Fcol[..., 2], Fcol[..., 3]
    J = F11 * F22 - F12 * F21
    minJ = float(np.min(J)) if J.size else 1.0
    if minJ <= 0.0:
        z = np.zeros(Fcol.shape[:-1])
        return z, np.zeros_like(Fcol), minJ
    e = F11 * F11 + F12 * F12 + F21 * F21 + F22 * F22 + 1.0 - 3.0
    psi = c1 * e + c2 * e * e - 2.0 * c1 * np.log(J) + 0.5 * k * (J - 1.0) ** 2
    a = 2.0 * c1 + 4.0 * c2 * e
    b = k * (J - 1.0) - 2.0 * c1 / J
    P = np.empty_like(Fcol)
    P[..., 0] = a * F11 + b * F22
    P[..., 1] = a * F12 - b * F21
    P[..., 2] = a * F21 - b * F12
    P[..., 3] = a * F22 + b * F11
    return psi, P, minJ


def tangent_batch(Fcol, c1, c2, k):
    """Energy, PK1 stress and 4x4 tangent matrix per quadrature point."""
    psi, P, minJ = pk1_batch(Fcol, c1, c2, k)
    if minJ <= 0.0:
        return psi, P, np.zeros(Fcol.shape[:-1] + (4, 4)), minJ
    F11, F12, F21, F22 = Fcol[..., 0], Fcol[..., 1], Fcol[..., 2], Fcol[..., 3]
    J = F11 * F22 - F12 * F21
    e = F11 * F11 + F12 * F12 + F21 * F21 + F22 * F22 - 2.0
    a = 2.0 * c1 + 4.0 * c2 * e
    c3 = k * J * (2.0 * J - 1.0)
    c4 = k * J * (J - 1.0) - 2.0 * c1
    G = np.empty_like(Fcol)  # F^{-T} flattened
    G[..., 0] = F22 / J
    G[..., 1] = -F21 / J
    G[..., 2] = -F12 / J
    G[..., 3] = F11 / J
    D = np.einsum("...,cd->...cd", a, np.eye(4))
    D += 8.0 * c2 * np.einsum("...c,...d->...cd", Fcol, Fcol)
    D += np.einsum("...,...c,...d->...cd", c3, G, G)
    # -c4 * G_il G_kj with rows (i,j), cols (k,l): index G as (...,2,2)
    G2 = G.reshape(G.shape[:-1] + (2, 2))
    D -= np.einsum("...,...il,...kj->...ijkl", c4, G2, G2).reshape(D.shape)
    return psi, P, D, minJ


def element_force(Bhat, wdetJ, P):
    """Internal element force columns f_e = sum_g w detJ Bhat^T P."""
    return np.einsum("eg,egcd,egc->ed", wdetJ, Bhat, P)


def element_stiffness(Bhat, wdetJ, D):
    """Element stiffness K_e = sum_g w detJ Bhat^T D Bhat (symmetric)."""
    return np.einsum("eg,egca,egcd,egdb->eab", wdetJ, Bhat, D, Bhat, optimize=True)
