"""Quadratic-triangle (T6) finite element core.

Provides shape functions, the 3-point triangle rule, precomputed per-element
kinematic tables, internal force / stiffness evaluation for a displacement
field, and global sparse assembly with optional extra constraint columns in a
bordered (KKT) layout.

DOF numbering is node-major with interleaved components:
dof(node, comp) = 2*node + comp. Units: mm, N, MPa; thickness 1 mm.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels
from .material import HyperelasticParams, InadmissibleStateError

# 3-point Gauss rule on the reference triangle (exact for degree 2)
QUAD_POINTS = np.array([
    [1.0 / 6.0, 1.0 / 6.0],
    [2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0],
])
QUAD_WEIGHTS = np.array([1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0])


def shape_t6(xi: float, eta: float):
    """T6 shape values and reference derivatives at one point.

    Reference triangle with corners n1(0,0), n2(1,0), n3(0,1); midside nodes
    n4, n5, n6 opposite to them on edges 1-2, 2-3, 3-1. Returns (N(6,),
    dN(6,2)) with dN[:, 0] = dN/dxi, dN[:, 1] = dN/deta.
    """
    L1 = 1.0 - xi - eta
    L2 = xi
    L3 = eta
    N = np.array([
        L1 * (2.0 * L1 - 1.0),
        L2 * (2.0 * L2 - 1.0),
        L3 * (2.0 * L3 - 1.0),
        4.0 * L1 * L2,
        4.0 * L2 * L3,
        4.0 * L3 * L1,
    ])
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    dN = np.vstack([
        (4.0 * L1 - 1.0) * dL[0],
        (4.0 * L2 - 1.0) * dL[1],
        (4.0 * L3 - 1.0) * dL[2],
        4.0 * (L2 * dL[0] + L1 * dL[1]),
        4.0 * (L3 * dL[1] + L2 * dL[2]),
        4.0 * (L1 * dL[2] + L3 * dL[0]),
    ])
    return N, dN


def eval_shape_t6(bary) -> tuple[np.ndarray, np.ndarray]:
    """Shape values/derivatives from barycentric coordinates (L1, L2, L3)."""
    L1, L2, L3 = bary
    s = L1 + L2 + L3
    if min(L1, L2, L3) < -1e-12 or abs(s - 1.0) > 1e-12:
        raise ValueError("barycentric coordinates must be nonnegative and sum to 1")
    return shape_t6(L2, L3)


# reference-point shape tables shared by every element
_N_REF = np.empty((3, 6))
_DN_REF = np.empty((3, 6, 2))
for _g, (_xi, _eta) in enumerate(QUAD_POINTS):
    _N_REF[_g], _DN_REF[_g] = shape_t6(_xi, _eta)


def element_dofs(elements: np.ndarray) -> np.ndarray:
    """(E, 12) global DOF indices, interleaved (u1, u2) per node."""
    E = elements.shape[0]
    dofs = np.empty((E, 12), dtype=np.int64)
    dofs[:, 0::2] = 2 * elements
    dofs[:, 1::2] = 2 * elements + 1
    return dofs


class FemTables:
    """Precomputed kinematic tables for one T6 mesh.

    Attributes
    ----------
    dNdX : (E, 3, 6, 2) shape-function gradients at quadrature points
    wdetJ : (E, 3) quadrature weight times Jacobian determinant [mm^2]
    Bhat : (E, 3, 4, 12) flattened-gradient operator, dF_col = Bhat @ u_e
    qp_x : (E, 3, 2) quadrature-point positions [mm]
    """

    def __init__(self, coords: np.ndarray, elements: np.ndarray):
        coords = np.asarray(coords, dtype=float)
        elements = np.asarray(elements)
        self.coords = coords
        self.elements = elements
        self.n_nodes = coords.shape[0]
        self.n_elems = elements.shape[0]
        self.dofs = element_dofs(elements)

        ex = coords[elements]  # (E, 6, 2)
        # Jacobian J[i, a] = dX_i/dxi_a at each quadrature point
        J = np.einsum("eai,gab->egib", ex, _DN_REF)
        detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        self.detJ = detJ
        self.wdetJ = QUAD_WEIGHTS[None, :] * detJ
        Jinv = np.empty_like(J)
        Jinv[..., 0, 0] = J[..., 1, 1]
        Jinv[..., 0, 1] = -J[..., 0, 1]
        Jinv[..., 1, 0] = -J[..., 1, 0]
        Jinv[..., 1, 1] = J[..., 0, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            Jinv = Jinv / detJ[..., None, None]
        # dN/dX_i = dN/dxi_a * (J^{-1})_{a i}
        self.dNdX = np.einsum("gab,egbi->egai", _DN_REF, Jinv)
        self.qp_x = np.einsum("ga,eai->egi", _N_REF, ex)
        self.N = _N_REF

        Bhat = np.zeros((self.n_elems, 3, 4, 12))
        for i in range(2):
            for j in range(2):
                for a in range(6):
                    Bhat[:, :, 2 * i + j, 2 * a + i] = self.dNdX[:, :, a, j]
        self.Bhat = Bhat

        rows = np.repeat(self.dofs, 12, axis=1).ravel()
        cols = np.tile(self.dofs, (1, 12)).ravel()
        self._coo_rows = rows
        self._coo_cols = cols

    # -- field evaluation -------------------------------------------------

    def gather(self, u: np.ndarray) -> np.ndarray:
        """Element displacement columns (E, 12) from the global vector."""
        return u[self.dofs]

    def def_grads(self, u: np.ndarray) -> np.ndarray:
        """Flattened deformation gradients (E, 3, 4) for global u."""
        return kernels.def_grads(self.Bhat, self.gather(u))

    def energy(self, u: np.ndarray, p: HyperelasticParams) -> float:
        F = self.def_grads(u)
        psi, minJ = kernels.psi_batch(F, p.c1, p.c2, p.bulk_k)
        if minJ <= 0.0:
            raise InadmissibleStateError(f"det(F) = {minJ:g} <= 0")
        return float(np.sum(self.wdetJ * psi))

    def min_jacobian(self, u: np.ndarray) -> float:
        F = self.def_grads(u)
        J = F[..., 0] * F[..., 3] - F[..., 1] * F[..., 2]
        return float(np.min(J))

    def force_stiffness(self, u: np.ndarray, p: HyperelasticParams,
                        tangent: bool = True):
        """(energy, f_global, K_global) at displacement state u.

        K_global is returned as a CSC matrix (2N x 2N); pass tangent=False to
        skip it (K is then None).
        """
        F = self.def_grads(u)
        if tangent:
            psi, P, D, minJ = kernels.tangent_batch(F, p.c1, p.c2, p.bulk_k)
        else:
            psi, P, minJ = kernels.pk1_batch(F, p.c1, p.c2, p.bulk_k)
        if minJ <= 0.0:
            raise InadmissibleStateError(f"det(F) = {minJ:g} <= 0")
        fe = kernels.element_force(self.Bhat, self.wdetJ, P)
        f = np.zeros(2 * self.n_nodes)
        np.add.at(f, self.dofs, fe)
        K = None
        if tangent:
            Ke = kernels.element_stiffness(self.Bhat, self.wdetJ, D)
            K = sp.coo_matrix(
                (Ke.ravel(), (self._coo_rows, self._coo_cols)),
                shape=(2 * self.n_nodes, 2 * self.n_nodes),
            ).tocsc()
        energy = float(np.sum(self.wdetJ * psi))
        return energy, f, K

    def gramian(self) -> sp.csc_matrix:
        """Shape-function Gramian M = A_e <N^T N> with the 3-point rule."""
        E = self.n_elems
        Me = np.einsum("eg,ga,gb->eab", self.wdetJ, _N_REF, _N_REF)  # (E, 6, 6)
        data = np.zeros((E, 12, 12))
        data[:, 0::2, 0::2] = Me
        data[:, 1::2, 1::2] = Me
        M = sp.coo_matrix(
            (data.ravel(), (self._coo_rows, self._coo_cols)),
            shape=(2 * self.n_nodes, 2 * self.n_nodes),
        ).tocsc()
        return M


# -- single-element conveniences (tests, small checks) ---------------------


def _single(coords6: np.ndarray) -> FemTables:
    return FemTables(np.asarray(coords6, dtype=float), np.arange(6, dtype=np.int64)[None, :])


def element_internal_force(coords6, u_e, p: HyperelasticParams) -> np.ndarray:
    t = _single(coords6)
    _, f, _ = t.force_stiffness(np.asarray(u_e, dtype=float), p, tangent=False)
    return f


def element_stiffness_matrix(coords6, u_e, p: HyperelasticParams) -> np.ndarray:
    t = _single(coords6)
    _, _, K = t.force_stiffness(np.asarray(u_e, dtype=float), p)
    return K.toarray()


def element_energy(coords6, u_e, p: HyperelasticParams) -> float:
    return _single(coords6).energy(np.asarray(u_e, dtype=float), p)


def bordered_system(K: sp.spmatrix, C: sp.spmatrix | None) -> sp.csc_matrix:
    """Symmetric bordered layout [[K, C^T], [C, 0]] used for KKT solves."""
    if C is None or C.shape[0] == 0:
        return sp.csc_matrix(K)
    return sp.bmat([[K, C.T], [C, None]], format="csc")
