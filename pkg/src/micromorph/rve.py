"""Constrained RVE boundary value problem and static condensation.

At a macroscopic point the RVE receives the displacement-gradient matrix, the
mode magnitudes and their gradients, and solves for the periodic,
orthogonality-constrained microfluctuation w via a bordered (KKT) Newton
iteration. The converged state yields the homogenized stress quantities
(volume average of P and its mode-weighted moments) and, by a Schur
complement over the bordered system, the condensed specific-stiffness blocks
that feed the macroscopic Newton solver.

Constraint row order in the bordered system: periodic links, zero mean (2),
mode orthogonality (n), mode-gradient orthogonality (2n).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .fem import FemTables, bordered_system
from .material import HyperelasticParams, InadmissibleStateError
from .mesh import MeshT6
from .modes import PatternModeSet


class ConstraintError(Exception):
    pass


class RVEDivergenceError(Exception):
    pass


class RVEBifurcationError(Exception):
    """Singular bordered tangent: bifurcation inside the RVE."""


@dataclass
class MacroPointInput:
    """Macro kinematics at one quadrature point.

    G0 follows the gradient convention G0_ij = dv0_j/dX_i, so the affine part
    of the micro displacement is G0^T X_m and F_M = I + G0^T.
    """

    G0: np.ndarray
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    g: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def macro_F(self) -> np.ndarray:
        return np.eye(2) + np.asarray(self.G0).T


@dataclass
class RVEConstraintSet:
    M: sp.csc_matrix
    ones_cols: np.ndarray  # (2Nd, 2)
    mode_cols: np.ndarray  # (2Nd, n)
    grad_cols: np.ndarray  # (2Nd, 2n)
    C_pbc: sp.csc_matrix
    C_all: sp.csc_matrix   # stacked constraint rows


@dataclass
class RVESolution:
    w: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    eta: np.ndarray
    converged: bool
    iterations: int
    residual: float
    residual_history: list
    # cached converged-state data for homogenization/condensation
    _psi: np.ndarray = None
    _P: np.ndarray = None
    _D: np.ndarray = None
    _lu: object = None
    _kkt: object = None


@dataclass
class CondensedTangent:
    """Homogenized stresses and condensed stiffness blocks (per cell volume).

    H is the symmetric (4+3n) x (4+3n) matrix of second derivatives of the
    equilibrated RVE energy density with respect to
    y = [A11, A12, A21, A22, v_1..v_n, g_11, g_12, ..., g_n2], A = G0^T.
    """

    theta: np.ndarray
    pi: np.ndarray
    lam: np.ndarray
    H: np.ndarray
    n: int

    @property
    def d00(self) -> np.ndarray:
        return self.H[:4, :4]

    @property
    def d0v(self) -> np.ndarray:
        return self.H[:4, 4:4 + self.n]

    @property
    def d0g(self) -> np.ndarray:
        return self.H[:4, 4 + self.n:]

    @property
    def dvv(self) -> np.ndarray:
        return self.H[4:4 + self.n, 4:4 + self.n]

    @property
    def dvg(self) -> np.ndarray:
        return self.H[4:4 + self.n, 4 + self.n:]

    @property
    def dgg(self) -> np.ndarray:
        return self.H[4 + self.n:, 4 + self.n:]


def build_constraints(mesh: MeshT6, modes: PatternModeSet) -> RVEConstraintSet:
    """Assemble Gramian-based orthogonality columns and periodic link rows."""
    if mesh.periodic_pairs.shape[0] == 0:
        raise ConstraintError("mesh has no periodic pairs; run pair_periodic_boundaries")
    tab = FemTables(mesh.node_coords, mesh.elements)
    M = tab.gramian()
    nd = 2 * mesh.n_nodes
    n = modes.n

    ones = np.zeros((nd, 2))
    ones[0::2, 0] = 1.0
    ones[1::2, 1] = 1.0
    solid = float(np.sum(tab.wdetJ))
    pou = ones[:, 0] @ (M @ ones[:, 0])
    if abs(pou - solid) > 1e-10 * solid:
        raise ConstraintError("Gramian violates the partition of unity")

    ones_cols = M @ ones
    mode_cols = (M @ modes.nodal_values.T) if n else np.zeros((nd, 0))

    Xc = mesh.node_coords - (mesh.centroid if mesh.centroid is not None else 0.0)
    grad_cols = np.zeros((nd, 2 * n))
    for i in range(n):
        phi = modes.nodal_values[i].reshape(-1, 2)
        for k in range(2):
            q = (phi * Xc[:, k:k + 1]).reshape(-1)
            grad_cols[:, 2 * i + k] = M @ q

    pp = mesh.periodic_pairs
    npairs = pp.shape[0]
    rows = np.repeat(np.arange(2 * npairs), 2)
    cols = np.empty(4 * npairs, dtype=np.int64)
    vals = np.tile([1.0, -1.0], 2 * npairs)
    cols[0::4] = 2 * pp[:, 0]
    cols[1::4] = 2 * pp[:, 1]
    cols[2::4] = 2 * pp[:, 0] + 1
    cols[3::4] = 2 * pp[:, 1] + 1
    C_pbc = sp.csc_matrix((vals, (rows, cols)), shape=(2 * npairs, nd))

    C_all = sp.vstack([
        C_pbc,
        sp.csc_matrix(ones_cols.T),
        sp.csc_matrix(mode_cols.T),
        sp.csc_matrix(grad_cols.T),
    ], format="csc")

    # full row rank once per mesh
    dense = C_all.toarray()
    rank = np.linalg.matrix_rank(dense, tol=1e-10 * np.max(np.abs(dense)) * max(dense.shape))
    if rank < C_all.shape[0]:
        raise ConstraintError(
            f"constraint block is rank deficient ({rank} < {C_all.shape[0]})")
    return RVEConstraintSet(M, ones_cols, mode_cols, grad_cols, C_pbc, C_all)


def _factorize_kkt(KKT):
    """Sparse LU of the bordered system; symmetric-mode minimum-degree
    ordering keeps the fill-in from the dense orthogonality rows small."""
    try:
        return spla.splu(KKT, permc_spec="MMD_AT_PLUS_A",
                         diag_pivot_thresh=0.1, options=dict(SymmetricMode=True))
    except RuntimeError:
        try:
            return spla.splu(KKT)  # robust default ordering
        except RuntimeError as err:
            raise RVEBifurcationError(f"singular bordered RVE tangent: {err}") from err


class RVEProblem:
    """One RVE (mesh + modes + material) solvable at many macro inputs."""

    def __init__(self, mesh: MeshT6, modes: PatternModeSet, params: HyperelasticParams,
                 tol_force: float = 1e-8, tol_disp_rel: float = 1e-10,
                 max_iter: int = 25):
        self.mesh = mesh
        self.modes = modes
        self.params = params
        self.tol_force = tol_force
        self.tol_disp = tol_disp_rel * mesh.char_length
        self.max_iter = max_iter
        self.tab = FemTables(mesh.node_coords, mesh.elements)
        self.cons = build_constraints(mesh, modes)
        self.cell_area = mesh.cell_area if mesh.cell_area else float(np.sum(self.tab.wdetJ))

        c = mesh.centroid if mesh.centroid is not None else np.zeros(2)
        self.Xc = mesh.node_coords - c
        self.qp_Xc = self.tab.qp_x - c
        n = modes.n
        self.n = n
        E = self.tab.n_elems
        # mode values and flattened gradients at quadrature points
        self.phi_qp = np.zeros((n, E, 3, 2))
        self.gphi_qp = np.zeros((n, E, 3, 4))
        for i in range(n):
            nod = modes.nodal_values[i].reshape(-1, 2)[self.tab.elements]  # (E, 6, 2)
            self.phi_qp[i] = np.einsum("ga,eac->egc", self.tab.N, nod)
            g = np.einsum("eac,egaj->egcj", nod, self.tab.dNdX)
            self.gphi_qp[i] = g.reshape(E, 3, 4)
        self.n_dof = 2 * mesh.n_nodes
        self.n_con = self.cons.C_all.shape[0]

    # -- kinematics --------------------------------------------------------

    def total_displacement(self, inp: MacroPointInput, w: np.ndarray) -> np.ndarray:
        """Nodal displacement of the full ansatz (affine + modes + w)."""
        u = (self.Xc @ np.asarray(inp.G0)).reshape(-1)  # (G0^T X)_i = X_k G0_ki
        for i in range(self.n):
            amp = inp.v[i] + self.Xc @ np.asarray(inp.g[i])
            u = u + np.repeat(amp, 2) * self.modes.nodal_values[i]
        return u + w

    def def_grads_at(self, inp: MacroPointInput, w: np.ndarray) -> np.ndarray:
        """Deformation gradients (E, 3, 4) of the ansatz at quadrature points.

        The mode amplitude (v_i + X_m . g_i) is evaluated exactly at the
        quadrature points (the modes themselves are FE-interpolated), which
        makes the homogenized stresses and condensed tangents the exact
        derivatives of this discrete energy.
        """
        F = kernels.def_grads(self.tab.Bhat, self.tab.gather(w))  # I + grad w
        A = np.asarray(inp.G0).T.reshape(-1)
        F = F + A
        for i in range(self.n):
            gi = np.asarray(inp.g[i])
            amp = inp.v[i] + self.qp_Xc @ gi  # (E, 3)
            F = F + amp[..., None] * self.gphi_qp[i]
            for c in range(2):
                for j in range(2):
                    F[..., 2 * c + j] += self.phi_qp[i][..., c] * gi[j]
        return F

    def min_jacobian_at(self, inp: MacroPointInput, w: np.ndarray) -> float:
        F = self.def_grads_at(inp, w)
        J = F[..., 0] * F[..., 3] - F[..., 1] * F[..., 2]
        return float(np.min(J))

    def zero_input(self) -> MacroPointInput:
        return MacroPointInput(np.zeros((2, 2)), np.zeros(self.n), np.zeros((self.n, 2)))

    # -- solve -------------------------------------------------------------

    def solve(self, inp: MacroPointInput, w_init: np.ndarray | None = None) -> RVESolution:
        if np.linalg.det(inp.macro_F()) <= 0.0:
            raise InadmissibleStateError("inadmissible macro input: det(F_M) <= 0")
        w = np.zeros(self.n_dof) if w_init is None else w_init.copy()
        C = self.cons.C_all
        scale = 0.0
        hist = []
        p = self.params
        for it in range(1, self.max_iter + 1):
            F = self.def_grads_at(inp, w)
            psi, P, D, minJ = kernels.tangent_batch(F, p.c1, p.c2, p.bulk_k)
            if minJ <= 0.0:
                # warm-start state made inadmissible by the new macro input;
                # the macro iteration must cut its own step
                raise InadmissibleStateError(f"inadmissible micro state (det F = {minJ:g})")
            fe = kernels.element_force(self.tab.Bhat, self.tab.wdetJ, P)
            f_w = np.zeros(self.n_dof)
            np.add.at(f_w, self.tab.dofs, fe)
            Ke = kernels.element_stiffness(self.tab.Bhat, self.tab.wdetJ, D)
            Dww = sp.coo_matrix(
                (Ke.ravel(), (self.tab._coo_rows, self.tab._coo_cols)),
                shape=(self.n_dof, self.n_dof)).tocsc()
            KKT = bordered_system(Dww, C)
            lu = _factorize_kkt(KKT)
            rhs = -np.concatenate([f_w, C @ w])
            sol = lu.solve(rhs)
            # one step of iterative refinement (cheap, covers the relaxed
            # pivoting used for speed on the bordered system)
            sol += lu.solve(rhs - KKT @ sol)
            if not np.isfinite(sol).all():
                raise RVEBifurcationError("bordered RVE solve returned non-finite values")
            dw, mult = sol[:self.n_dof], sol[self.n_dof:]
            res = float(np.linalg.norm(f_w + C.T @ mult))
            scale = max(scale, float(np.linalg.norm(f_w)))
            hist.append(res)
            cviol = float(np.linalg.norm(C @ w))
            wsc = max(float(np.max(np.abs(w))), 1e-3 * self.mesh.char_length)
            if (res <= self.tol_force * scale and np.linalg.norm(dw) <= self.tol_disp
                    and cviol <= 1e-10 * wsc * max(1.0, self.cell_area)):
                npb = self.cons.C_pbc.shape[0]
                n = self.n
                return RVESolution(
                    w=w, lam=mult[:npb], mu=mult[npb:npb + 2],
                    nu=mult[npb + 2:npb + 2 + n], eta=mult[npb + 2 + n:],
                    converged=True, iterations=it, residual=res, residual_history=hist,
                    _psi=psi, _P=P, _D=D, _lu=lu, _kkt=KKT)
            # J-safeguarded update
            alpha = 1.0
            for _ in range(10):
                if self.min_jacobian_at(inp, w + alpha * dw) > 0.0:
                    break
                alpha *= 0.5
            else:
                raise RVEDivergenceError("step bisection failed to restore det F > 0")
            w = w + alpha * dw
        raise RVEDivergenceError(
            f"micro Newton did not converge in {self.max_iter} iterations "
            f"(last residual {hist[-1]:.3e})")

    # -- homogenization ------------------------------------------------------

    def energy(self, sol: RVESolution) -> float:
        """Equilibrated RVE energy density (per unit cell volume) [MPa]."""
        return float(np.sum(self.tab.wdetJ * sol._psi)) / self.cell_area

    def energy_at(self, inp: MacroPointInput, w: np.ndarray) -> float:
        """Energy density of an arbitrary (not equilibrated) micro state."""
        F = self.def_grads_at(inp, w)
        p = self.params
        psi, minJ = kernels.psi_batch(F, p.c1, p.c2, p.bulk_k)
        if minJ <= 0.0:
            raise InadmissibleStateError(f"det(F) = {minJ:g} <= 0")
        return float(np.sum(self.tab.wdetJ * psi)) / self.cell_area

    def homogenize_stress(self, sol: RVESolution):
        """(Theta, Pi, Lambda): volume-averaged stress conjugates."""
        wdetJ = self.tab.wdetJ
        P = sol._P
        theta = np.einsum("eg,egc->c", wdetJ, P).reshape(2, 2) / self.cell_area
        n = self.n
        pi = np.zeros(n)
        lam = np.zeros((n, 2))
        P2 = P.reshape(P.shape[0], 3, 2, 2)
        for i in range(n):
            pcontr = np.einsum("egc,egc->eg", P, self.gphi_qp[i])
            pi[i] = np.sum(wdetJ * pcontr) / self.cell_area
            ptphi = np.einsum("egjm,egj->egm", P2, self.phi_qp[i])
            lam[i] = (np.einsum("eg,egm->m", wdetJ, ptphi)
                      + np.einsum("eg,egm,eg->m", wdetJ, self.qp_Xc, pcontr)) / self.cell_area
        return theta, pi, lam

    def _sensitivities(self) -> np.ndarray:
        """T (E, 3, Y, 4): dF_col per unit change of each condensed input."""
        E = self.tab.n_elems
        n = self.n
        Y = 4 + 3 * n
        T = np.zeros((E, 3, Y, 4))
        for c in range(4):
            T[:, :, c, c] = 1.0
        for i in range(n):
            T[:, :, 4 + i, :] = self.gphi_qp[i]
            for m in range(2):
                y = 4 + n + 2 * i + m
                T[:, :, y, :] = self.qp_Xc[:, :, m, None] * self.gphi_qp[i]
                T[:, :, y, 2 * 0 + m] += self.phi_qp[i][:, :, 0]
                T[:, :, y, 2 * 1 + m] += self.phi_qp[i][:, :, 1]
        return T

    def condensed_tangent(self, sol: RVESolution) -> CondensedTangent:
        """Schur-condensed specific stiffness blocks at a converged state."""
        wdetJ = self.tab.wdetJ
        D = sol._D
        T = self._sensitivities()
        Y = T.shape[2]
        Hyy = np.einsum("eg,egyc,egcd,egzd->yz", wdetJ, T, D, T, optimize=True)
        # coupling with w DOFs, assembled to global columns
        el = np.einsum("eg,egyc,egcd,egdk->eyk", wdetJ, T, D, self.tab.Bhat, optimize=True)
        Hyw = np.zeros((Y, self.n_dof))
        for y in range(Y):
            np.add.at(Hyw[y], self.tab.dofs, el[:, y, :])
        rhs = np.zeros((self.n_dof + self.n_con, Y))
        rhs[:self.n_dof] = Hyw.T
        Z = sol._lu.solve(rhs)
        Z += sol._lu.solve(rhs - sol._kkt @ Z)
        if not np.isfinite(Z).all():
            raise RVEBifurcationError("condensation solve returned non-finite values")
        H = (Hyy - Hyw @ Z[:self.n_dof]) / self.cell_area
        drift = np.linalg.norm(H - H.T) / max(np.linalg.norm(H), 1e-300)
        if drift > 1e-8:
            raise RVEBifurcationError(f"condensed tangent symmetry drift {drift:.2e}")
        H = 0.5 * (H + H.T)
        theta, pi, lam = self.homogenize_stress(sol)
        return CondensedTangent(theta=theta, pi=pi, lam=lam, H=H, n=self.n)
