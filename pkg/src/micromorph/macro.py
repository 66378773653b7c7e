"""Macroscale Newton solver with stability control and branch switching.

The same machinery drives both the homogenized (micromorphic) model and the
single-scale DNS model: displacement/periodic boundary conditions are encoded
as an affine map u_full = T u_red + b(t), Newton iterates on the reduced
DOFs, the reduced tangent is monitored for loss of positive definiteness,
and unstable equilibria are perturbed along the critical eigenvector(s) until
a stable branch is reached, with automatic load-step halving on failure.

Micromorphic DOF layout: all v0 DOFs first (interleaved), then one scalar
block per mode field.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import FemTables
from .material import HyperelasticParams, InadmissibleStateError
from .mesh import MeshT6
from .rve import MacroPointInput, RVEDivergenceError, RVEProblem


class NewtonFailure(Exception):
    pass


class SwitchFailure(Exception):
    """Branch switching found no acceptable stable equilibrium."""

    def __init__(self, msg, alpha1=0.0):
        super().__init__(msg)
        self.alpha1 = alpha1


class ContinuationFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# affine constraint handling


class AffineConstraints:
    """u_full = T u_red + b(t); supports Dirichlet values, master-slave links
    with load-dependent offsets, and extra scalar controls (free overall
    stretch components) appended to the reduced vector."""

    def __init__(self, n_full: int, n_controls: int = 0):
        self.n_full = n_full
        self.n_controls = n_controls
        self.prescribed: dict[int, object] = {}  # dof -> fn(t)
        # slave dof -> (master dof, fn(t), control coefficients)
        self.links: dict[int, tuple[int, object, np.ndarray]] = {}
        self._built = False

    def prescribe(self, dof: int, fn):
        self.prescribed[int(dof)] = fn

    def link(self, slave: int, master: int, fn=None, control_coefs=None):
        coefs = np.zeros(self.n_controls)
        if control_coefs is not None:
            coefs[:] = control_coefs
        self.links[int(slave)] = (int(master), fn, coefs)

    def build(self):
        n = self.n_full
        resolved = {}

        def resolve(d):
            if d in resolved:
                return resolved[d]
            if d in self.links:
                m, fn, coefs = self.links[d]
                root, fns, c = resolve(m)
                out = (root, fns + ([fn] if fn else []), c + coefs)
            else:
                out = (d, [], np.zeros(self.n_controls))
            resolved[d] = out
            return out

        free = [d for d in range(n)
                if d not in self.prescribed and resolve(d)[0] not in self.prescribed
                and d not in self.links]
        col = {d: k for k, d in enumerate(free)}
        nred = len(free) + self.n_controls
        rows, cols, vals = [], [], []
        offset_terms = []  # (dof, [fns])
        overlap = set(self.prescribed) & set(self.links)
        if overlap:
            raise ValueError(f"dofs both prescribed and linked: {sorted(overlap)[:5]}")
        for d in range(n):
            root, fns, coefs = resolve(d)
            if root in self.prescribed:
                fns = fns + [self.prescribed[root]]
            if root in col:
                rows.append(d)
                cols.append(col[root])
                vals.append(1.0)
            for k in range(self.n_controls):
                if coefs[k] != 0.0:
                    rows.append(d)
                    cols.append(len(free) + k)
                    vals.append(coefs[k])
            if fns:
                offset_terms.append((d, fns))
        self.T = sp.csc_matrix((vals, (rows, cols)), shape=(n, nred))
        self._offset_terms = offset_terms
        self.n_red = nred
        self.n_free = len(free)
        self.free = np.asarray(free, dtype=np.int64)
        self._built = True
        return self

    def offset(self, t: float) -> np.ndarray:
        b = np.zeros(self.n_full)
        for d, fns in self._offset_terms:
            b[d] = sum(f(t) for f in fns)
        return b

    def full(self, u_red: np.ndarray, t: float) -> np.ndarray:
        return self.T @ u_red + self.offset(t)


# ---------------------------------------------------------------------------
# load programs


@dataclass
class LoadProgram:
    """Monotone displacement-controlled loading, parametrized by t in [0,1].

    edge_compression: top/bottom clamped, vertical approach u(t) = t*u_max
    (u_max = u_over_H_max * H). periodic_biaxial: imposed overall
    F = diag(1+eps11(t), 1+eps22(t)); a component can be left free
    (zero average stress) by setting it to None.
    """

    kind: str
    steps: int
    u_over_H_max: float = 0.0
    eps11_max: float | None = 0.0
    eps22_max: float | None = 0.0

    def __post_init__(self):
        if self.kind not in ("edge_compression", "periodic_biaxial"):
            raise ValueError(f"unknown load program kind {self.kind!r}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")

    def eps(self, t: float) -> tuple[float | None, float | None]:
        e1 = None if self.eps11_max is None else t * self.eps11_max
        e2 = None if self.eps22_max is None else t * self.eps22_max
        return e1, e2

    @property
    def biaxiality(self) -> float:
        """gamma = |eps22|/|eps11| (inf encoded by eps11_max = 0)."""
        if self.kind != "periodic_biaxial":
            raise ValueError("biaxiality is defined for periodic_biaxial programs")
        e1 = self.eps11_max or 0.0
        e2 = self.eps22_max or 0.0
        if e1 == 0.0:
            return np.inf
        return abs(e2) / abs(e1)


@dataclass
class StabilityReport:
    lowest_eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    is_stable: bool
    threshold: float


def stability_check(K, m: int = 6, theta: float = 1e-6) -> StabilityReport:
    """Algebraically smallest eigenpairs of the reduced symmetric tangent.

    Dense below 600 DOFs, otherwise shift-invert Lanczos (ARPACK) around 0
    with a small negative-shift fallback when the tangent is exactly
    singular at a bifurcation point.
    """
    n = K.shape[0]
    Kc = sp.csc_matrix(K)
    drift = abs(Kc - Kc.T).max() / max(abs(Kc).max(), 1e-300)
    if drift > 1e-8:
        raise NewtonFailure(f"macro tangent asymmetry {drift:.2e}")
    Kc = 0.5 * (Kc + Kc.T)
    diag = Kc.diagonal()
    scale = float(np.median(np.abs(diag))) if n else 1.0
    m_eff = min(m, n - 1) if n > 1 else 1
    if n <= 600 or m_eff < 1:
        w, V = scipy.linalg.eigh(Kc.toarray())
        w, V = w[:m], V[:, :m]
    else:
        try:
            w, V = spla.eigsh(Kc, k=m_eff, sigma=0.0, which="LM")
        except (RuntimeError, spla.ArpackError):
            w, V = spla.eigsh(Kc, k=m_eff, sigma=-theta * scale, which="LM")
        idx = np.argsort(w)
        w, V = w[idx], V[:, idx]
    thr = theta * scale
    return StabilityReport(np.asarray(w), np.asarray(V), bool(w[0] > thr), thr)


# ---------------------------------------------------------------------------
# micromorphic model


class MicromorphicModel:
    """Homogenized two-scale model on a macro T6 mesh.

    Reduced per-point inputs are y = [A(4), v_i, g_i] with A = (grad v0)^T;
    element forces and stiffnesses are pulled back from the condensed RVE
    data through the shape operator S (y = S u_elem).
    """

    def __init__(self, mesh: MeshT6, rve: RVEProblem, threads: int = 1):
        self.mesh = mesh
        self.rve = rve
        self.n = rve.n
        self.threads = threads
        self.tab = FemTables(mesh.node_coords, mesh.elements)
        nn = mesh.n_nodes
        E = self.tab.n_elems
        self.n_nodes = nn
        self.n_dof = 2 * nn + self.n * nn
        n = self.n

        # element DOF map: 12 v0 DOFs then 6 per mode field
        self.edofs = np.empty((E, 12 + 6 * n), dtype=np.int64)
        self.edofs[:, :12] = self.tab.dofs
        for i in range(n):
            self.edofs[:, 12 + 6 * i:18 + 6 * i] = 2 * nn + i * nn + self.tab.elements

        # S (E, 3, Y, ndof_e): y = [A(4), v(n), g(2n)]
        Y = 4 + 3 * n
        S = np.zeros((E, 3, Y, 12 + 6 * n))
        for i in range(2):
            for j in range(2):
                for a in range(6):
                    S[:, :, 2 * i + j, 2 * a + i] = self.tab.dNdX[:, :, a, j]
        for i in range(n):
            for a in range(6):
                S[:, :, 4 + i, 12 + 6 * i + a] = self.tab.N[None, :, a]
                for m_ in range(2):
                    S[:, :, 4 + n + 2 * i + m_, 12 + 6 * i + a] = self.tab.dNdX[:, :, a, m_]
        self.S = S
        self.Y = Y
        self._warm = np.zeros((E, 3, rve.n_dof))
        self.last_micro_iters = 0.0
        self._last_theta = None

        r = np.repeat(self.edofs, 12 + 6 * n, axis=1).ravel()
        c = np.tile(self.edofs, (1, 12 + 6 * n)).ravel()
        self._coo = (r, c)

    # warm-start registry management (snapshot across load steps)
    def snapshot(self):
        return self._warm.copy()

    def restore(self, snap):
        self._warm = snap.copy()

    def point_input(self, y: np.ndarray) -> MacroPointInput:
        n = self.n
        A = y[:4].reshape(2, 2)
        return MacroPointInput(A.T.copy(), y[4:4 + n].copy(), y[4 + n:].reshape(n, 2).copy())

    def is_admissible(self, u: np.ndarray) -> bool:
        ue = u[self.edofs]
        y = np.einsum("egyd,ed->egy", self.S, ue)
        A = y[..., :4]
        detF = (1.0 + A[..., 0]) * (1.0 + A[..., 3]) - A[..., 1] * A[..., 2]
        return bool(np.min(detF) > 0.0)

    def _point_solve(self, args):
        e, g, y = args
        inp = self.point_input(y)
        sol = self.rve.solve(inp, w_init=self._warm[e, g])
        ct = self.rve.condensed_tangent(sol)
        en = self.rve.energy(sol)
        return e, g, sol, ct, en

    def assemble(self, u: np.ndarray, need_tangent: bool = True):
        """(energy, f_int, K) of the homogenized body at macro state u."""
        ue = u[self.edofs]
        y_all = np.einsum("egyd,ed->egy", self.S, ue)
        E = self.tab.n_elems
        n = self.n
        tasks = [(e, g, y_all[e, g]) for e in range(E) for g in range(3)]
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                results = list(ex.map(self._point_solve, tasks))
        else:
            results = [self._point_solve(t) for t in tasks]

        energy = 0.0
        iters = []
        nde = 12 + 6 * n
        fe = np.zeros((E, nde))
        Ke = np.zeros((E, nde, nde)) if need_tangent else None
        theta_avg = np.zeros((2, 2))
        vol = 0.0
        for e, g, sol, ct, en in results:
            self._warm[e, g] = sol.w
            iters.append(sol.iterations)
            wJ = self.tab.wdetJ[e, g]
            Sp = self.S[e, g]
            yhat = np.concatenate([ct.theta.T.reshape(-1), ct.pi, ct.lam.reshape(-1)])
            fe[e] += wJ * (Sp.T @ yhat)
            if need_tangent:
                Ke[e] += wJ * (Sp.T @ ct.H @ Sp)
            energy += wJ * en
            theta_avg += wJ * ct.theta
            vol += wJ
        self.last_micro_iters = float(np.mean(iters))
        self._last_theta = theta_avg / vol

        f = np.zeros(self.n_dof)
        np.add.at(f, self.edofs, fe)
        K = None
        if need_tangent:
            K = sp.coo_matrix((Ke.ravel(), self._coo),
                              shape=(self.n_dof, self.n_dof)).tocsc()
        return energy, f, K

    def mode_extrema(self, u: np.ndarray) -> np.ndarray:
        nn = self.n_nodes
        return np.array([np.max(np.abs(u[2 * nn + i * nn: 2 * nn + (i + 1) * nn]))
                         for i in range(self.n)])

    def v0_field(self, u: np.ndarray) -> np.ndarray:
        return u[:2 * self.n_nodes].reshape(-1, 2)

    def vi_field(self, u: np.ndarray, i: int) -> np.ndarray:
        nn = self.n_nodes
        return u[2 * nn + i * nn: 2 * nn + (i + 1) * nn]


class DNSModel:
    """Single-scale hyperelastic model on the full (perforated) mesh."""

    def __init__(self, mesh: MeshT6, params: HyperelasticParams):
        self.mesh = mesh
        self.params = params
        self.tab = FemTables(mesh.node_coords, mesh.elements)
        self.n_dof = 2 * mesh.n_nodes
        self.n = 0
        self.last_micro_iters = 0.0
        self.cell_area = mesh.cell_area or float(np.sum(self.tab.wdetJ))
        self._last_theta = None

    def snapshot(self):
        return None

    def restore(self, snap):
        pass

    def is_admissible(self, u: np.ndarray) -> bool:
        return self.tab.min_jacobian(u) > 0.0

    def assemble(self, u: np.ndarray, need_tangent: bool = True):
        energy, f, K = self.tab.force_stiffness(u, self.params, tangent=need_tangent)
        from . import kernels

        F = self.tab.def_grads(u)
        _, P, _ = kernels.pk1_batch(F, self.params.c1, self.params.c2, self.params.bulk_k)
        self._last_theta = (np.einsum("eg,egc->c", self.tab.wdetJ, P)
                            .reshape(2, 2) / self.cell_area)
        return energy, f, K

    def mode_extrema(self, u: np.ndarray) -> np.ndarray:
        return np.zeros(0)


# ---------------------------------------------------------------------------
# Newton equilibration on the reduced DOFs


@dataclass
class NewtonResult:
    u_red: np.ndarray
    energy: float
    f_int: np.ndarray
    K_red: sp.csc_matrix
    iterations: int
    errors: list
    residual0: float


def newton_equilibrate(model, cons: AffineConstraints, u_red: np.ndarray, t: float,
                       tol: float = 1e-6, max_iter: int = 25,
                       f_ref: float | None = None, char_len: float = 1.0) -> NewtonResult:
    """Full Newton on the reduced system; raises NewtonFailure on divergence.

    The iteration error is the mixed norm of Algorithm form: residual norm
    scaled by f_ref (the first-step elastic residual) plus the correction
    norm scaled by the characteristic length.
    """
    T = cons.T
    b = cons.offset(t)

    def evaluate(ur, need_tangent=True):
        u = T @ ur + b
        energy, f, K = model.assemble(u, need_tangent)
        r = -(T.T @ f)
        Kr = (T.T @ (K @ T)).tocsc() if need_tangent else None
        return energy, f, Kr, r

    energy, f, Kr, r = evaluate(u_red)
    res0 = float(np.linalg.norm(r))
    fr = f_ref if f_ref else (res0 if res0 > 0 else 1.0)
    errors = []
    for it in range(1, max_iter + 1):
        try:
            lu = spla.splu(Kr)
        except RuntimeError as err:
            raise NewtonFailure(f"singular macro tangent: {err}") from err
        du = lu.solve(r)
        if not np.isfinite(du).all():
            raise NewtonFailure("non-finite Newton correction")
        rnorm = float(np.linalg.norm(r))
        alpha = 1.0
        trial = None
        fallback = None
        for _ in range(10):
            try:
                cand = u_red + alpha * du
                if not model.is_admissible(T @ cand + b):
                    raise InadmissibleStateError("macro det(F) <= 0")
                ev = evaluate(cand)
            except InadmissibleStateError:
                alpha *= 0.5
                continue
            if fallback is None:
                fallback = (alpha, cand, ev)
            # residual backtracking keeps the iteration from oscillating
            # across a nearly singular tangent
            if float(np.linalg.norm(ev[3])) <= max(1.0 - 1e-4 * alpha, 0.5) * rnorm \
                    or rnorm <= tol * fr:
                trial = (alpha, cand, ev)
                break
            alpha *= 0.5
        if trial is None:
            trial = fallback  # slow progress beats failing outright
        if trial is None:
            raise NewtonFailure("trial bisection exhausted")
        alpha, u_red, (energy, f, Kr, r) = trial[0], trial[1], trial[2]
        eps = float(np.linalg.norm(r)) / fr + alpha * float(np.linalg.norm(du)) / char_len
        errors.append(eps)
        if eps <= tol:
            return NewtonResult(u_red, energy, f, Kr, it, errors, res0)
    raise NewtonFailure(f"no convergence in {max_iter} iterations (err {errors[-1]:.3e})")


# ---------------------------------------------------------------------------
# boundary-condition builders


def edge_compression_constraints(model, program: LoadProgram) -> AffineConstraints:
    """Full clamp on top/bottom edges: u1 = 0, u2 = -/+ u(t)/2, and (for the
    micromorphic model) v_i = 0 on the clamped edges."""
    mesh = model.mesh
    H = float(np.max(mesh.node_coords[:, 1]) - np.min(mesh.node_coords[:, 1]))
    u_max = program.u_over_H_max * H
    cons = AffineConstraints(model.n_dof)
    nn = mesh.n_nodes
    for name, sign in (("top", -1.0), ("bottom", +1.0)):
        nodes = mesh.boundary_sets[name]
        for a in nodes:
            cons.prescribe(2 * a, lambda t: 0.0)
            cons.prescribe(2 * a + 1, lambda t, s=sign: s * 0.5 * u_max * t)
            for i in range(model.n):
                cons.prescribe(2 * nn + i * nn + a, lambda t: 0.0)
    return cons.build()


def periodic_constraints(model, program: LoadProgram) -> AffineConstraints:
    """Periodic cell under an imposed overall stretch F = diag(1+e11, 1+e22).

    A component with eps_max None is a free control (zero conjugate average
    stress). v0 of one non-slave node is pinned to the affine field to remove
    rigid translation; mode fields are plain-periodic.
    """
    mesh = model.mesh
    if mesh.periodic_pairs.shape[0] == 0:
        raise ValueError("periodic program requires a paired mesh")
    free_ctrl = [k for k, e in enumerate((program.eps11_max, program.eps22_max))
                 if e is None]
    ctrl_of = {c: k for k, c in enumerate(free_ctrl)}
    cons = AffineConstraints(model.n_dof, n_controls=len(free_ctrl))
    nn = mesh.n_nodes

    def eps_fn(c):
        if c in ctrl_of:
            return None
        emax = (program.eps11_max, program.eps22_max)[c]
        return lambda t, e=emax: e * t

    slaves = set(mesh.periodic_pairs[:, 0].tolist())
    for (p, m_), shift in zip(mesh.periodic_pairs, mesh.periodic_shifts):
        for c in range(2):
            fn = eps_fn(c)
            coefs = None
            if fn is None:
                coefs = np.zeros(len(free_ctrl))
                coefs[ctrl_of[c]] = shift[c]
                cons.link(2 * p + c, 2 * m_ + c, None, coefs)
            else:
                cons.link(2 * p + c, 2 * m_ + c,
                          (lambda t, f=fn, s=float(shift[c]): f(t) * s))
        for i in range(model.n):
            base = 2 * nn + i * nn
            cons.link(base + p, base + m_)
    # pin one non-slave node to remove the free translation (the periodic
    # links fix all differences, so the affine field is recovered up to a
    # constant shift)
    pin = next(a for a in range(nn) if a not in slaves)
    cons.prescribe(2 * pin, lambda t: 0.0)
    cons.prescribe(2 * pin + 1, lambda t: 0.0)
    built = cons.build()
    built.control_cols = [built.n_free + k for k in range(len(free_ctrl))]
    built.free_strain_components = free_ctrl
    return built


# ---------------------------------------------------------------------------
# load-stepping driver


@dataclass
class HistoryRecord:
    step: int
    t: float
    eps11: float | None
    eps22: float | None
    u_over_H: float | None
    theta: np.ndarray | None  # averaged/nominal stress measures (2, 2)
    nominal_p22: float | None
    v_extrema: np.ndarray
    alpha1: float
    newton_macro: int
    newton_micro_mean: float
    wall_ms: float


@dataclass
class BifurcationEvent:
    t: float
    eps11: float | None
    eps22: float | None
    u_over_H: float | None
    nominal_p22: float | None
    alpha1: float
    multiplicity: int
    kind: str  # "local" | "global"
    branch_energies: list


@dataclass
class RunResult:
    history: list
    events: list
    aborted: bool
    v_norm: float
    final_u: np.ndarray | None = None

    def normalized_v(self, rec: HistoryRecord) -> np.ndarray:
        if self.v_norm <= 0:
            return rec.v_extrema
        return rec.v_extrema / self.v_norm


class LoadStepper:
    """Nested solution scheme: load stepping, Newton equilibration,
    eigenvalue stability control, eigenvector branch switching, automatic
    step halving with re-growth."""

    def __init__(self, model, cons: AffineConstraints, program: LoadProgram,
                 tol: float = 1e-6, max_iter: int = 25, eigen_pairs: int = 6,
                 char_len: float = 1.0, stab_theta: float = 1e-6,
                 refine_bifurcations: bool = True):
        self.model = model
        self.cons = cons
        self.program = program
        self.tol = tol
        self.max_iter = max_iter
        self.m = eigen_pairs
        self.char_len = char_len
        self.stab_theta = stab_theta
        self.refine = refine_bifurcations
        self.f_ref = None
        mesh = model.mesh
        self.H = float(np.max(mesh.node_coords[:, 1]) - np.min(mesh.node_coords[:, 1]))
        self.W = float(np.max(mesh.node_coords[:, 0]) - np.min(mesh.node_coords[:, 0]))
        if program.kind == "edge_compression":
            top = mesh.boundary_sets["top"]
            self._reaction_dofs = 2 * np.asarray(top) + 1
        else:
            self._reaction_dofs = None

    # -- measures ----------------------------------------------------------

    def measures(self, res: NewtonResult, t: float) -> dict:
        pr = self.program
        out = {"eps11": None, "eps22": None, "u_over_H": None, "nominal_p22": None}
        u_full = self.cons.full(res.u_red, t)
        if pr.kind == "edge_compression":
            out["u_over_H"] = pr.u_over_H_max * t
            out["eps22"] = -pr.u_over_H_max * t
            out["nominal_p22"] = float(np.sum(res.f_int[self._reaction_dofs])) / self.W
        else:
            e1, e2 = pr.eps(t)
            vals = {}
            for k, c in enumerate(getattr(self.cons, "free_strain_components", [])):
                vals[c] = float(res.u_red[self.cons.control_cols[k]])
            out["eps11"] = vals.get(0, e1)
            out["eps22"] = vals.get(1, e2)
            th = self.model._last_theta
            out["nominal_p22"] = float(th[1, 1]) if th is not None else None
        out["theta"] = None if self.model._last_theta is None else self.model._last_theta.copy()
        out["v_extrema"] = self.model.mode_extrema(u_full)
        return out

    def classify(self, psi_red: np.ndarray) -> str:
        full = self.cons.T @ psi_red
        if self.model.n > 0:
            nn = self.model.n_nodes
            v0p = float(np.linalg.norm(full[:2 * nn]))
            vp = float(np.linalg.norm(full[2 * nn:]))
            return "local" if vp >= v0p else "global"
        if self.program.kind != "edge_compression":
            return "local"
        mesh = self.model.mesh
        y = mesh.node_coords[:, 1]
        s = np.sin(np.pi * (y - np.min(y)) / self.H)
        psix = full[0::2]
        num = abs(float(psix @ s))
        den = float(np.linalg.norm(psix) * np.linalg.norm(s)) or 1.0
        return "global" if num / den >= 0.4 else "local"

    # -- building blocks -----------------------------------------------------

    def equilibrate(self, u_red: np.ndarray, t: float,
                    max_iter: int | None = None) -> NewtonResult:
        res = newton_equilibrate(self.model, self.cons, u_red, t, tol=self.tol,
                                 max_iter=max_iter or self.max_iter,
                                 f_ref=self.f_ref, char_len=self.char_len)
        if self.f_ref is None and res.residual0 > 0:
            self.f_ref = res.residual0
        return res

    def _candidates(self, report: StabilityReport):
        idx = [i for i, a in enumerate(report.lowest_eigenvalues)
               if a <= report.threshold][:3]
        V = report.eigenvectors
        cands = [V[:, i].copy() for i in idx]
        if len(idx) >= 2:
            import itertools

            for (i, j) in itertools.combinations(idx, 2):
                for s in (1.0, -1.0):
                    v = V[:, i] + s * V[:, j]
                    cands.append(v / np.linalg.norm(v))
        if len(idx) >= 3:
            for s2 in (1.0, -1.0):
                for s3 in (1.0, -1.0):
                    v = V[:, idx[0]] + s2 * V[:, idx[1]] + s3 * V[:, idx[2]]
                    cands.append(v / np.linalg.norm(v))
        return idx, cands

    def branch_switch(self, res: NewtonResult, report: StabilityReport, t: float):
        """Perturb along critical eigenvector combinations at fixed load.

        Acceptance is asymmetric on purpose: switching is *triggered* by the
        conservative threshold (alpha_1 <= theta*s) but a branch is only
        *taken* when it is a strictly stable equilibrium with lower energy
        than the current state. When every perturbation falls back to the
        current (strictly stable, merely soft) state, the current state is
        confirmed; if the current state has alpha_1 <= 0 and no better branch
        exists, the step fails so the driver can halve the increment.

        Returns (result, report, branch_energies, switched).
        """
        if report.is_stable:
            return res, report, [], False
        e_pre = res.energy
        e_tol = 1e-10 * (abs(e_pre) + 1e-12)
        alpha_pre = float(report.lowest_eigenvalues[0])
        idx, cands = self._candidates(report)
        tau0 = 1e-3 * max(float(np.linalg.norm(res.u_red)), self.char_len)
        # dense geometric ladder; a shorter scan suffices in the soft-but-
        # stable zone where perturbations only need to be ruled out
        kmax = 9 if alpha_pre <= 0 else 5
        snap = self.model.snapshot()
        best = None
        energies = []
        for ci, d in enumerate(cands):
            saw_only_fallbacks = True
            for k in range(kmax):
                tau = tau0 * 10.0 ** (0.5 * k)
                self.model.restore(snap)
                try:
                    # fail fast: exploration trials get a short leash
                    r2 = self.equilibrate(res.u_red + tau * d, t, max_iter=12)
                except (NewtonFailure, RVEDivergenceError, InadmissibleStateError):
                    saw_only_fallbacks = False
                    continue
                if abs(r2.energy - e_pre) <= e_tol:
                    continue  # fell back; keep increasing tau
                saw_only_fallbacks = False
                rep2 = stability_check(r2.K_red, self.m, self.stab_theta)
                a2 = float(rep2.lowest_eigenvalues[0])
                if a2 > 0 and r2.energy < e_pre - e_tol:
                    energies.append(r2.energy)
                    if best is None or r2.energy < best[0].energy:
                        best = (r2, rep2, self.model.snapshot())
                    break
            if alpha_pre > 0 and ci == 0 and saw_only_fallbacks and best is None:
                break  # soft but stable state reasserts itself; confirm it
        self.model.restore(snap)
        if best is not None:
            r2, rep2, msnap = best
            self.model.restore(msnap)
            return r2, rep2, energies, True
        if alpha_pre > 0:
            return res, report, [], False  # confirmed current equilibrium
        raise SwitchFailure("branch switching found no stable equilibrium", alpha_pre)

    def _refine_critical(self, t_lo, u_lo, a_lo, t_hi, res_hi, a_hi):
        """Illinois (modified regula falsi) refinement of the critical load
        factor on the current branch; returns (t_crit, result near t_crit).

        A handful of equilibrations is enough: the criteria consuming the
        critical strain tolerate a small fraction of the step size.
        """
        snap = self.model.snapshot()
        u_hi = res_hi.u_red
        res_star, t_star = res_hi, t_hi
        a_scale = max(abs(a_lo), abs(a_hi))
        width0 = t_hi - t_lo
        last_side = 0
        for _ in range(4):
            if a_hi == a_lo or (t_hi - t_lo) < 0.02 * width0:
                break
            t_new = t_hi - a_hi * (t_hi - t_lo) / (a_hi - a_lo)
            t_new = min(max(t_new, t_lo + 0.02 * (t_hi - t_lo)),
                        t_hi - 0.02 * (t_hi - t_lo))
            start = u_lo if abs(t_new - t_lo) < abs(t_new - t_hi) else u_hi
            try:
                r = self.equilibrate(start.copy(), t_new)
            except (NewtonFailure, RVEDivergenceError, InadmissibleStateError):
                break
            a_new = stability_check(r.K_red, self.m, self.stab_theta).lowest_eigenvalues[0]
            res_star, t_star = r, t_new
            if abs(a_new) <= 1e-2 * a_scale:
                break
            if a_new > 0:
                if last_side == +1:
                    a_hi *= 0.5  # Illinois: keep the stalled side honest
                t_lo, u_lo, a_lo = t_new, r.u_red, a_new
                last_side = +1
            else:
                if last_side == -1:
                    a_lo *= 0.5
                t_hi, u_hi, a_hi = t_new, r.u_red, a_new
                last_side = -1
        t_crit = t_hi - a_hi * (t_hi - t_lo) / (a_hi - a_lo) if a_hi != a_lo else t_hi
        self.model.restore(snap)
        return float(np.clip(t_crit, t_lo, t_hi)), res_star, t_star

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunResult:
        pr = self.program
        history: list[HistoryRecord] = []
        events: list[BifurcationEvent] = []
        if pr.steps == 0:
            return RunResult(history, events, aborted=False, v_norm=0.0)
        u_red = np.zeros(self.cons.n_red)
        dt0 = 1.0 / pr.steps
        dt = dt0
        t = 0.0
        # reference-state stability (for refinement bracketing)
        res0 = self.equilibrate(u_red.copy(), 0.0)
        rep0 = stability_check(res0.K_red, self.m, self.stab_theta)
        alpha_prev = float(rep0.lowest_eigenvalues[0])
        u_red = res0.u_red
        step = 0
        grow = 0
        cross_grow = 0
        prev = None  # (t, u_red) of the step before, for extrapolation
        while t < 1.0 - 1e-12:
            t_try = min(t + dt, 1.0)
            u_snap = u_red.copy()
            micro_snap = self.model.snapshot()
            t0 = time.perf_counter()
            u_start = u_red.copy()
            if prev is not None and t > prev[0]:
                cand = u_red + (t_try - t) / (t - prev[0]) * (u_red - prev[1])
                if self.model.is_admissible(self.cons.full(cand, t_try)):
                    u_start = cand
            switched = False
            try:
                res = self.equilibrate(u_start, t_try)
                report = stability_check(res.K_red, self.m, self.stab_theta)
                if not report.is_stable:
                    kind = self.classify(report.eigenvectors[:, 0])
                    mult = int(np.sum(report.lowest_eigenvalues <= report.threshold))
                    alpha_now = float(report.lowest_eigenvalues[0])
                    t_crit, res_star, t_star = (t_try, res, t_try)
                    if self.refine and alpha_prev > 0 and alpha_now <= 0:
                        t_crit, res_star, t_star = self._refine_critical(
                            t, u_snap, alpha_prev, t_try, res, alpha_now)
                    mstar = self.measures(res_star, t_star)
                    res, report, branch_energies, switched = self.branch_switch(
                        res, report, t_try)
                    if switched:
                        events.append(BifurcationEvent(
                            t=t_crit, eps11=mstar["eps11"], eps22=mstar["eps22"],
                            u_over_H=mstar["u_over_H"], nominal_p22=mstar["nominal_p22"],
                            alpha1=alpha_now, multiplicity=mult,
                            kind=kind, branch_energies=branch_energies))
            except SwitchFailure as sf:
                u_red = u_snap
                self.model.restore(micro_snap)
                grow = 0
                if sf.alpha1 <= 0 and cross_grow < 4 and t + 2.0 * dt <= 1.0 + 1e-12:
                    # just past a bifurcation the branches are numerically
                    # entangled; step farther instead of creeping closer
                    dt *= 2.0
                    cross_grow += 1
                else:
                    dt *= 0.5
                    if dt < 1e-4 * dt0:
                        return RunResult(history, events, aborted=True,
                                         v_norm=self._vnorm(history))
                continue
            except (NewtonFailure, RVEDivergenceError, InadmissibleStateError):
                u_red = u_snap
                self.model.restore(micro_snap)
                dt *= 0.5
                grow = 0
                if dt < 1e-4 * dt0:
                    return RunResult(history, events, aborted=True,
                                     v_norm=self._vnorm(history))
                continue
            wall = (time.perf_counter() - t0) * 1e3
            # extrapolation is invalid across a branch switch
            prev = None if switched else (t, u_snap)
            u_red = res.u_red
            t = t_try
            step += 1
            cross_grow = 0
            m = self.measures(res, t)
            alpha_prev = float(report.lowest_eigenvalues[0])
            history.append(HistoryRecord(
                step=step, t=t, eps11=m["eps11"], eps22=m["eps22"],
                u_over_H=m["u_over_H"], theta=m["theta"], nominal_p22=m["nominal_p22"],
                v_extrema=m["v_extrema"], alpha1=alpha_prev,
                newton_macro=res.iterations,
                newton_micro_mean=self.model.last_micro_iters, wall_ms=wall))
            grow += 1
            if grow >= 2 and dt < dt0:
                dt = min(2.0 * dt, dt0)
                grow = 0
        u_full = self.cons.full(u_red, t)
        return RunResult(history, events, aborted=False,
                         v_norm=self._vnorm(history), final_u=u_full)

    @staticmethod
    def _vnorm(history) -> float:
        vals = [np.max(r.v_extrema) for r in history if r.v_extrema.size]
        return float(np.max(vals)) if vals else 0.0


def run_load_program(model, cons: AffineConstraints, program: LoadProgram,
                     **kw) -> RunResult:
    return LoadStepper(model, cons, program, **kw).run()
