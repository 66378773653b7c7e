"""Macro solver checks: constraints, element quantities, Newton, stability."""

import numpy as np
import pytest
import scipy.sparse as sp

from micromorph.macro import (
    AffineConstraints,
    LoadProgram,
    MicromorphicModel,
    NewtonResult,
    edge_compression_constraints,
    newton_equilibrate,
    periodic_constraints,
    stability_check,
)
from micromorph.material import HyperelasticParams
from micromorph.mesh import (
    LatticeSpec,
    MeshT6,
    generate_perforated_mesh,
    generate_rect_mesh,
    pair_periodic_boundaries,
)
from micromorph.modes import square_mode_set
from micromorph.rve import RVEProblem

TABLE1 = HyperelasticParams(c1=0.55, c2=0.3, bulk_k=55.0)
L = 9.97


@pytest.fixture(scope="module")
def rve():
    # tight micro tolerances: the finite-difference oracles below difference
    # assembled forces with a 1e-6 step
    mesh = generate_perforated_mesh(LatticeSpec("square", L, 8.67, (2, 2), L / 5.0))
    mesh = pair_periodic_boundaries(mesh, [(2 * L, 0.0), (0.0, 2 * L)])
    return RVEProblem(mesh, square_mode_set(mesh, L), TABLE1,
                      tol_force=1e-12, tol_disp_rel=1e-12, max_iter=40)


@pytest.fixture(scope="module")
def small_model(rve):
    mmesh = generate_rect_mesh(2 * L, 2 * L, 2 * L, char_length=L)
    return MicromorphicModel(mmesh, rve)


def test_affine_constraints_chains_and_offsets():
    cons = AffineConstraints(6)
    cons.prescribe(0, lambda t: 2.0 * t)
    cons.link(1, 0, lambda t: t)        # chained to a prescribed root
    cons.link(3, 2, lambda t: -0.5 * t)
    cons.link(4, 3)                     # chained slave
    cons.build()
    u = cons.full(np.array([1.0, 7.0]), 2.0)  # free dofs: 2, 5
    assert u[0] == pytest.approx(4.0)
    assert u[1] == pytest.approx(6.0)   # 2t + t
    assert u[2] == pytest.approx(1.0)
    assert u[3] == pytest.approx(0.0)   # 1 - 0.5*2
    assert u[4] == pytest.approx(0.0)
    assert u[5] == pytest.approx(7.0)


def test_affine_constraints_control_columns():
    cons = AffineConstraints(4, n_controls=1)
    cons.link(2, 0, None, [3.0])
    cons.build()
    # free dofs are 0, 1, 3; the control value is appended to the reduced
    # vector
    assert cons.n_red == 4
    u = cons.full(np.array([1.0, 5.0, 9.0, 0.25]), 0.0)
    assert u[2] == pytest.approx(u[0] + 3.0 * 0.25)
    assert u[3] == pytest.approx(9.0)


def test_periodic_constraints_reproduce_affine_offsets(rve):
    model_mesh = generate_rect_mesh(10.0, 10.0, 5.0, char_length=1.386)
    paired = pair_periodic_boundaries(model_mesh, [(10.0, 0.0), (0.0, 10.0)])

    class Dummy:
        mesh = paired
        n = 0
        n_dof = 2 * paired.n_nodes

    prog = LoadProgram("periodic_biaxial", steps=4, eps11_max=-0.02, eps22_max=-0.05)
    cons = periodic_constraints(Dummy, prog)
    u = cons.full(np.zeros(cons.n_red), 1.0)
    for (p, m), s in zip(paired.periodic_pairs, paired.periodic_shifts):
        assert u[2 * p] - u[2 * m] == pytest.approx(-0.02 * s[0], abs=1e-12)
        assert u[2 * p + 1] - u[2 * m + 1] == pytest.approx(-0.05 * s[1], abs=1e-12)


def test_periodic_free_component_control(rve):
    model_mesh = generate_rect_mesh(10.0, 10.0, 5.0, char_length=1.386)
    paired = pair_periodic_boundaries(model_mesh, [(10.0, 0.0), (0.0, 10.0)])

    class Dummy:
        mesh = paired
        n = 0
        n_dof = 2 * paired.n_nodes

    prog = LoadProgram("periodic_biaxial", steps=4, eps11_max=None, eps22_max=-0.05)
    cons = periodic_constraints(Dummy, prog)
    ur = np.zeros(cons.n_red)
    ur[cons.control_cols[0]] = 0.013
    u = cons.full(ur, 1.0)
    for (p, m), s in zip(paired.periodic_pairs, paired.periodic_shifts):
        assert u[2 * p] - u[2 * m] == pytest.approx(0.013 * s[0], abs=1e-12)


def one_element_mesh():
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
    coords = np.vstack([corners, mids])
    elems = np.arange(6, dtype=np.int64)[None, :]
    mesh = MeshT6(coords, elems, char_length=1.0)
    mesh.boundary_sets = {"top": np.array([2]), "bottom": np.array([0, 1, 3])}
    return mesh


def test_macro_element_force_constant_stress_oracle(rve):
    """With Theta = I the v0 force equals the boundary-flux integral of the
    shape functions (divergence theorem), computed analytically by Simpson
    on each T6 edge."""
    mesh = one_element_mesh()
    model = MicromorphicModel(mesh, rve)
    S = model.S[0]  # (3, Y, 18)
    wJ = model.tab.wdetJ[0]
    theta_col = np.array([1.0, 0.0, 0.0, 1.0])
    yhat = np.concatenate([theta_col, np.zeros(3 * rve.n)])
    f = sum(wJ[g] * (S[g].T @ yhat) for g in range(3))
    f0 = f[:12].reshape(6, 2)

    # oracle: integral of dN_a/dX_i = sum of edge integrals of N_a * n_i
    coords = mesh.node_coords
    want = np.zeros((6, 2))
    edges = [(0, 3, 1), (1, 4, 2), (2, 5, 0)]
    for (a, m, b) in edges:
        ln = np.linalg.norm(coords[b] - coords[a])
        tang = (coords[b] - coords[a]) / ln
        nrm = np.array([tang[1], -tang[0]])  # outward for CCW ordering
        # Simpson: int N over edge = len/6 * (N(a), 4 N(m), N(b))
        want[a] += ln / 6.0 * nrm
        want[m] += 4.0 * ln / 6.0 * nrm
        want[b] += ln / 6.0 * nrm
    assert f0 == pytest.approx(want, abs=1e-13)


def test_undeformed_state_zero_force(small_model):
    _, f, _ = small_model.assemble(np.zeros(small_model.n_dof))
    assert np.max(np.abs(f)) < 1e-12


def admissible_random_state(model, rng, mag=0.004):
    u = np.zeros(model.n_dof)
    nn = model.n_nodes
    u[:2 * nn] = mag * L * rng.standard_normal(2 * nn)
    u[2 * nn:] = 3 * mag * rng.standard_normal(model.n_dof - 2 * nn)
    assert model.is_admissible(u)
    return u


def test_macro_stiffness_symmetry_and_fd(small_model):
    rng = np.random.default_rng(21)
    u = admissible_random_state(small_model, rng)
    _, f, K = small_model.assemble(u)
    Kd = K.toarray()
    assert np.max(np.abs(Kd - Kd.T)) <= 1e-8 * np.max(np.abs(Kd))
    h = 1e-6
    cols = rng.choice(small_model.n_dof, size=8, replace=False)
    for d in cols:
        up, um = u.copy(), u.copy()
        up[d] += h
        um[d] -= h
        _, fp, _ = small_model.assemble(up, need_tangent=False)
        _, fm, _ = small_model.assemble(um, need_tangent=False)
        fd = (fp - fm) / (2 * h)
        assert np.max(np.abs(Kd[:, d] - fd)) <= 1e-4 * (1.0 + np.max(np.abs(Kd[:, d])))


def test_newton_zero_load_one_iteration(small_model):
    prog = LoadProgram("edge_compression", steps=4, u_over_H_max=0.02)
    cons = edge_compression_constraints(small_model, prog)
    res = newton_equilibrate(small_model, cons, np.zeros(cons.n_red), 0.0, char_len=L)
    assert res.iterations == 1
    assert np.max(np.abs(res.u_red)) == 0.0


def test_newton_quadratic_decay_and_path_independence(small_model):
    prog = LoadProgram("edge_compression", steps=4, u_over_H_max=0.01)
    cons = edge_compression_constraints(small_model, prog)
    tol = 1e-11
    res = newton_equilibrate(small_model, cons, np.zeros(cons.n_red), 0.5,
                             tol=tol, char_len=L)
    errs = res.errors
    assert len(errs) >= 3
    # strong (superlinear) decay over the final iterations
    assert errs[-1] <= 1e-3 * errs[-2]
    # two half-steps vs one full step
    small_model.restore(small_model.snapshot() * 0.0)
    r1 = newton_equilibrate(small_model, cons, np.zeros(cons.n_red), 0.25,
                            tol=tol, char_len=L)
    r2 = newton_equilibrate(small_model, cons, r1.u_red, 0.5, tol=tol, char_len=L)
    dv = np.linalg.norm(r2.u_red - res.u_red)
    assert dv <= 1e-8 * max(np.linalg.norm(res.u_red), 1.0)


def test_stability_check_trivial_matrices():
    rep = stability_check(sp.csc_matrix(np.diag([2.0, 1.0, -0.5])), m=3)
    assert rep.lowest_eigenvalues[0] == pytest.approx(-0.5)
    assert not rep.is_stable
    assert abs(abs(rep.eigenvectors[2, 0]) - 1.0) < 1e-12
    rep2 = stability_check(sp.eye(5, format="csc"), m=3)
    assert rep2.is_stable
    assert np.all(np.diff(rep2.lowest_eigenvalues) >= -1e-12)


def test_branch_switch_noop_on_stable(small_model):
    from micromorph.macro import LoadStepper

    prog = LoadProgram("edge_compression", steps=2, u_over_H_max=0.005)
    cons = edge_compression_constraints(small_model, prog)
    st = LoadStepper(small_model, cons, prog, char_len=L)
    res = st.equilibrate(np.zeros(cons.n_red), 1.0)
    rep = stability_check(res.K_red)
    assert rep.is_stable
    out, rep2, energies, switched = st.branch_switch(res, rep, 1.0)
    assert out is res and not switched and energies == []
