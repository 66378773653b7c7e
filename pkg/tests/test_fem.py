"""T6 element and assembly checks (finite-difference and analytic oracles)."""

import numpy as np
import pytest
import scipy.sparse as sp

from micromorph.fem import (
    QUAD_POINTS,
    QUAD_WEIGHTS,
    FemTables,
    bordered_system,
    element_energy,
    element_internal_force,
    element_stiffness_matrix,
    eval_shape_t6,
    shape_t6,
)
from micromorph.material import HyperelasticParams

TABLE1 = HyperelasticParams(c1=0.55, c2=0.3, bulk_k=55.0)

# a mildly distorted straight-edged T6 element
CORNERS = np.array([[0.0, 0.0], [1.1, -0.1], [0.2, 0.9]])


def t6_coords(corners):
    mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
    return np.vstack([corners, mids])


def two_element_mesh():
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    # elements (0,1,2) and (0,2,3) share the diagonal edge
    pts = {}

    def nid(p):
        key = (round(p[0], 12), round(p[1], 12))
        if key not in pts:
            pts[key] = len(pts)
        return pts[key]

    elems = []
    for tri in ([0, 1, 2], [0, 2, 3]):
        c = corners[tri]
        coords6 = t6_coords(c)
        elems.append([nid(p) for p in coords6])
    coords = np.empty((len(pts), 2))
    for (x, y), i in pts.items():
        coords[i] = (x, y)
    return coords, np.array(elems, dtype=np.int64)


def test_shape_corner_lagrange_property():
    N, _ = eval_shape_t6((1.0, 0.0, 0.0))
    assert N == pytest.approx([1, 0, 0, 0, 0, 0], abs=1e-15)


def test_shape_centroid_values():
    N, _ = eval_shape_t6((1 / 3, 1 / 3, 1 / 3))
    assert np.sum(N) == pytest.approx(1.0, abs=1e-14)
    assert N[:3] == pytest.approx([-1 / 9] * 3, abs=1e-14)
    assert N[3:] == pytest.approx([4 / 9] * 3, abs=1e-14)


def test_shape_partition_of_unity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        b = rng.dirichlet([1, 1, 1])
        N, dN = eval_shape_t6(b)
        assert np.sum(N) == pytest.approx(1.0, abs=1e-12)
        assert np.sum(dN, axis=0) == pytest.approx([0.0, 0.0], abs=1e-12)


def test_quadrature_weights_and_degree2_exactness():
    assert np.sum(QUAD_WEIGHTS) == pytest.approx(0.5, abs=1e-16)
    assert np.all(QUAD_WEIGHTS > 0)
    # reference-triangle monomial integrals: x^2 -> 1/12, x*y -> 1/24, y^2 -> 1/12
    x, y = QUAD_POINTS[:, 0], QUAD_POINTS[:, 1]
    assert np.sum(QUAD_WEIGHTS * x * x) == pytest.approx(1 / 12, abs=1e-14)
    assert np.sum(QUAD_WEIGHTS * x * y) == pytest.approx(1 / 24, abs=1e-14)
    assert np.sum(QUAD_WEIGHTS * y * y) == pytest.approx(1 / 12, abs=1e-14)


def test_mapped_quadrature_integrates_quadratics():
    coords = t6_coords(CORNERS)
    t = FemTables(coords, np.arange(6, dtype=np.int64)[None, :])
    # integrate f(x, y) = x^2 over the mapped triangle; oracle by dense
    # subdivision quadrature of the affine map
    a, b, c = CORNERS
    ab, ac = b - a, c - a
    area = 0.5 * abs(ab[0] * ac[1] - ab[1] * ac[0])

    def exact_x2():
        # integral of x^2 over a triangle via degree-2 vertex/edge-midpoint rule
        pts = np.array([0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)])
        return area * np.mean(pts[:, 0] ** 2)  # midpoint rule is degree-2 exact

    got = float(np.sum(t.wdetJ * t.qp_x[..., 0] ** 2))
    assert got == pytest.approx(exact_x2(), rel=1e-13)
    assert float(np.sum(t.wdetJ)) == pytest.approx(area, rel=1e-13)


def test_element_kinematics_invariants():
    coords = t6_coords(CORNERS)
    t = FemTables(coords, np.arange(6, dtype=np.int64)[None, :])
    assert np.all(t.detJ > 0)
    # partition of unity carries to gradients: column sums of dNdX vanish
    assert np.max(np.abs(np.sum(t.dNdX, axis=2))) < 1e-12


def test_element_force_zero_at_rest_and_translation_invariant():
    coords = t6_coords(CORNERS)
    f0 = element_internal_force(coords, np.zeros(12), TABLE1)
    assert np.all(f0 == 0.0)
    rng = np.random.default_rng(1)
    u = 0.02 * rng.standard_normal(12)
    f = element_internal_force(coords, u, TABLE1)
    ut = u.copy()
    ut[0::2] += 0.37
    ut[1::2] -= 0.11
    ft = element_internal_force(coords, ut, TABLE1)
    assert np.max(np.abs(f - ft)) <= 1e-12 * max(1.0, np.max(np.abs(f)))


def test_element_force_matches_fd_of_energy():
    coords = t6_coords(CORNERS)
    rng = np.random.default_rng(2)
    u = 0.02 * rng.standard_normal(12)
    f = element_internal_force(coords, u, TABLE1)
    h = 1e-7
    for d in range(12):
        up, um = u.copy(), u.copy()
        up[d] += h
        um[d] -= h
        fd = (element_energy(coords, up, TABLE1) - element_energy(coords, um, TABLE1)) / (2 * h)
        assert abs(f[d] - fd) <= 1e-6 * (1.0 + abs(f[d]))


def test_element_stiffness_symmetry_and_fd():
    coords = t6_coords(CORNERS)
    rng = np.random.default_rng(3)
    u = 0.02 * rng.standard_normal(12)
    K = element_stiffness_matrix(coords, u, TABLE1)
    assert np.linalg.norm(K - K.T) <= 1e-10 * np.linalg.norm(K)
    h = 1e-7
    for d in range(12):
        up, um = u.copy(), u.copy()
        up[d] += h
        um[d] -= h
        col = (element_internal_force(coords, up, TABLE1)
               - element_internal_force(coords, um, TABLE1)) / (2 * h)
        assert np.all(np.abs(K[:, d] - col) <= 1e-5 * (1.0 + np.abs(K[:, d])))


def test_element_stiffness_rigid_modes_at_rest():
    coords = t6_coords(CORNERS)
    K = element_stiffness_matrix(coords, np.zeros(12), TABLE1)
    w = np.sort(np.linalg.eigvalsh(K))
    scale = w[-1]
    # exactly 3 near-zero eigenvalues: two translations and one rotation
    assert np.all(np.abs(w[:3]) < 1e-10 * scale)
    assert np.all(w[3:] > 1e-6 * scale)


def test_assembly_single_element_equals_element():
    coords = t6_coords(CORNERS)
    t = FemTables(coords, np.arange(6, dtype=np.int64)[None, :])
    rng = np.random.default_rng(4)
    u = 0.02 * rng.standard_normal(12)
    _, f, K = t.force_stiffness(u, TABLE1)
    assert f == pytest.approx(element_internal_force(coords, u, TABLE1), abs=1e-14)
    assert K.toarray() == pytest.approx(element_stiffness_matrix(coords, u, TABLE1), abs=1e-14)


def test_assembly_shared_edge_rows_are_sums():
    coords, elems = two_element_mesh()
    t = FemTables(coords, elems)
    rng = np.random.default_rng(5)
    u = 0.01 * rng.standard_normal(2 * coords.shape[0])
    _, f, _ = t.force_stiffness(u, TABLE1)
    # recompute element-wise and scatter manually
    fman = np.zeros_like(u)
    for e in range(2):
        ce = coords[elems[e]]
        ue = u[t.dofs[e]]
        fman[t.dofs[e]] += element_internal_force(ce, ue, TABLE1)
    assert f == pytest.approx(fman, abs=1e-13)


def test_global_force_matches_fd_of_total_energy():
    coords, elems = two_element_mesh()
    t = FemTables(coords, elems)
    rng = np.random.default_rng(6)
    u = 0.01 * rng.standard_normal(2 * coords.shape[0])
    _, f, K = t.force_stiffness(u, TABLE1)
    h = 1e-7
    for d in range(len(u)):
        up, um = u.copy(), u.copy()
        up[d] += h
        um[d] -= h
        fd = (t.energy(up, TABLE1) - t.energy(um, TABLE1)) / (2 * h)
        assert abs(f[d] - fd) <= 1e-6 * (1.0 + abs(f[d]))
    assert (K - K.T).toarray() == pytest.approx(0.0, abs=1e-10 * abs(K).max())


def test_gramian_partition_of_unity():
    coords, elems = two_element_mesh()
    t = FemTables(coords, elems)
    M = t.gramian()
    ones = np.zeros(2 * coords.shape[0])
    ones[0::2] = 1.0
    area = float(np.sum(t.wdetJ))
    assert ones @ (M @ ones) == pytest.approx(area, rel=1e-12)
    assert abs(M - M.T).max() < 1e-14


def test_bordered_system_layout():
    K = sp.eye(4, format="csc")
    C = sp.csc_matrix(np.array([[1.0, -1.0, 0.0, 0.0]]))
    A = bordered_system(K, C).toarray()
    assert A.shape == (5, 5)
    assert A[:4, :4] == pytest.approx(np.eye(4))
    assert A[4, :4] == pytest.approx([1, -1, 0, 0])
    assert A[:4, 4] == pytest.approx([1, -1, 0, 0])
    assert A[4, 4] == 0.0
    assert np.allclose(A, A.T)
