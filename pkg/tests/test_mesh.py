"""Mesh generator checks: analytic areas, pairing oracles, determinism."""

import hashlib

import numpy as np
import pytest

from micromorph.mesh import (
    GeometryError,
    LatticeSpec,
    MeshT6,
    PairingError,
    boundary_nodes,
    generate_perforated_mesh,
    generate_rect_mesh,
    generate_specimen_mesh,
    mesh_area,
    outer_boundary_nodes,
    pair_periodic_boundaries,
    validate_mesh,
)

L = 9.97
D = 8.67


def mesh_digest(mesh: MeshT6) -> str:
    h = hashlib.sha256()
    h.update(mesh.node_coords.tobytes())
    h.update(mesh.elements.astype(np.int64).tobytes())
    return h.hexdigest()


def test_solid_rectangle_area_exact():
    spec = LatticeSpec("square", 1.0, 0.0, (3, 2), 0.1)
    mesh = generate_perforated_mesh(spec)
    assert validate_mesh(mesh) == []
    assert mesh_area(mesh) == pytest.approx(6.0, rel=1e-10)


def test_single_cell_hole_area_within_half_percent():
    spec = LatticeSpec("square", 1.0, 0.867, (1, 1), 0.1)
    mesh = generate_perforated_mesh(spec)
    assert validate_mesh(mesh) == []
    want = 1.0 - np.pi * 0.867**2 / 4.0
    assert mesh_area(mesh) == pytest.approx(want, rel=5e-3)


def test_rve_2x2_paper_geometry():
    spec = LatticeSpec("square", L, D, (2, 2), L / 10.0)
    mesh = generate_perforated_mesh(spec)
    assert validate_mesh(mesh) == []
    want = (2 * L) ** 2 - 4 * np.pi * D**2 / 4.0
    assert mesh_area(mesh) == pytest.approx(want, rel=5e-3)
    # centered frame with holes at (+-l/2, +-l/2)
    assert np.min(mesh.node_coords[:, 0]) == pytest.approx(-L, abs=1e-9 * L)
    assert np.max(mesh.node_coords[:, 1]) == pytest.approx(L, abs=1e-9 * L)
    # hole boundary resolution
    m_exp = max(8, round(np.pi * D / (L / 10.0)))
    bset = boundary_nodes(mesh)
    outer = set(outer_boundary_nodes(mesh).tolist())
    hole_corner = [i for i in bset if i not in outer and i < mesh.elements[:, :3].max() + 1]
    # 4 holes, corner nodes only appear once per ring
    # (midside nodes excluded by construction of the ring templates)
    assert len(hole_corner) >= 4 * m_exp


def test_average_edge_length_near_target():
    for h in (L / 10.0, L / 6.0):
        spec = LatticeSpec("square", L, D, (2, 2), h)
        mesh = generate_perforated_mesh(spec)
        el = mesh.elements
        c = mesh.node_coords
        lens = []
        for i, j in ((0, 1), (1, 2), (2, 0)):
            lens.append(np.linalg.norm(c[el[:, i]] - c[el[:, j]], axis=1))
        mean = float(np.mean(np.concatenate(lens)))
        assert 0.65 * h <= mean <= 1.35 * h


def test_generation_deterministic():
    spec = LatticeSpec("square", L, D, (2, 2), L / 8.0)
    a = generate_perforated_mesh(spec)
    b = generate_perforated_mesh(spec)
    assert mesh_digest(a) == mesh_digest(b)
    sh = generate_specimen_mesh(LatticeSpec("square", L, D, (2, 3), L / 6.0), (0.3 * L, 0.6 * L))
    sh2 = generate_specimen_mesh(LatticeSpec("square", L, D, (2, 3), L / 6.0), (0.3 * L, 0.6 * L))
    assert mesh_digest(sh) == mesh_digest(sh2)


def test_unit_square_pairing_corner_chain():
    mesh = generate_rect_mesh(1.0, 1.0, 0.25, char_length=1.0)
    paired = pair_periodic_boundaries(mesh, [(1.0, 0.0), (0.0, 1.0)])
    assert validate_mesh(paired) == []
    pp = paired.periodic_pairs
    # corners: 4 nodes in one chain -> 3 independent pairs
    corners = []
    for x in (0.0, 1.0):
        for y in (0.0, 1.0):
            idx = np.where((np.abs(paired.node_coords[:, 0] - x) < 1e-12)
                           & (np.abs(paired.node_coords[:, 1] - y) < 1e-12))[0]
            corners.extend(idx.tolist())
    corner_pairs = [p for p in pp.tolist() if p[0] in corners and p[1] in corners]
    assert len(corner_pairs) == 3
    # non-corner boundary nodes pair 1:1
    bnd = outer_boundary_nodes(mesh)
    n_other = len(bnd) - 4
    assert pp.shape[0] == 3 + n_other // 2
    # bijection: plus and minus sets are disjoint for non-corner nodes and
    # applying the pair map twice with negated shifts is the identity
    assert validate_mesh(paired) == []


def test_rve_pairing_square():
    spec = LatticeSpec("square", L, D, (2, 2), L / 6.0)
    mesh = generate_perforated_mesh(spec)
    paired = pair_periodic_boundaries(mesh, [(2 * L, 0.0), (0.0, 2 * L)])
    assert validate_mesh(paired) == []
    # every outer node is in at least one pair; hole nodes in none
    outer = set(outer_boundary_nodes(mesh).tolist())
    touched = set(paired.periodic_pairs.ravel().tolist())
    assert touched <= outer
    assert touched == outer
    # involution-free bijection: no node appears twice on the same side with
    # the same shift; pairs map plus -> minus exactly by the stored shift
    c = paired.node_coords
    dev = c[paired.periodic_pairs[:, 0]] - c[paired.periodic_pairs[:, 1]] - paired.periodic_shifts
    assert np.max(np.linalg.norm(dev, axis=1)) <= 1e-9 * L


def brute_force_pair_count(mesh: MeshT6, shifts, tol):
    """Independent oracle: nearest-image graph rank over outer boundary nodes."""
    bnd = outer_boundary_nodes(mesh)
    pts = mesh.node_coords[bnd]
    parent = list(range(len(bnd)))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    edges = 0
    for s in shifts:
        for i in range(len(bnd)):
            q = pts[i] - np.asarray(s)
            d = np.linalg.norm(pts - q, axis=1)
            j = int(np.argmin(d))
            if d[j] <= tol and j != i:
                ri, rj = root(i), root(j)
                if ri != rj:
                    parent[ri] = rj
                    edges += 1
    return edges


def test_hexagonal_cell_pairing_matches_brute_force():
    l = 1.386
    spec = LatticeSpec("hexagonal", l, 1.28, (2, 2), l / 8.0)
    mesh = generate_perforated_mesh(spec)
    assert validate_mesh(mesh) == []
    a1, a2 = (2 * l, 0.0), (l, np.sqrt(3.0) * l)
    paired = pair_periodic_boundaries(mesh, [a1, a2])
    assert validate_mesh(paired) == []
    outer = outer_boundary_nodes(mesh)
    touched = set(paired.periodic_pairs.ravel().tolist())
    assert touched == set(outer.tolist())
    shifts = []
    for m in (-1, 0, 1):
        for n in (-1, 0, 1):
            if (m, n) != (0, 0):
                shifts.append((m * a1[0] + n * a2[0], m * a1[1] + n * a2[1]))
    want = brute_force_pair_count(paired, shifts, 1e-6 * l)
    assert paired.periodic_pairs.shape[0] == want
    # cell area vs solid area: 4 holes of diameter d in area 2*sqrt(3)*l^2
    want_area = 2 * np.sqrt(3.0) * l * l - 4 * np.pi * 1.28**2 / 4.0
    assert mesh_area(mesh) == pytest.approx(want_area, rel=5e-3)
    assert mesh.cell_area == pytest.approx(2 * np.sqrt(3.0) * l * l, rel=1e-12)


def test_validate_flags_inverted_element():
    spec = LatticeSpec("square", 1.0, 0.0, (1, 1), 0.5)
    mesh = generate_perforated_mesh(spec)
    el = mesh.elements.copy()
    el[0, [0, 1]] = el[0, [1, 0]]  # swap two corners -> negative Jacobian
    bad = MeshT6(mesh.node_coords, el, char_length=1.0)
    rep = validate_mesh(bad)
    assert any("Jacobian" in r and "0" in r for r in rep)


def test_validate_flags_offset_midside():
    spec = LatticeSpec("square", 1.0, 0.0, (1, 1), 0.5)
    mesh = generate_perforated_mesh(spec)
    c = mesh.node_coords.copy()
    c[mesh.elements[0, 3]] += 0.1  # midside invariant broken
    bad = MeshT6(c, mesh.elements, char_length=1.0)
    rep = validate_mesh(bad)
    assert any("midside" in r for r in rep)


def test_translated_specimen():
    spec = LatticeSpec("square", 1.0, 0.867, (2, 3), 1.0 / 6.0)
    base = generate_specimen_mesh(spec, (0.0, 0.0))
    assert validate_mesh(base) == []
    ident = generate_perforated_mesh(LatticeSpec("square", 1.0, 0.867, (2, 3), 1.0 / 6.0))
    assert base.n_elems == ident.n_elems  # same tiling, different frame

    shifted = generate_specimen_mesh(spec, (0.5, 0.0))
    assert validate_mesh(shifted) == []
    a0 = mesh_area(base)
    a1 = mesh_area(shifted)
    assert abs(a1 - a0) / a0 < 0.02
    # window respected
    assert np.min(shifted.node_coords[:, 0]) >= -1e-12
    assert np.max(shifted.node_coords[:, 0]) <= 2.0 + 1e-12
    # clipped-hole case keeps positive Jacobians
    sh2 = generate_specimen_mesh(spec, (0.37, 0.81))
    assert validate_mesh(sh2) == []


def test_geometry_errors():
    with pytest.raises(GeometryError):
        LatticeSpec("square", 1.0, 1.2, (1, 1), 0.1)
    with pytest.raises(GeometryError):
        # polygonalized hole no longer fits inside the hexagonal patch
        generate_perforated_mesh(LatticeSpec("hexagonal", 1.0, 0.999, (2, 2), 0.1))
    mesh = generate_rect_mesh(1.0, 1.0, 0.5, char_length=1.0)
    with pytest.raises(PairingError):
        pair_periodic_boundaries(mesh, [(0.77, 0.0)])  # no images at that shift
