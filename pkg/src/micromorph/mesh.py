"""Deterministic quadratic-triangle meshing of perforated 2D domains.

Geometries covered:

* square stacking of circular holes: periodic RVE cells (centered frame) and
  rectangular specimens, optionally with the hole lattice translated so that
  boundary holes are clipped by the specimen window;
* hexagonal stacking: the periodic cell is built as the union of hole-centered
  hexagonal (Voronoi) patches, which keeps every hole interior and makes the
  periodic pairing exact under lattice translations;
* plain (solid) rectangles for macroscopic domains.

Each cell/patch is meshed with a structured O-grid between the polygonalized
hole and the cell polygon. Hole polygons are area-preserving (vertices sit on
a slightly enlarged radius so the polygon area equals the circle area), which
keeps the solid area exact up to round-off. All edges are straight; midside
nodes sit at corner midpoints.

Everything is deterministic: identical specs produce bit-identical meshes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class GeometryError(Exception):
    pass


class MeshingError(Exception):
    pass


class PairingError(Exception):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    """Perforated-lattice description. hole_diameter = 0 means a solid domain."""

    stacking: str  # "square" or "hexagonal"
    cell_size: float  # l [mm]
    hole_diameter: float  # d [mm]
    repetitions: tuple[int, int] = (1, 1)
    target_h: float = 0.0  # element size [mm]; default l/10

    def __post_init__(self):
        errs = self.validate()
        if errs:
            raise GeometryError("; ".join(errs))

    def validate(self) -> list[str]:
        errs = []
        if self.stacking not in ("square", "hexagonal"):
            errs.append(f"geometry.stacking unknown: {self.stacking!r}")
        if not self.cell_size > 0:
            errs.append("geometry.cell_size must be > 0")
        if self.hole_diameter < 0:
            errs.append("geometry.hole_diameter must be >= 0")
        if self.hole_diameter >= self.cell_size:
            errs.append("geometry.hole_diameter must be < cell_size (holes overlap)")
        if min(self.repetitions) < 1:
            errs.append("geometry.repetitions must be >= 1")
        if self.target_h < 0:
            errs.append("geometry.target_h must be > 0")
        return errs

    @property
    def h(self) -> float:
        return self.target_h if self.target_h > 0 else self.cell_size / 10.0


@dataclass
class MeshT6:
    """Straight-edged quadratic triangle mesh with periodic metadata.

    elements[:, :3] are corner nodes (CCW), elements[:, 3:] the midside nodes
    on edges (1,2), (2,3), (3,1). periodic_pairs rows are (plus, minus) node
    ids with coords[plus] - coords[minus] = periodic_shifts row.
    """

    node_coords: np.ndarray
    elements: np.ndarray
    boundary_sets: dict = field(default_factory=dict)
    periodic_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    periodic_shifts: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    char_length: float = 1.0
    cell_area: float | None = None  # full periodic-cell area incl. holes
    centroid: np.ndarray | None = None  # origin for micro positions X_m

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elems(self) -> int:
        return self.elements.shape[0]


# ---------------------------------------------------------------------------
# node bank: tolerance-based merging with deterministic ids


class _NodeBank:
    def __init__(self, tol: float):
        self.tol = tol
        self.coords: list[tuple[float, float]] = []
        self._grid: dict[tuple[int, int], list[int]] = {}

    def _key(self, x, y):
        return (int(np.floor(x / self.tol)), int(np.floor(y / self.tol)))

    def add(self, x: float, y: float) -> int:
        kx, ky = self._key(x, y)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for i in self._grid.get((kx + dx, ky + dy), ()):
                    px, py = self.coords[i]
                    if abs(px - x) <= self.tol and abs(py - y) <= self.tol:
                        return i
        i = len(self.coords)
        self.coords.append((x, y))
        self._grid.setdefault((kx, ky), []).append(i)
        return i

    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


# ---------------------------------------------------------------------------
# O-grid patch templates


def _ring_segments(d: float, h: float, multiple: int) -> int:
    m = max(8, int(round(np.pi * d / h)))
    return multiple * int(np.ceil(m / multiple))


def _poly_radius(r: float, m: int) -> float:
    # polygon with m vertices at this radius has the same area as the circle
    return r * np.sqrt(2.0 * np.pi / (m * np.sin(2.0 * np.pi / m)))


def _square_boundary_radius(theta: np.ndarray, half: float) -> np.ndarray:
    c = np.maximum(np.abs(np.cos(theta)), np.abs(np.sin(theta)))
    return half / c


def _hex_boundary_radius(theta: np.ndarray, apothem: float) -> np.ndarray:
    # pointy-top hexagon: edge normals at 0, 60, ..., 300 degrees
    a = np.deg2rad(60.0) * np.round(theta / np.deg2rad(60.0))
    return apothem / np.cos(theta - a)


def _ogrid_patch(l: float, d: float, h: float, shape: str):
    """Template triangulation of one cell around a centered hole.

    Returns (coords (n,2), tris (m,3)) in the patch-local frame (hole center
    at the origin). shape is "square" (cell [-l/2, l/2]^2) or "hex" (pointy-top
    hexagon with apothem l/2).
    """
    mult = 8 if shape == "square" else 12
    M = _ring_segments(d, h, mult)
    r_in = _poly_radius(0.5 * d, M)
    theta = 2.0 * np.pi * np.arange(M) / M
    if shape == "square":
        r_out = _square_boundary_radius(theta, 0.5 * l)
        gap_max = 0.5 * l * np.sqrt(2.0) - r_in
    else:
        r_out = _hex_boundary_radius(theta, 0.5 * l)
        gap_max = l / np.sqrt(3.0) - r_in
    if np.any(r_out <= r_in):
        raise GeometryError("hole does not fit inside the cell after polygonalization")
    n_r = max(1, int(np.floor(gap_max / h)))

    cs, sn = np.cos(theta), np.sin(theta)
    coords = np.empty(((n_r + 1) * M, 2))
    for j in range(n_r + 1):
        rad = r_in + (r_out - r_in) * (j / n_r)
        coords[j * M:(j + 1) * M, 0] = rad * cs
        coords[j * M:(j + 1) * M, 1] = rad * sn

    tris = []
    for j in range(n_r):
        for k in range(M):
            k1 = (k + 1) % M
            a = j * M + k
            b = j * M + k1
            c = (j + 1) * M + k1
            dd = (j + 1) * M + k
            # alternate the quad diagonal by ray parity; with M a multiple of
            # 4 this keeps the triangulation symmetric under the cell point
            # group, which the mode quadrature relies on
            if k % 2 == 0:
                tris.append((a, b, c))
                tris.append((a, c, dd))
            else:
                tris.append((a, b, dd))
                tris.append((b, c, dd))
    return coords, np.asarray(tris, dtype=np.int64)


def _grid_patch(w: float, h_: float, nx: int, ny: int):
    """Structured triangulation of a solid rectangle [0,w]x[0,h]."""
    xs = np.linspace(0.0, w, nx + 1)
    ys = np.linspace(0.0, h_, ny + 1)
    coords = np.array([(x, y) for y in ys for x in xs])
    tris = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b = a + 1
            c = a + nx + 2
            d = a + nx + 1
            if (i + j) % 2 == 0:  # alternate diagonals for symmetry
                tris.append((a, b, c))
                tris.append((a, c, d))
            else:
                tris.append((a, b, d))
                tris.append((b, c, d))
    return coords, np.asarray(tris, dtype=np.int64)


# ---------------------------------------------------------------------------
# T3 -> T6 and orientation


def _fix_orientation(coords: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = coords[tris]
    a2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) \
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = a2 < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _to_t6(coords: np.ndarray, tris: np.ndarray):
    tris = _fix_orientation(coords, tris)
    mid: dict[tuple[int, int], int] = {}
    extra: list[np.ndarray] = []
    nn = coords.shape[0]
    elems = np.empty((tris.shape[0], 6), dtype=np.int64)
    elems[:, :3] = tris
    for e, (a, b, c) in enumerate(tris):
        for k, (p, q) in enumerate(((a, b), (b, c), (c, a))):
            key = (p, q) if p < q else (q, p)
            m = mid.get(key)
            if m is None:
                m = nn + len(extra)
                mid[key] = m
                extra.append(0.5 * (coords[p] + coords[q]))
            elems[e, 3 + k] = m
    all_coords = np.vstack([coords, np.asarray(extra)]) if extra else coords.copy()
    return all_coords, elems


def _compress(coords: np.ndarray, tris: np.ndarray):
    used = np.unique(tris)
    remap = -np.ones(coords.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.size)
    return coords[used], remap[tris]


# ---------------------------------------------------------------------------
# axis-aligned window clipping (square-stacking specimens with translation)


def _snap_to_lines(coords: np.ndarray, tris: np.ndarray, lines) -> np.ndarray:
    # per-node shortest incident edge
    nn = coords.shape[0]
    min_edge = np.full(nn, np.inf)
    for (i, j) in ((0, 1), (1, 2), (2, 0)):
        a, b = tris[:, i], tris[:, j]
        ln = np.linalg.norm(coords[a] - coords[b], axis=1)
        np.minimum.at(min_edge, a, ln)
        np.minimum.at(min_edge, b, ln)
    out = coords.copy()
    for axis, value, _side in lines:
        sel = np.abs(out[:, axis] - value) < 0.3 * min_edge
        out[sel, axis] = value
    return out


def _clip_axis(coords_list: list, tris: np.ndarray, axis: int, value: float, side: int,
               line_id: int, cut_cache: dict):
    """Clip triangles against {side*(x[axis] - value) >= 0}; returns new tris."""

    def cut(na, nb):
        if na > nb:
            na, nb = nb, na
        key = (line_id, na, nb)
        idx = cut_cache.get(key)
        if idx is None:
            pa, pb = coords_list[na], coords_list[nb]
            t = (value - pa[axis]) / (pb[axis] - pa[axis])
            pos = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
            pos[axis] = value
            idx = len(coords_list)
            coords_list.append((pos[0], pos[1]))
            cut_cache[key] = idx
        return idx

    out = []
    for tri in tris:
        s = [side * (coords_list[n][axis] - value) for n in tri]
        if min(s) >= 0.0:
            out.append(tuple(tri))
            continue
        if max(s) <= 0.0:
            continue
        poly = []
        for k in range(3):
            n0, n1 = tri[k], tri[(k + 1) % 3]
            s0, s1 = s[k], s[(k + 1) % 3]
            if s0 >= 0.0:
                poly.append(n0)
            if (s0 > 0.0 and s1 < 0.0) or (s0 < 0.0 and s1 > 0.0):
                poly.append(cut(n0, n1))
        if len(poly) < 3:
            continue
        # fan from the smallest node id for determinism
        start = int(np.argmin(poly))
        poly = poly[start:] + poly[:start]
        for k in range(1, len(poly) - 1):
            out.append((poly[0], poly[k], poly[k + 1]))
    return np.asarray(out, dtype=np.int64)


def _drop_degenerate(coords: np.ndarray, tris: np.ndarray, scale: float):
    p = coords[tris]
    a2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) \
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    return tris[np.abs(a2) > 1e-10 * scale * scale]


# ---------------------------------------------------------------------------
# public generators


def _tile_square(spec: LatticeSpec, origin: np.ndarray, n1: int, n2: int,
                 cell_range1, cell_range2):
    """Tile O-grid (or solid) patches over cells; origin = lower-left corner."""
    l = spec.cell_size
    bank = _NodeBank(1e-8 * l)
    if spec.hole_diameter > 0:
        pc, pt = _ogrid_patch(l, spec.hole_diameter, spec.h, "square")
        centered = True
    else:
        n = max(1, int(round(l / spec.h)))
        pc, pt = _grid_patch(l, l, n, n)
        centered = False
    tris = []
    for i in cell_range1:
        for j in cell_range2:
            if centered:
                ox = origin[0] + (i + 0.5) * l
                oy = origin[1] + (j + 0.5) * l
            else:
                ox = origin[0] + i * l
                oy = origin[1] + j * l
            ids = [bank.add(x + ox, y + oy) for x, y in pc]
            idx = np.asarray(ids, dtype=np.int64)
            tris.append(idx[pt])
    return bank.array(), np.vstack(tris)


def generate_perforated_mesh(spec: LatticeSpec) -> MeshT6:
    """Mesh of the periodic cell in the lattice frame.

    Square stacking: the (n1*l x n2*l) cell centered at the origin with holes
    at the sub-cell centers (the classic 2x2 RVE for repetitions (2, 2)).
    Hexagonal stacking: the union of n1*n2 hole-centered hexagonal patches at
    sites i*(l,0) + j*(l/2, sqrt(3)/2*l); the periodic cell of the lattice
    spanned by n1*(l,0) and n2*(l/2, sqrt(3)/2*l).
    """
    l = spec.cell_size
    n1, n2 = spec.repetitions
    if spec.stacking == "square":
        origin = np.array([-0.5 * n1 * l, -0.5 * n2 * l])
        coords, tris = _tile_square(spec, origin, n1, n2, range(n1), range(n2))
        cell_area = (n1 * l) * (n2 * l)
        centroid = np.zeros(2)
    else:
        if spec.hole_diameter <= 0:
            raise GeometryError("hexagonal stacking requires a hole diameter")
        bank = _NodeBank(1e-8 * l)
        pc, pt = _ogrid_patch(l, spec.hole_diameter, spec.h, "hex")
        a1 = np.array([l, 0.0])
        a2 = np.array([0.5 * l, 0.5 * np.sqrt(3.0) * l])
        tris = []
        sites = []
        for j in range(n2):
            for i in range(n1):
                sites.append(i * a1 + j * a2)
        for s in sites:
            ids = [bank.add(x + s[0], y + s[1]) for x, y in pc]
            idx = np.asarray(ids, dtype=np.int64)
            tris.append(idx[pt])
        coords, tris = bank.array(), np.vstack(tris)
        cell_area = n1 * n2 * (np.sqrt(3.0) / 2.0) * l * l
        centroid = np.mean(np.asarray(sites), axis=0)

    coords, elems = _to_t6(coords, tris)
    mesh = MeshT6(coords, elems, char_length=l, cell_area=cell_area, centroid=centroid)
    _attach_rect_boundary_sets(mesh)
    return mesh


def generate_specimen_mesh(spec: LatticeSpec, shift=(0.0, 0.0)) -> MeshT6:
    """Square-stacking specimen [0, n1*l] x [0, n2*l], holes at cell centers
    offset by `shift` (components in [0, l)); boundary holes are clipped."""
    if spec.stacking != "square":
        raise GeometryError("specimen meshes are defined for square stacking")
    l = spec.cell_size
    n1, n2 = spec.repetitions
    W, H = n1 * l, n2 * l
    sx, sy = float(shift[0]) % l, float(shift[1]) % l
    if abs(sx) < 1e-12 * l and abs(sy) < 1e-12 * l:
        coords, tris = _tile_square(spec, np.zeros(2), n1, n2, range(n1), range(n2))
    else:
        origin = np.array([sx - l, sy - l])
        coords, tris = _tile_square(spec, origin, n1, n2, range(n1 + 2), range(n2 + 2))
        lines = ((0, 0.0, 1), (0, W, -1), (1, 0.0, 1), (1, H, -1))
        coords = _snap_to_lines(coords, tris, lines)
        coords_list = [tuple(c) for c in coords]
        for line_id, (axis, value, side) in enumerate(lines):
            cache: dict = {}
            tris = _clip_axis(coords_list, tris, axis, value, side, line_id, cache)
        coords = np.asarray(coords_list)
        tris = _drop_degenerate(coords, tris, l)
        coords, tris = _compress(coords, tris)
    coords, elems = _to_t6(coords, tris)
    mesh = MeshT6(coords, elems, char_length=l, cell_area=W * H,
                  centroid=np.array([0.5 * W, 0.5 * H]))
    _attach_rect_boundary_sets(mesh)
    return mesh


def generate_rect_mesh(width: float, height: float, target_h: float,
                       char_length: float | None = None) -> MeshT6:
    """Solid rectangle [0, W] x [0, H] meshed with ~target_h elements."""
    if width <= 0 or height <= 0 or target_h <= 0:
        raise GeometryError("rectangle dimensions and target_h must be > 0")
    nx = max(1, int(round(width / target_h)))
    ny = max(1, int(round(height / target_h)))
    coords, tris = _grid_patch(width, height, nx, ny)
    coords, elems = _to_t6(coords, tris)
    mesh = MeshT6(coords, elems, char_length=char_length or target_h,
                  cell_area=width * height,
                  centroid=np.array([0.5 * width, 0.5 * height]))
    _attach_rect_boundary_sets(mesh)
    return mesh


def boundary_nodes(mesh: MeshT6) -> np.ndarray:
    """Node ids on the domain boundary (corner and midside)."""
    count: dict[tuple[int, int], int] = {}
    owner: dict[tuple[int, int], int] = {}
    el = mesh.elements
    for e in range(el.shape[0]):
        a, b, c, mab, mbc, mca = el[e]
        for (p, q, m) in ((a, b, mab), (b, c, mbc), (c, a, mca)):
            key = (p, q) if p < q else (q, p)
            count[key] = count.get(key, 0) + 1
            owner[key] = m
    ids = set()
    for key, n in count.items():
        if n == 1:
            ids.update((key[0], key[1], owner[key]))
    return np.asarray(sorted(ids), dtype=np.int64)


def outer_boundary_nodes(mesh: MeshT6) -> np.ndarray:
    """Nodes on the outer boundary loop only (hole boundaries excluded).

    Boundary edges are traced into closed loops; the loop enclosing the
    largest area is the outer one.
    """
    el = mesh.elements
    count: dict[tuple[int, int], int] = {}
    owner: dict[tuple[int, int], int] = {}
    for e in range(el.shape[0]):
        a, b, c, mab, mbc, mca = el[e]
        for (p, q, m) in ((a, b, mab), (b, c, mbc), (c, a, mca)):
            key = (p, q) if p < q else (q, p)
            count[key] = count.get(key, 0) + 1
            owner[key] = m
    bedges = [k for k, n in count.items() if n == 1]
    adj: dict[int, list[int]] = {}
    for p, q in bedges:
        adj.setdefault(p, []).append(q)
        adj.setdefault(q, []).append(p)
    seen = set()
    best_nodes: list[int] = []
    best_area = -1.0
    c = mesh.node_coords
    for start in sorted(adj):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxts = [n for n in adj[cur] if n != prev]
            nxt = nxts[0] if nxts else prev
            if nxt == start:
                break
            loop.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        p = c[loop]
        area = 0.5 * abs(np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1]))
        if area > best_area:
            best_area = area
            best_nodes = loop
    ids = set(best_nodes)
    for k in range(len(best_nodes)):
        p, q = best_nodes[k], best_nodes[(k + 1) % len(best_nodes)]
        key = (p, q) if p < q else (q, p)
        ids.add(owner[key])
    return np.asarray(sorted(ids), dtype=np.int64)


def _attach_rect_boundary_sets(mesh: MeshT6):
    x, y = mesh.node_coords[:, 0], mesh.node_coords[:, 1]
    bnd = boundary_nodes(mesh)
    tol = 1e-9 * max(mesh.char_length, 1.0)
    sets = {"boundary": bnd}
    for name, vals, coord in (("left", x, np.min(x)), ("right", x, np.max(x)),
                              ("bottom", y, np.min(y)), ("top", y, np.max(y))):
        sel = bnd[np.abs(vals[bnd] - coord) <= tol]
        if sel.size:
            sets[name] = sel
    mesh.boundary_sets = sets


# ---------------------------------------------------------------------------
# periodic pairing


def pair_periodic_boundaries(mesh: MeshT6, lattice_vectors) -> MeshT6:
    """Populate periodic (plus, minus, shift) pairs by nearest-image search.

    Candidate shifts are the integer combinations m*v1 + n*v2 with
    |m|, |n| <= 1; redundant pairs (implied by chains) are removed with a
    union-find so the resulting constraint set has full rank.
    """
    l = mesh.char_length
    tol = 1e-6 * l
    vecs = [np.asarray(v, dtype=float) for v in lattice_vectors]
    if not 1 <= len(vecs) <= 2:
        raise PairingError("expected 1 or 2 lattice vectors")
    shifts = []
    if len(vecs) == 1:
        s = vecs[0]
        if s[1] < -tol or (abs(s[1]) <= tol and s[0] < 0):
            s = -s
        shifts = [s]
    else:
        for m in (-1, 0, 1):
            for n in (-1, 0, 1):
                if m == 0 and n == 0:
                    continue
                s = m * vecs[0] + n * vecs[1]
                if s[1] > tol or (abs(s[1]) <= tol and s[0] > tol):
                    shifts.append(s)
    shifts.sort(key=lambda s: (round(s[1] / tol), round(s[0] / tol)))

    bnd = outer_boundary_nodes(mesh)
    pts = mesh.node_coords[bnd]
    grid: dict[tuple[int, int], list[int]] = {}
    cell = max(tol, 1e-12)
    for i, p in enumerate(pts):
        grid.setdefault((int(np.floor(p[0] / cell)), int(np.floor(p[1] / cell))), []).append(i)

    def find_at(p):
        kx, ky = int(np.floor(p[0] / cell)), int(np.floor(p[1] / cell))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for i in grid.get((kx + dx, ky + dy), ()):
                    if abs(pts[i][0] - p[0]) <= tol and abs(pts[i][1] - p[1]) <= tol:
                        return i
        return None

    candidates = []  # (shift index, plus local, minus local)
    matched = np.zeros(len(bnd), dtype=bool)
    for si, s in enumerate(shifts):
        for i, p in enumerate(pts):
            j = find_at(p - s)
            if j is not None and j != i:
                candidates.append((si, i, j))
                matched[i] = True
                matched[j] = True
    if not np.all(matched):
        bad = pts[~matched]
        raise PairingError(
            f"{bad.shape[0]} unmatched boundary nodes; first offenders: {bad[:5].tolist()}")

    # union-find with positional offsets to drop dependent pairs
    parent = np.arange(len(bnd))
    offset = np.zeros((len(bnd), 2))  # position relative to component root

    def root(i):
        path = []
        while parent[i] != i:
            path.append(i)
            i = parent[i]
        for p in reversed(path):
            offset[p] += offset[parent[p]]
            parent[p] = i
        return i

    pairs = []
    pair_shifts = []
    for si, i, j in candidates:
        ri, rj = root(i), root(j)
        s = shifts[si]
        if ri == rj:
            # implied by existing pairs; verify chain consistency
            if np.linalg.norm((offset[i] - offset[j]) - s) > tol:
                raise PairingError(
                    f"inconsistent periodic chain at nodes {bnd[i]}, {bnd[j]}")
            continue
        # attach rj's tree under ri: offset(j) - offset(i) must equal -s
        parent[rj] = ri
        offset[rj] = offset[i] - s - offset[j]
        pairs.append((bnd[i], bnd[j]))
        pair_shifts.append(s)

    out = replace(mesh,
                  periodic_pairs=np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
                  periodic_shifts=np.asarray(pair_shifts, dtype=float).reshape(-1, 2))
    plus = np.unique(out.periodic_pairs[:, 0])
    minus = np.unique(out.periodic_pairs[:, 1])
    out.boundary_sets = dict(mesh.boundary_sets)
    out.boundary_sets["plus"] = plus
    out.boundary_sets["minus"] = minus
    return out


# ---------------------------------------------------------------------------
# validation and measures


def element_jacobians(mesh: MeshT6) -> np.ndarray:
    """det J at the 3 quadrature points of every element, shape (E, 3)."""
    from .fem import _DN_REF  # local import to avoid a hard cycle

    ex = mesh.node_coords[mesh.elements]
    J = np.einsum("eai,gab->egib", ex, _DN_REF)
    return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]


def mesh_area(mesh: MeshT6) -> float:
    from .fem import QUAD_WEIGHTS

    return float(np.sum(element_jacobians(mesh) * QUAD_WEIGHTS[None, :]))


def validate_mesh(mesh: MeshT6) -> list[str]:
    """Report violated mesh invariants (empty list when valid)."""
    report = []
    l = mesh.char_length
    detJ = element_jacobians(mesh)
    bad = np.where(np.min(detJ, axis=1) <= 0)[0]
    if bad.size:
        report.append(f"non-positive Jacobian in elements {bad[:10].tolist()}")

    el = mesh.elements
    c = mesh.node_coords
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        midpt = 0.5 * (c[el[:, i]] + c[el[:, j]])
        dev = np.linalg.norm(c[el[:, 3 + k]] - midpt, axis=1)
        bad = np.where(dev > 1e-9 * l)[0]
        if bad.size:
            report.append(
                f"midside node off corner midpoint (edge {k}) in elements {bad[:10].tolist()}")

    n = mesh.n_nodes
    for name, ids in mesh.boundary_sets.items():
        if np.any(ids < 0) or np.any(ids >= n):
            report.append(f"boundary set {name!r} has out-of-range node ids")

    if mesh.periodic_pairs.size:
        pp = mesh.periodic_pairs
        dev = c[pp[:, 0]] - c[pp[:, 1]] - mesh.periodic_shifts
        bad = np.where(np.linalg.norm(dev, axis=1) > 1e-9 * l)[0]
        if bad.size:
            report.append(f"periodic pair mismatch exceeds 1e-9*l in rows {bad[:10].tolist()}")
        keys = {tuple(sorted(p)) for p in pp.tolist()}
        if len(keys) != pp.shape[0]:
            report.append("duplicate periodic pairs")
    return report
