"""Mesh generator and face-topology tests against brute-force oracles."""

import math

import numpy as np
import pytest

from maviscid.mesh import SimplicialMesh, build_structured_mesh, dump_off, face_topology


def brute_simplex_volume(pts):
    """|det([p1-p0, ..., pd-p0])| / d! computed directly from coordinates."""
    pts = np.asarray(pts, dtype=float)
    d = pts.shape[1]
    edges = pts[1:] - pts[0]
    return abs(np.linalg.det(edges)) / math.factorial(d)


def brute_face_count(cells, dim):
    """Count interior/boundary faces by matching sorted vertex tuples."""
    from collections import Counter
    from itertools import combinations

    counts = Counter()
    for cell in cells:
        for face in combinations(sorted(cell), dim):
            counts[face] += 1
    interior = sum(1 for v in counts.values() if v == 2)
    boundary = sum(1 for v in counts.values() if v == 1)
    assert all(v <= 2 for v in counts.values())
    return interior, boundary


def test_unit_square_single():
    mesh = build_structured_mesh(2, 1)
    assert mesh.num_cells == 2
    assert mesh.num_vertices == 4
    assert len(mesh.interior_faces) == 1
    assert len(mesh.boundary_faces) == 4


def test_square_counts_and_area():
    mesh = build_structured_mesh(2, 2)
    assert mesh.num_cells == 8
    assert mesh.num_vertices == 9
    total = sum(brute_simplex_volume(mesh.vertices[c]) for c in mesh.cells)
    assert abs(total - 1.0) < 1e-12


def test_cube_counts_and_volume():
    mesh = build_structured_mesh(3, 1)
    assert mesh.num_cells == 6
    assert mesh.num_vertices == 8
    total = sum(brute_simplex_volume(mesh.vertices[c]) for c in mesh.cells)
    assert abs(total - 1.0) < 1e-12
    assert len(mesh.interior_faces) == 6
    assert len(mesh.boundary_faces) == 12


@pytest.mark.parametrize("dim,n", [(2, 1), (2, 3), (2, 4), (3, 1), (3, 2), (3, 3)])
def test_volume_partition_and_quasi_uniformity(dim, n):
    mesh = build_structured_mesh(dim, n)
    assert np.all(mesh.cell_volumes > 0)
    assert abs(mesh.cell_volumes.sum() - 1.0) < 1e-12
    ratio = mesh.cell_diameters.max() / mesh.cell_diameters.min()
    assert ratio <= 4.0
    expected_h = np.sqrt(dim) / n
    assert abs(mesh.h - expected_h) < 1e-12


@pytest.mark.parametrize("dim,n", [(2, 2), (2, 4), (3, 2)])
def test_face_counts_match_brute_force(dim, n):
    mesh = build_structured_mesh(dim, n)
    interior, boundary = brute_face_count(mesh.cells.tolist(), dim)
    assert len(mesh.interior_faces) == interior
    assert len(mesh.boundary_faces) == boundary
    if dim == 2:
        assert interior == 3 * n**2 - 2 * n  # 40 at n=4


def test_plus_minus_assignment_and_normals():
    for dim, n in [(2, 3), (3, 2)]:
        mesh = build_structured_mesh(dim, n)
        centroids = mesh.vertices[mesh.cells].mean(axis=1)
        for f in mesh.interior_faces:
            assert f.plus_cell < f.minus_cell
            assert abs(np.linalg.norm(f.normal_plus) - 1.0) < 1e-14
            gap = centroids[f.minus_cell] - centroids[f.plus_cell]
            assert np.dot(f.normal_plus, gap) > 0
            cell_p = set(mesh.cells[f.plus_cell])
            cell_m = set(mesh.cells[f.minus_cell])
            assert set(f.vertex_ids) <= cell_p and set(f.vertex_ids) <= cell_m


def test_boundary_normals_point_outward():
    for dim, n in [(2, 2), (3, 2)]:
        mesh = build_structured_mesh(dim, n)
        for f in mesh.boundary_faces:
            mid = mesh.vertices[list(f.vertex_ids)].mean(axis=0)
            # outward from the unit domain: stepping along n leaves [0,1]^d
            outside = mid + 1e-6 * f.normal
            assert np.any((outside < -1e-12) | (outside > 1 + 1e-12))


def test_face_diameter_is_longest_edge():
    mesh = build_structured_mesh(3, 2)
    for f in mesh.interior_faces[:20]:
        pts = mesh.vertices[list(f.vertex_ids)]
        longest = max(
            np.linalg.norm(pts[a] - pts[b]) for a in range(3) for b in range(a)
        )
        assert abs(f.diameter - longest) < 1e-14


def test_topology_independent_of_cell_order():
    mesh = build_structured_mesh(2, 3)
    rng = np.random.default_rng(7)
    perm = rng.permutation(mesh.num_cells)
    shuffled = SimplicialMesh(2, mesh.vertices, mesh.cells[perm])
    key = lambda faces: {tuple(sorted(f.vertex_ids)) for f in faces}
    assert key(mesh.interior_faces) == key(shuffled.interior_faces)
    assert key(mesh.boundary_faces) == key(shuffled.boundary_faces)


def test_face_topology_function():
    mesh = build_structured_mesh(2, 1)
    interior, boundary = face_topology(mesh)
    assert len(interior) == 1 and len(boundary) == 4


def test_nonconforming_mesh_rejected():
    # hanging vertex: left cell spans the full edge that the two right cells
    # split at (1, 0.5)
    verts = [(0, 0), (1, 0), (1, 0.5), (1, 1), (0, 1), (2, 0.5)]
    cells = [(0, 1, 3), (1, 5, 2), (2, 5, 3)]
    with pytest.raises(ValueError):
        SimplicialMesh(2, verts, cells)


def test_rejects_bad_n():
    with pytest.raises(ValueError):
        build_structured_mesh(2, 0)
    with pytest.raises(ValueError):
        build_structured_mesh(4, 2)


def test_orientation_canonicalized():
    verts = [(0, 0), (1, 0), (0, 1)]
    mesh = SimplicialMesh(2, verts, [(0, 2, 1)])  # clockwise input
    assert mesh.cell_volumes[0] > 0


def test_locate_structured():
    rng = np.random.default_rng(3)
    for dim, n in [(2, 4), (3, 3)]:
        mesh = build_structured_mesh(dim, n)
        pts = rng.uniform(0, 1, size=(50, dim))
        cells = mesh.locate(pts)
        scan = mesh._locate_scan(pts)
        # structured lookup must give a cell actually containing the point
        v0 = mesh.vertices[mesh.cells[cells, 0]]
        edges = mesh.vertices[mesh.cells[cells, 1:]] - v0[:, None, :]
        binv = np.linalg.inv(np.swapaxes(edges, 1, 2))
        lam = np.einsum("pij,pj->pi", binv, pts - v0)
        assert np.all(lam >= -1e-10)
        assert np.all(lam.sum(axis=1) <= 1 + 1e-10)
        assert np.all(scan >= 0)


def test_locate_corners_and_walls():
    mesh = build_structured_mesh(2, 2)
    pts = np.array([[0, 0], [1, 1], [0.5, 0.5], [1, 0.25]])
    cells = mesh.locate(pts)
    assert np.all(cells >= 0) and np.all(cells < mesh.num_cells)


def test_dump_off_roundtrip():
    mesh = build_structured_mesh(2, 2)
    text = dump_off(mesh)
    lines = text.strip().splitlines()
    nv, nc = (int(x) for x in lines[0].split())
    assert nv == mesh.num_vertices and nc == mesh.num_cells
    coords = np.array([[float(x) for x in ln.split()] for ln in lines[1 : 1 + nv]])
    assert np.allclose(coords, mesh.vertices)
    cells = np.array([[int(x) for x in ln.split()] for ln in lines[1 + nv :]])
    assert np.array_equal(cells, mesh.cells)
