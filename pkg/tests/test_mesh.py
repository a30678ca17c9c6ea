import numpy as np
import pytest

from dieflow import mesh as M
from dieflow.mesh import BoundaryTag as BT
from dieflow.solver import FlowSolution


def unique_edge_count(m):
    edges = set()
    for tri in m.triangles:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            edges.add((min(a, b), max(a, b)))
    return len(edges)


@pytest.mark.parametrize("h", [0.5, 0.12])
def test_tjunction_validity(h):
    m = M.generate_tjunction(h)
    assert M.min_signed_area(m) > 0
    assert abs(M.triangle_areas(m).sum() - 4.0) < 1e-9


@pytest.mark.parametrize("h", [0.5, 0.12])
def test_channel_validity(h):
    m = M.generate_channel(h)
    assert M.min_signed_area(m) > 0
    assert abs(M.triangle_areas(m).sum() - 6.0) < 1e-9


def test_tjunction_reference_node_count():
    m = M.generate_tjunction(0.03)
    assert 2515 * 0.5 <= m.n_nodes <= 2515 * 1.5


def test_channel_reference_node_count():
    m = M.generate_channel(0.06)
    assert 2040 * 0.5 <= m.n_nodes <= 2040 * 1.5


def test_tjunction_boundary_tags():
    m = M.generate_tjunction(0.25)
    assert m.tags_present == {BT.INFLOW, BT.WALL, BT.OUT_LEFT, BT.OUT_RIGHT}
    for a, b in m.edges_with_tag(BT.INFLOW):
        assert m.nodes[a, 1] == 2.0 and m.nodes[b, 1] == 2.0
    for a, b in m.edges_with_tag(BT.OUT_LEFT):
        assert m.nodes[a, 0] == 0.0 and m.nodes[b, 0] == 0.0
    for a, b in m.edges_with_tag(BT.OUT_RIGHT):
        assert m.nodes[a, 0] == 3.0 and m.nodes[b, 0] == 3.0


def test_channel_boundary_tags():
    m = M.generate_channel(0.25)
    assert m.tags_present == {BT.INFLOW, BT.WALL, BT.OUT}
    for a, b in m.edges_with_tag(BT.INFLOW):
        assert m.nodes[a, 0] == 0.0 and m.nodes[b, 0] == 0.0
    for a, b in m.edges_with_tag(BT.OUT):
        assert m.nodes[a, 0] == 4.0 and m.nodes[b, 0] == 4.0


@pytest.mark.parametrize("gen", [M.generate_tjunction, M.generate_channel])
def test_euler_characteristic_simply_connected(gen):
    m = gen(0.2)
    v, e, f = m.n_nodes, unique_edge_count(m), m.n_triangles
    assert v - e + f == 1


@pytest.mark.parametrize("gen", [M.generate_tjunction, M.generate_channel])
def test_boundary_nodes_covered(gen):
    m = gen(0.2)
    # every node on a one-sided edge appears in some tagged boundary edge
    tagged = set(m.boundary_edges.reshape(-1).tolist())
    counts = {}
    for tri in m.triangles:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    for (a, b), c in counts.items():
        if c == 1:
            assert a in tagged and b in tagged


def test_too_coarse_raises():
    with pytest.raises(M.MeshGenerationError):
        M.generate_tjunction(2.0)


def test_min_signed_area_unit_triangle():
    m = M.TriMesh(
        nodes=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        triangles=np.array([[0, 1, 2]]),
        boundary_edges=np.array([[0, 1], [1, 2], [2, 0]]),
        boundary_tags=np.array([int(BT.WALL)] * 3),
    )
    assert M.min_signed_area(m) == pytest.approx(0.5)


def test_min_signed_area_detects_inversion():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    m = M.TriMesh(nodes, tris, np.array([[0, 1]]), np.array([int(BT.WALL)]))
    assert M.min_signed_area(m) > 0
    bent = nodes.copy()
    bent[1] = [0.2, 0.6]  # node pushed across the diagonal
    m2 = m.with_nodes(bent)
    assert M.min_signed_area(m2) < 0


def test_min_signed_area_empty_mesh():
    m = M.TriMesh(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 2)),
                  np.zeros(0))
    with pytest.raises(M.MeshGenerationError):
        M.min_signed_area(m)


def _parse_vtk_points(path):
    lines = open(path).read().splitlines()
    i = next(k for k, ln in enumerate(lines) if ln.startswith("POINTS"))
    n = int(lines[i].split()[1])
    pts = [tuple(float(x) for x in lines[i + 1 + j].split()) for j in range(n)]
    return np.array(pts)


def test_vtk_export_roundtrip(tmp_path):
    m = M.generate_channel(0.4)
    path = tmp_path / "mesh.vtk"
    M.export_vtk(m, path)
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert f"CELLS {m.n_triangles} {4 * m.n_triangles}" in text
    pts = _parse_vtk_points(path)
    assert pts.shape == (m.n_nodes, 3)
    assert np.abs(pts[:, :2] - m.nodes).max() < 1e-9
    assert np.all(pts[:, 2] == 0)


def test_vtk_export_with_solution(tmp_path):
    m = M.generate_tjunction(0.4)
    sol = FlowSolution(
        velocity=np.ones((m.n_nodes, 2)), pressure=np.zeros(m.n_nodes)
    )
    path = tmp_path / "sol.vtk"
    M.export_vtk(m, path, sol)
    text = path.read_text()
    assert f"POINT_DATA {m.n_nodes}" in text
    assert "VECTORS velocity double" in text
    assert "SCALARS pressure double 1" in text
    bad = FlowSolution(velocity=np.ones((3, 2)), pressure=np.zeros(3))
    with pytest.raises(ValueError):
        M.export_vtk(m, tmp_path / "bad.vtk", bad)
