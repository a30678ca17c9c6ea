"""Structured triangle meshes for the two flow-channel geometries.

Both generators lay a regular grid over the domain and split each quad into
two triangles with alternating diagonals, which keeps the T-junction mesh
exactly mirror symmetric.  Boundary edges are extracted from the
triangulation and tagged by position.  Cell size runs at 1.2x the nominal
resolution ``h``; with the default resolutions this reproduces the node
counts of the reference meshes used in the experiments.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

# nominal h -> structured cell size calibration
_CELL_SCALE = 1.2


class MeshGenerationError(ValueError):
    pass


class BoundaryTag(enum.IntEnum):
    INFLOW = 0
    WALL = 1
    OUT_LEFT = 2
    OUT_RIGHT = 3
    OUT = 4


@dataclass(frozen=True)
class TriMesh:
    nodes: np.ndarray = field(repr=False)            # (n, 2) float64
    triangles: np.ndarray = field(repr=False)        # (m, 3) int32, CCW
    boundary_edges: np.ndarray = field(repr=False)   # (k, 2) int32, interior left
    boundary_tags: np.ndarray = field(repr=False)    # (k,) int32 BoundaryTag values

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(
            self, "triangles", np.asarray(self.triangles, dtype=np.int32)
        )
        object.__setattr__(
            self, "boundary_edges", np.asarray(self.boundary_edges, dtype=np.int32)
        )
        object.__setattr__(
            self, "boundary_tags", np.asarray(self.boundary_tags, dtype=np.int32)
        )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def with_nodes(self, nodes: np.ndarray) -> "TriMesh":
        """Same topology and tags on new node coordinates."""
        return TriMesh(nodes, self.triangles, self.boundary_edges, self.boundary_tags)

    def edges_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == int(tag)]

    @property
    def tags_present(self):
        return {BoundaryTag(t) for t in np.unique(self.boundary_tags)}


def triangle_areas(m: TriMesh) -> np.ndarray:
    areas, _ = _kernels.tri_geometry(m.nodes, m.triangles)
    return areas


def min_signed_area(m: TriMesh) -> float:
    """Minimum signed triangle area; <= 0 flags a tangled mesh."""
    if m.n_triangles == 0:
        raise MeshGenerationError("empty mesh")
    return float(triangle_areas(m).min())


def _subdivisions(length: float, h: float) -> int:
    cells = length / (_CELL_SCALE * h)
    if cells < 1.0:
        raise MeshGenerationError(
            f"resolution h={h} too coarse to resolve a span of {length}"
        )
    # even count keeps the alternating-diagonal pattern mirror symmetric
    return max(2, 2 * int(round(cells / 2.0)))


def _triangulate_cells(cells, node_index):
    """Split lattice cells into CCW triangles, alternating the diagonal."""
    tris = []
    for (i, j) in cells:
        a = node_index[(i, j)]
        b = node_index[(i + 1, j)]
        c = node_index[(i + 1, j + 1)]
        d = node_index[(i, j + 1)]
        if (i + j) % 2 == 0:
            tris.append((a, b, c))
            tris.append((a, c, d))
        else:
            tris.append((a, b, d))
            tris.append((b, c, d))
    return np.array(tris, dtype=np.int32)


def _boundary_edges(triangles):
    """Directed edges that appear in exactly one triangle (interior left)."""
    edges = {}
    for tri in triangles:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            edges[(a, b)] = edges.get((a, b), 0) + 1
    boundary = [e for e in edges if (e[1], e[0]) not in edges]
    boundary.sort()
    return np.array(boundary, dtype=np.int32)


def generate_tjunction(h: float) -> TriMesh:
    """T-shaped flow separator: bar [0,3]x[0,1] plus stem [1,2]x[1,2].

    Inflow is the stem top (y=2); the bar ends (x=0, x=3) are the left and
    right outflows; everything else is wall.
    """
    n = _subdivisions(1.0, h)
    s = 1.0 / n

    def in_region(i, j):
        bar = 0 <= i <= 3 * n and 0 <= j <= n
        stem = n <= i <= 2 * n and n <= j <= 2 * n
        return bar or stem

    node_index = {}
    coords = []
    for j in range(2 * n + 1):
        for i in range(3 * n + 1):
            if in_region(i, j):
                node_index[(i, j)] = len(coords)
                coords.append((i * s, j * s))

    cells = []
    for j in range(2 * n):
        for i in range(3 * n):
            corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            if all(c in node_index for c in corners):
                cells.append((i, j))

    nodes = np.array(coords)
    triangles = _triangulate_cells(cells, node_index)
    edges = _boundary_edges(triangles)

    lattice = {v: k for k, v in node_index.items()}
    tags = []
    for a, b in edges:
        (ia, ja), (ib, jb) = lattice[int(a)], lattice[int(b)]
        if ja == 2 * n and jb == 2 * n:
            tags.append(BoundaryTag.INFLOW)
        elif ia == 0 and ib == 0:
            tags.append(BoundaryTag.OUT_LEFT)
        elif ia == 3 * n and ib == 3 * n:
            tags.append(BoundaryTag.OUT_RIGHT)
        else:
            tags.append(BoundaryTag.WALL)
    return TriMesh(nodes, triangles, edges, np.array(tags, dtype=np.int32))


def generate_channel(h: float) -> TriMesh:
    """Converging trapezoid: x in [0,4], inlet height 2, outlet height 1.

    The grid is boundary fitted: rows are scaled by the local half height
    1 - x/8, so wall nodes lie exactly on the straight converging walls.
    """
    nx = _subdivisions(4.0, h)
    ny = _subdivisions(2.0, h)

    node_index = {}
    coords = []
    for j in range(ny + 1):
        for i in range(nx + 1):
            x = 4.0 * i / nx
            half = 1.0 - x / 8.0
            y = (2.0 * j / ny - 1.0) * half
            node_index[(i, j)] = len(coords)
            coords.append((x, y))

    cells = [(i, j) for j in range(ny) for i in range(nx)]
    nodes = np.array(coords)
    triangles = _triangulate_cells(cells, node_index)
    edges = _boundary_edges(triangles)

    lattice = {v: k for k, v in node_index.items()}
    tags = []
    for a, b in edges:
        (ia, _), (ib, _) = lattice[int(a)], lattice[int(b)]
        if ia == 0 and ib == 0:
            tags.append(BoundaryTag.INFLOW)
        elif ia == nx and ib == nx:
            tags.append(BoundaryTag.OUT)
        else:
            tags.append(BoundaryTag.WALL)
    return TriMesh(nodes, triangles, edges, np.array(tags, dtype=np.int32))


def generate_rectangle(length: float, height: float, h: float) -> TriMesh:
    """Straight channel [0,length] x [-height/2, height/2]; inflow at x=0,
    outflow at x=length, walls top and bottom.  Test fixture geometry."""
    nx = _subdivisions(length, h)
    ny = _subdivisions(height, h)

    node_index = {}
    coords = []
    for j in range(ny + 1):
        for i in range(nx + 1):
            node_index[(i, j)] = len(coords)
            coords.append((length * i / nx, height * (j / ny - 0.5)))

    cells = [(i, j) for j in range(ny) for i in range(nx)]
    nodes = np.array(coords)
    triangles = _triangulate_cells(cells, node_index)
    edges = _boundary_edges(triangles)

    lattice = {v: k for k, v in node_index.items()}
    tags = []
    for a, b in edges:
        (ia, _), (ib, _) = lattice[int(a)], lattice[int(b)]
        if ia == 0 and ib == 0:
            tags.append(BoundaryTag.INFLOW)
        elif ia == nx and ib == nx:
            tags.append(BoundaryTag.OUT)
        else:
            tags.append(BoundaryTag.WALL)
    return TriMesh(nodes, triangles, edges, np.array(tags, dtype=np.int32))


def export_vtk(m: TriMesh, path, solution=None):
    """Write a legacy ASCII VTK unstructured grid, optionally with nodal
    "velocity" vectors and "pressure" scalars."""
    if solution is not None:
        if len(solution.velocity) != m.n_nodes or len(solution.pressure) != m.n_nodes:
            raise ValueError("solution arrays not sized to the mesh")
    lines = [
        "# vtk DataFile Version 3.0",
        "dieflow mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {m.n_nodes} double",
    ]
    for x, y in m.nodes:
        lines.append(f"{x:.17g} {y:.17g} 0")
    lines.append(f"CELLS {m.n_triangles} {4 * m.n_triangles}")
    for a, b, c in m.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {m.n_triangles}")
    lines.extend(["5"] * m.n_triangles)
    if solution is not None:
        lines.append(f"POINT_DATA {m.n_nodes}")
        lines.append("VECTORS velocity double")
        for vx, vy in solution.velocity:
            lines.append(f"{vx:.17g} {vy:.17g} 0")
        lines.append("SCALARS pressure double 1")
        lines.append("LOOKUP_TABLE default")
        for p in solution.pressure:
            lines.append(f"{p:.17g}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
