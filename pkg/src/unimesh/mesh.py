"""Fixed background triangulations and their ASCII dump format."""
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class BackgroundMesh:
    """Immutable triangulation; triangles are counterclockwise vertex triples.

    Local edge j of a triangle is the edge opposite local vertex j, i.e.
    (v1, v2), (v2, v0), (v0, v1).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    h: float = field(init=False)
    max_angle: float = field(init=False)
    min_angle: float = field(init=False)
    edges: np.ndarray = field(init=False)
    tri_edges: np.ndarray = field(init=False)
    edge_triangles: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        P = self.vertices[self.triangles]
        area2 = ((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
                 - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0]))
        if np.any(area2 <= 0.0):
            raise ValueError("triangles must be nondegenerate and counterclockwise")
        angles = triangle_angles(P)
        self.max_angle = float(angles.max())
        self.min_angle = float(angles.min())

        local = np.array([[1, 2], [2, 0], [0, 1]])
        pairs = self.triangles[:, local]  # (nt, 3, 2)
        keys = np.sort(pairs, axis=-1).reshape(-1, 2)
        self.edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        self.tri_edges = inverse.reshape(-1, 3)
        lengths = np.linalg.norm(self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1)
        self.h = float(lengths.max())
        et = np.full((len(self.edges), 2), -1, dtype=np.int64)
        flat = self.tri_edges.ravel()
        owner = np.repeat(np.arange(len(self.triangles)), 3)
        order = np.argsort(flat, kind="stable")
        first = np.ones(len(flat), dtype=bool)
        first[1:] = flat[order][1:] != flat[order][:-1]
        et[flat[order][first], 0] = owner[order][first]
        et[flat[order][~first], 1] = owner[order][~first]
        self.edge_triangles = et

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def check_angles(self, bound=0.5 * math.pi):
        return self.max_angle < bound


def triangle_angles(P):
    """Interior angles of triangles given as an (n, 3, 2) array of corners."""
    out = np.empty(P.shape[:2])
    for j in range(3):
        a = P[:, (j + 1) % 3] - P[:, j]
        b = P[:, (j + 2) % 3] - P[:, j]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        out[:, j] = np.arctan2(np.abs(cross), np.einsum("ij,ij->i", a, b))
    return out


def equilateral_mesh(h, half_width=1.4, center=(0.0, 0.0)):
    """Equilateral triangulation of roughly [-w, w]^2 with a vertex at ``center``.

    Rows are spaced h*sqrt(3)/2 apart and odd rows are shifted by h/2, so
    every edge has length exactly h.
    """
    dy = h * math.sqrt(3.0) / 2.0
    nx = int(math.ceil(half_width / h))
    ny = int(math.ceil(half_width / dy))
    rows = range(-ny, ny + 1)
    index = {}
    verts = []
    for j in rows:
        shift = 0.5 * h if j % 2 else 0.0
        for i in range(-nx, nx + 1):
            index[(i, j)] = len(verts)
            verts.append((center[0] + i * h + shift, center[1] + j * dy))
    tris = []
    for j in rows[:-1]:
        odd = j % 2 == 1
        for i in range(-nx, nx):
            a, b = index[(i, j)], index[(i + 1, j)]
            c, d = index[(i, j + 1)], index[(i + 1, j + 1)]
            if odd:
                tris.append((a, b, d))
                tris.append((a, d, c))
            else:
                tris.append((a, b, c))
                tris.append((b, d, c))
    return BackgroundMesh(np.array(verts), np.array(tris))


def dump_mesh(path, nodes, triangles, degree=1):
    """Write ``nodes <N> triangles <M> degree <p>`` then coordinates then connectivity."""
    nodes = np.asarray(nodes, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"nodes {len(nodes)} triangles {len(triangles)} degree {degree}\n")
        for x, y in nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for row in triangles:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_mesh(path):
    """Read a file written by :func:`dump_mesh`; returns (nodes, triangles, degree)."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 6 or head[0] != "nodes" or head[2] != "triangles" or head[4] != "degree":
            raise ValueError(f"bad mesh header in {path}")
        n, m, p = int(head[1]), int(head[3]), int(head[5])
        nodes = np.array([[float(v) for v in fh.readline().split()] for _ in range(n)]).reshape(n, 2)
        tris = np.array([[int(v) for v in fh.readline().split()] for _ in range(m)], dtype=np.int64)
    return nodes, tris.reshape(m, -1), p


def load_background_mesh(path):
    nodes, tris, degree = load_mesh(path)
    if degree != 1:
        raise ValueError("a background mesh must be stored with degree 1")
    return BackgroundMesh(nodes, tris)
