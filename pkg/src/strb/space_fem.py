"""Structured triangulations and P1 finite element assembly in 2D."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

BOUNDARY_TAGS = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class SpaceMesh:
    """Triangle mesh with subdomain and boundary labels.

    ``subdomains`` holds one integer label per triangle (1-based),
    ``boundary_edges`` the vertex pairs of boundary edges and
    ``boundary_labels`` their tag.  ``dirichlet`` marks constrained vertices.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    subdomains: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: np.ndarray
    dirichlet: np.ndarray
    boundary_names: tuple = BOUNDARY_TAGS

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_subdomains(self) -> int:
        return int(self.subdomains.max())

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def check(self) -> None:
        """Raise ``ValueError`` unless the mesh is a conforming triangulation."""
        if np.any(self.areas() <= 0.0):
            raise ValueError("mesh has degenerate or negatively oriented triangles")
        edges = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise ValueError("non-manifold edge: shared by more than two triangles")
        boundary = np.unique(np.sort(self.boundary_edges, axis=1), axis=0)
        if boundary.shape[0] != int(np.sum(counts == 1)):
            raise ValueError("boundary edge list does not match the triangulation")
        if self.subdomains.shape[0] != self.triangles.shape[0]:
            raise ValueError("every triangle needs exactly one subdomain label")


def build_structured_mesh(vertices_per_side: int, blocks_per_side: int = 3) -> SpaceMesh:
    """Uniform criss-cross triangulation of the unit square split in square blocks.

    Cell ``(i, j)`` is cut along its ``/`` diagonal when ``i + j`` is even
    and along ``\\`` otherwise, which makes the mesh symmetric about both
    midlines.  Blocks are numbered row by row from the bottom left, so with
    3x3 blocks block 9 is the top right one.  Vertices on the top edge are
    Dirichlet.
    """
    n, nb = int(vertices_per_side), int(blocks_per_side)
    if nb < 1 or n < nb + 1 or (n - 1) % nb != 0:
        raise ValueError(
            f"vertices_per_side={vertices_per_side}: need n >= {nb + 1} and (n - 1) divisible by {nb} "
            f"so the {nb}x{nb} subdomain boundaries align with mesh lines"
        )
    h = 1.0 / (n - 1)
    xs = np.arange(n) * h
    xs[-1] = 1.0
    X, Y = np.meshgrid(xs, xs)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    cells_per_block = (n - 1) // nb
    tris, labels = [], []
    for j in range(n - 1):
        for i in range(n - 1):
            v00 = j * n + i
            v10, v01, v11 = v00 + 1, v00 + n, v00 + n + 1
            if (i + j) % 2 == 0:
                tris += [(v00, v10, v11), (v00, v11, v01)]
            else:
                tris += [(v00, v10, v01), (v10, v11, v01)]
            label = (j // cells_per_block) * nb + i // cells_per_block + 1
            labels += [label, label]

    idx = np.arange(n)
    edges, tags = [], []
    for a, b in zip(idx[:-1], idx[1:]):
        edges.append((a, b))
        tags.append("bottom")
        edges.append((a * n + n - 1, b * n + n - 1))
        tags.append("right")
        edges.append(((n - 1) * n + a, (n - 1) * n + b))
        tags.append("top")
        edges.append((a * n, b * n))
        tags.append("left")

    mesh = SpaceMesh(
        vertices=vertices,
        triangles=np.asarray(tris, dtype=np.int64),
        subdomains=np.asarray(labels, dtype=np.int64),
        boundary_edges=np.asarray(edges, dtype=np.int64),
        boundary_labels=np.asarray(tags),
        dirichlet=np.isclose(vertices[:, 1], 1.0),
    )
    mesh.check()
    return mesh


def build_thermal_block_mesh(vertices_per_side: int) -> SpaceMesh:
    """The 3x3 block mesh; ``vertices_per_side - 1`` must be a multiple of 3."""
    return build_structured_mesh(vertices_per_side, 3)


def local_stiffness(coords: np.ndarray) -> np.ndarray:
    """Exact P1 stiffness matrices for triangles ``coords`` of shape (nt, 3, 2)."""
    x, y = coords[..., 0], coords[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area2 = b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0]
    scale = 1.0 / (2.0 * area2)
    return scale[:, None, None] * (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])


def assemble_stiffness(mesh: SpaceMesh, coefficient: np.ndarray) -> sp.csr_matrix:
    """Full (unconstrained) stiffness for a piecewise constant coefficient per triangle."""
    K = local_stiffness(mesh.vertices[mesh.triangles]) * np.asarray(coefficient, float)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    nv = mesh.num_vertices
    A = sp.csr_matrix((K.ravel(), (rows, cols)), shape=(nv, nv))
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


def consistent_mass(mesh: SpaceMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix (area/12 * [[2,1,1],[1,2,1],[1,1,2]])."""
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    K = mesh.areas()[:, None, None] * local[None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    nv = mesh.num_vertices
    return sp.csr_matrix((K.ravel(), (rows, cols)), shape=(nv, nv))


def lumped_mass(mesh: SpaceMesh) -> np.ndarray:
    """Row sums of the consistent mass matrix: one third of adjacent areas."""
    out = np.zeros(mesh.num_vertices)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(mesh.areas() / 3.0, 3))
    return out


def assemble_boundary_load(mesh: SpaceMesh, tag: str, free: np.ndarray | None = None) -> np.ndarray:
    """Vector of ``int_Gamma phi_n`` over the edges carrying ``tag``.

    If ``free`` (an index array) is given the result is restricted to it.
    """
    if tag not in mesh.boundary_names:
        raise KeyError(f"unknown boundary tag {tag!r}; mesh has {mesh.boundary_names}")
    out = np.zeros(mesh.num_vertices)
    sel = mesh.boundary_edges[mesh.boundary_labels == tag]
    if sel.size:
        lengths = np.linalg.norm(mesh.vertices[sel[:, 1]] - mesh.vertices[sel[:, 0]], axis=1)
        np.add.at(out, sel[:, 0], 0.5 * lengths)
        np.add.at(out, sel[:, 1], 0.5 * lengths)
    return out if free is None else out[free]


@dataclass(frozen=True)
class SpaceMatrices:
    """Spatial matrices restricted to the free (non-Dirichlet) vertices."""

    mesh: SpaceMesh
    free: np.ndarray
    M_x: sp.csr_matrix
    A_q: tuple
    boundary_loads: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.free.size

    @property
    def mass_diagonal(self) -> np.ndarray:
        return self.M_x.diagonal()

    def extend(self, v: np.ndarray) -> np.ndarray:
        """Embed free-vertex values into a full vertex vector (zero on Dirichlet)."""
        out = np.zeros(v.shape[:-1] + (self.mesh.num_vertices,))
        out[..., self.free] = v
        return out


def assemble_space_matrices(mesh: SpaceMesh) -> SpaceMatrices:
    free = np.flatnonzero(~mesh.dirichlet)
    mass = lumped_mass(mesh)
    M_x = sp.diags(mass[free], format="csr")
    A_q = []
    for q in range(1, mesh.num_subdomains + 1):
        A = assemble_stiffness(mesh, (mesh.subdomains == q).astype(float))
        A_q.append(A[free][:, free].tocsr())
    loads = {tag: assemble_boundary_load(mesh, tag, free) for tag in mesh.boundary_names}
    log.info("space mesh: %d vertices, %d free (N)", mesh.num_vertices, free.size)
    return SpaceMatrices(mesh=mesh, free=free, M_x=M_x, A_q=tuple(A_q), boundary_loads=loads)


def write_mesh(mesh: SpaceMesh, path) -> None:
    """Write the line-oriented text format documented in the README."""
    lines = ["# strb-mesh v1", f"vertices {mesh.num_vertices}"]
    lines += [f"{float(x)!r} {float(y)!r} {int(d)}" for (x, y), d in zip(mesh.vertices, mesh.dirichlet)]
    lines.append(f"triangles {mesh.triangles.shape[0]}")
    lines += [f"{a} {b} {c} {s}" for (a, b, c), s in zip(mesh.triangles, mesh.subdomains)]
    lines.append(f"edges {mesh.boundary_edges.shape[0]}")
    lines += [f"{a} {b} {t}" for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> SpaceMesh:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    pos = 0

    def section(name):
        nonlocal pos
        head = rows[pos]
        if head[0] != name:
            raise ValueError(f"{path}: expected section {name!r}, found {head[0]!r}")
        count = int(head[1])
        body = rows[pos + 1: pos + 1 + count]
        if len(body) != count:
            raise ValueError(f"{path}: section {name!r} truncated")
        pos += 1 + count
        return body

    verts = section("vertices")
    tris = section("triangles")
    edges = section("edges")
    mesh = SpaceMesh(
        vertices=np.array([[float(r[0]), float(r[1])] for r in verts]),
        triangles=np.array([[int(v) for v in r[:3]] for r in tris], dtype=np.int64),
        subdomains=np.array([int(r[3]) for r in tris], dtype=np.int64),
        boundary_edges=np.array([[int(r[0]), int(r[1])] for r in edges], dtype=np.int64),
        boundary_labels=np.array([r[2] for r in edges]),
        dirichlet=np.array([bool(int(r[2])) for r in verts]),
    )
    mesh.check()
    return mesh
