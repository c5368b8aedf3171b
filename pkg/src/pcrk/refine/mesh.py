"""Mesh cleaning (small-component removal) and implicit curvature-flow smoothing."""
from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from ..errors import DegenerateGeometryError, PcrkError
from ..geom import TriangleMesh


def edge_face_incidence(faces: np.ndarray):
    """Unique undirected edges and the ``(F, E)`` face-edge incidence matrix."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    edges, edge_id = np.unique(e, axis=0, return_inverse=True)
    f = np.tile(np.arange(len(faces)), 3)
    inc = coo_matrix((np.ones(len(f)), (f, edge_id.ravel())), shape=(len(faces), len(edges))).tocsr()
    return edges, inc


def face_components(mesh: TriangleMesh) -> np.ndarray:
    """Component label per face; faces connect when they share an edge."""
    if mesh.n_faces == 0:
        return np.zeros(0, dtype=np.int64)
    _, inc = edge_face_incidence(mesh.faces)
    adj = inc @ inc.T
    _, labels = connected_components(adj, directed=False)
    return labels


def submesh(mesh: TriangleMesh, face_mask) -> TriangleMesh:
    """Keep the selected faces and the vertices they use, preserving relative order."""
    faces = mesh.faces[np.asarray(face_mask, dtype=bool)]
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[faces.ravel()] = True
    remap = np.cumsum(used) - 1
    return TriangleMesh(mesh.vertices[used], remap[faces])


def clean_mesh(mesh: TriangleMesh, min_component_faces: int = 20) -> TriangleMesh:
    labels = face_components(mesh)
    if len(labels) == 0:
        return submesh(mesh, labels.astype(bool))
    sizes = np.bincount(labels)
    return submesh(mesh, sizes[labels] >= min_component_faces)


def cotangent_laplacian(vertices: np.ndarray, faces: np.ndarray):
    """Cotangent stiffness matrix ``C`` (positive semi-definite) and lumped vertex areas."""
    n = len(vertices)
    tri = vertices[faces]
    cots = np.empty((len(faces), 3))
    for c in range(3):
        a = tri[:, (c + 1) % 3] - tri[:, c]
        b = tri[:, (c + 2) % 3] - tri[:, c]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cots[:, c] = np.einsum("ij,ij->i", a, b) / cross
    bad = ~np.all(np.isfinite(cots), axis=1)
    if np.any(bad):
        fi = int(np.argmax(bad))
        raise DegenerateGeometryError(f"face {fi} {faces[fi].tolist()} is degenerate (non-finite cotangent)")
    rows, cols, vals = [], [], []
    for c in range(3):
        i, j = faces[:, (c + 1) % 3], faces[:, (c + 2) % 3]
        w = 0.5 * cots[:, c]
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    C = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    mass = np.bincount(faces.ravel(), weights=np.repeat(area / 3.0, 3), minlength=n)
    return C, mass


def boundary_vertices(mesh: TriangleMesh) -> np.ndarray:
    """Boolean mask of vertices on an edge used by exactly one face."""
    edges, inc = edge_face_incidence(mesh.faces)
    per_edge = np.asarray(inc.sum(axis=0)).ravel()
    if np.any(per_edge > 2):
        raise PcrkError("mesh is non-manifold: an edge is shared by more than two faces")
    out = np.zeros(mesh.n_vertices, dtype=bool)
    out[edges[per_edge == 1].ravel()] = True
    return out


def enclosed_volume(mesh: TriangleMesh) -> float:
    tri = mesh.vertices[mesh.faces]
    return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)


def smooth_curvature_flow(mesh: TriangleMesh, iters: int = 5, step: float = 0.1) -> TriangleMesh:
    """Backward-Euler mean-curvature flow.

    Each iteration solves ``(M + s C) V' = M V`` with ``C`` the cotangent
    Laplacian and ``M`` the lumped mass, both rebuilt from the current
    vertices. ``s = step * h**2`` with ``h`` the mean edge length of the input
    mesh, so ``step`` is dimensionless. Boundary vertices and vertices without
    faces stay fixed.
    """
    if iters < 0 or step < 0:
        raise PcrkError("iters and step must be non-negative")
    if mesh.n_faces == 0 or iters == 0:
        return mesh
    fixed = boundary_vertices(mesh)
    edges, _ = edge_face_incidence(mesh.faces)
    V = mesh.vertices.copy()
    h2 = float(np.mean(np.sum((V[edges[:, 0]] - V[edges[:, 1]]) ** 2, axis=1)))
    s = step * h2
    for _ in range(iters):
        C, mass = cotangent_laplacian(V, mesh.faces)
        free = ~fixed & (mass > 0)
        if not free.any():
            break
        A = (csr_matrix((mass, (np.arange(len(V)), np.arange(len(V)))), shape=C.shape) + s * C).tocsr()
        A_ff = A[free][:, free].tocsc()
        rhs = mass[free, None] * V[free] - A[free][:, ~free] @ V[~free]
        sol = spsolve(A_ff, rhs)
        sol = np.asarray(sol).reshape(-1, 3)
        if not np.all(np.isfinite(sol)):
            raise DegenerateGeometryError("smoothing solve produced non-finite vertices")
        V = V.copy()
        V[free] = sol
    return TriangleMesh(V, mesh.faces)
