"""Per-point normals (PCA plane fit + MST orientation) and per-point scales."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components, minimum_spanning_tree

from ..errors import DegenerateGeometryError, InsufficientPointsError, PcrkError
from ..geom import NnIndex, as_cloud


@dataclass(frozen=True)
class OrientedCloud:
    points: np.ndarray
    normals: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        pts = as_cloud(self.points)
        normals = np.asarray(self.normals, dtype=np.float64)
        scales = np.asarray(self.scales, dtype=np.float64)
        if normals.shape != pts.shape or scales.shape != (len(pts),):
            raise PcrkError("points, normals and scales must have matching lengths")
        if np.abs(np.linalg.norm(normals, axis=1) - 1).max() > 1e-9:
            raise PcrkError("normals must be unit length")
        if not np.all(scales > 0):
            raise PcrkError("scales must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "scales", scales)

    def __len__(self):
        return len(self.points)


def _orient(points, normals, neighbors):
    """Propagate a consistent sign along a minimum spanning tree of the kNN graph.

    Edge cost is ``1 - |n_i . n_j|`` so propagation prefers nearly parallel
    normals. Each connected component is seeded at its point farthest from the
    cloud centroid, with the seed normal pointing away from the centroid.
    """
    n, k = neighbors.shape
    rows = np.repeat(np.arange(n), k)
    cols = neighbors.ravel()
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    # small offset keeps parallel-normal edges from vanishing as sparse zeros
    cost = 1.0 - np.abs(np.einsum("ij,ij->i", normals[rows], normals[cols])) + 1e-9
    graph = coo_matrix((cost, (rows, cols)), shape=(n, n)).tocsr()
    graph = graph.maximum(graph.T)
    tree = minimum_spanning_tree(graph)
    tree = tree + tree.T
    n_comp, labels = connected_components(tree, directed=False)
    centroid = points.mean(axis=0)
    out = normals.copy()
    radial = points - centroid
    dist2 = np.einsum("ij,ij->i", radial, radial)
    for c in range(n_comp):
        members = np.nonzero(labels == c)[0]
        seed = members[np.argmax(dist2[members])]
        if out[seed].dot(radial[seed]) < 0:
            out[seed] = -out[seed]
        order, pred = breadth_first_order(tree, seed, directed=False, return_predecessors=True)
        for node in order[1:]:
            if out[node].dot(out[pred[node]]) < 0:
                out[node] = -out[node]
    return out


def estimate_normals(cloud, k: int = 6) -> np.ndarray:
    """Unit normals from a least-squares plane through each point and its k nearest neighbours."""
    pts = as_cloud(cloud)
    if k < 2:
        raise PcrkError("k must be >= 2 to fit a plane")
    if len(pts) < k + 1:
        raise InsufficientPointsError(f"normal estimation with k={k} needs at least {k + 1} points")
    index = NnIndex(pts)
    idx, _ = index.knn_all(k, exclude_self=True)
    normals, flat = _plane_normals(pts, idx)
    # A locally collinear neighbourhood (e.g. clustered points on an edge) is
    # widened until it spans a plane; only a globally collinear cloud is an error.
    kk = k
    while np.any(flat):
        if kk >= len(pts) - 1:
            raise DegenerateGeometryError(
                f"neighbourhood of point {int(np.argmax(flat))} is collinear; plane is underdetermined")
        kk = min(2 * kk, len(pts) - 1)
        rows = np.flatnonzero(flat)
        wide = np.stack([index.knn(pts[r], kk + 1)[0] for r in rows])
        normals[rows], flat[rows] = _plane_normals(pts, wide, rows)
    return _orient(pts, normals, idx)


def _plane_normals(pts: np.ndarray, idx: np.ndarray, rows: np.ndarray | None = None):
    """Smallest-eigenvector normals of each point plus its neighbours, and a collinearity flag."""
    own = np.arange(len(pts)) if rows is None else rows
    nb = pts[np.concatenate([own[:, None], idx], axis=1)]
    nb = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", nb, nb)
    evals, evecs = np.linalg.eigh(cov)
    flat = evals[:, 1] <= 1e-12 * np.maximum(evals[:, 2], 1e-300)
    normals = evecs[:, :, 0]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return normals, flat


def estimate_scales(cloud) -> np.ndarray:
    """Mean distance from each point to its two closest other points."""
    pts = as_cloud(cloud)
    if len(pts) < 3:
        raise InsufficientPointsError("scale estimation needs at least 3 points")
    _, d = NnIndex(pts).knn_all(2, exclude_self=True)
    scales = d.mean(axis=1)
    if np.any(scales <= 0):
        raise DegenerateGeometryError(f"point {int(np.argmax(scales <= 0))} has zero scale (duplicates)")
    return scales


def orient_cloud(cloud, k: int = 6) -> OrientedCloud:
    pts = as_cloud(cloud)
    return OrientedCloud(pts, estimate_normals(pts, k), estimate_scales(pts))
