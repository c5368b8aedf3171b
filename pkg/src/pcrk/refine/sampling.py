"""Surface sampling: area-weighted random samples and Poisson-disc sample elimination."""
from __future__ import annotations

import heapq

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DegenerateGeometryError, PcrkError
from ..geom import TriangleMesh


def sample_surface(mesh: TriangleMesh, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points uniformly distributed over the mesh area."""
    areas = mesh.face_areas()
    total = areas.sum()
    if mesh.n_faces == 0 or not total > 0:
        raise DegenerateGeometryError("mesh has zero surface area")
    cdf = np.cumsum(areas) / total
    face = np.minimum(np.searchsorted(cdf, rng.random(count), side="right"), mesh.n_faces - 1)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    tri = mesh.vertices[mesh.faces[face]]
    return ((1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1]
            + (r1 * r2)[:, None] * tri[:, 2])


def eliminate_samples(points: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    """Greedy sample elimination down to ``n`` points.

    Repeatedly removes the point whose nearest surviving neighbour is closest
    (lowest index on ties). Returns the kept indices, in input order, and the
    resulting minimum pairwise distance.
    """
    m = len(points)
    if n < 1:
        raise PcrkError("n must be >= 1")
    if n >= m:
        keep = np.arange(m)
    else:
        tree = cKDTree(points)
        k = min(m, 17)
        _, nbr = tree.query(points, k=k)
        nbr = np.asarray(nbr).reshape(m, k)
        alive = np.ones(m, dtype=bool)
        cursor = np.zeros(m, dtype=np.int64)
        lists = [row[row != i] for i, row in enumerate(nbr)]
        nearest = np.full(m, -1, dtype=np.int64)
        dist = np.zeros(m)
        dependents: list[set] = [set() for _ in range(m)]

        def refresh(i):
            row = lists[i]
            c = cursor[i]
            while c < len(row) and not alive[row[c]]:
                c += 1
            if c == len(row):
                # neighbour list exhausted: fall back to a full scan of survivors
                cand = np.nonzero(alive)[0]
                cand = cand[cand != i]
                if len(cand) == 0:
                    # sole survivor
                    nearest[i], dist[i] = -1, np.inf
                    return
                d = np.linalg.norm(points[cand] - points[i], axis=1)
                order = np.lexsort((cand, d))
                lists[i] = row = cand[order]
                c = 0
            cursor[i] = c
            j = int(row[c])
            nearest[i] = j
            dist[i] = float(np.linalg.norm(points[j] - points[i]))
            dependents[j].add(i)

        for i in range(m):
            refresh(i)
        heap = [(dist[i], i) for i in range(m)]
        heapq.heapify(heap)
        remaining = m
        while remaining > n:
            d, i = heapq.heappop(heap)
            if not alive[i] or d != dist[i]:
                continue
            alive[i] = False
            remaining -= 1
            if nearest[i] >= 0:
                dependents[nearest[i]].discard(i)
            for j in sorted(dependents[i]):
                if alive[j]:
                    refresh(j)
                    heapq.heappush(heap, (dist[j], j))
            dependents[i].clear()
        keep = np.nonzero(alive)[0]
    if len(keep) < 2:
        return keep, float("inf")
    d, _ = cKDTree(points[keep]).query(points[keep], k=2)
    return keep, float(d[:, 1].min())


def poisson_disc_resample(mesh: TriangleMesh, n: int, rng: np.random.Generator,
                          oversample: int = 4, return_radius: bool = False):
    """``n`` blue-noise points on the surface by eliminating from ``oversample * n`` random samples.

    With ``return_radius`` the achieved minimum pairwise distance is returned too.
    """
    if n < 1:
        raise PcrkError("n must be >= 1")
    candidates = sample_surface(mesh, oversample * n, rng)
    keep, radius = eliminate_samples(candidates, n)
    pts = candidates[keep]
    return (pts, radius) if return_radius else pts
