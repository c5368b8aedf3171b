"""Core geometric types, exact nearest-neighbour queries and normalization.

Point clouds are plain ``(N, 3)`` float64 arrays, masks are ``(H, W)`` bool
arrays and RGB images are ``(H, W, 3)`` uint8 arrays. Only types that carry
more than one array (meshes, cameras) get their own class.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, InsufficientPointsError, PcrkError


def threads() -> int:
    """Worker cap for data-parallel loops, from ``PCRK_THREADS`` (default: all cores)."""
    value = os.environ.get("PCRK_THREADS")
    if value:
        try:
            n = int(value)
        except ValueError:
            raise PcrkError(f"PCRK_THREADS must be an integer, got {value!r}") from None
        if n >= 1:
            return n
    return os.cpu_count() or 1


def seeded_rng(seed: int) -> np.random.Generator:
    # PCG64 streams are specified bit-for-bit, so a seed reproduces across platforms.
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_cloud(points, allow_empty: bool = False) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        pts = pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise PcrkError(f"point cloud must have shape (N, 3), got {pts.shape}")
    if len(pts) == 0 and not allow_empty:
        raise InsufficientPointsError("point cloud is empty")
    if not np.all(np.isfinite(pts)):
        raise PcrkError("point cloud contains non-finite coordinates")
    return pts


def as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise PcrkError(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool, copy=False)


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = as_cloud(self.vertices, allow_empty=True)
        f = np.asarray(self.faces, dtype=np.int64)
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise PcrkError(f"faces must have shape (F, 3), got {f.shape}")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise PcrkError("face index out of range")
        bad = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if np.any(bad):
            raise DegenerateGeometryError(f"face {int(np.argmax(bad))} repeats a vertex index")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_areas(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: pixel = K (R p + t)."""

    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise PcrkError("focal lengths must be positive")
        check_rotation(R)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


def check_rotation(R, tol: float = 1e-9) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise PcrkError("rotation must be a finite 3x3 matrix")
    if np.abs(R @ R.T - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise PcrkError("matrix is not a proper rotation")
    return R


def rotation_about_axis(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle_rad) * K + (1 - np.cos(angle_rad)) * (K @ K)


def _sqdist(points: np.ndarray, q: np.ndarray, idx: np.ndarray) -> np.ndarray:
    diff = points[idx] - q[..., None, :]
    # fixed left-to-right accumulation, so results do not depend on SIMD paths
    sq = diff * diff
    out = sq[..., 0].copy()
    for j in range(1, sq.shape[-1]):
        out += sq[..., j]
    return out


class NnIndex:
    """Exact nearest-neighbour index over a point set of any dimension.

    Distances are recomputed from coordinates so they agree bit-for-bit with a
    brute-force scan, and ties are broken by the lowest point index.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or len(pts) == 0:
            raise InsufficientPointsError("cannot index an empty point set")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self):
        return len(self.points)

    def knn(self, q, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(indices, distances)`` of the ``k`` nearest points to ``q``."""
        q = np.asarray(q, dtype=np.float64)
        n = len(self.points)
        if k < 1:
            raise PcrkError("k must be >= 1")
        if k > n:
            raise InsufficientPointsError(f"insufficient points: k={k} > {n}")
        _, cand = self._tree.query(q, k=k)
        cand = np.atleast_1d(cand)
        if np.any(cand >= n):
            # distances overflowed: fall back to a full scan
            d2 = _sqdist(self.points, q, np.arange(n))
            order = np.lexsort((np.arange(n), d2))[:k]
            return order, np.sqrt(d2[order])
        d2 = _sqdist(self.points, q, cand)
        # anything tied with the k-th candidate must be considered too
        r = np.sqrt(d2.max())
        ball = np.asarray(self._tree.query_ball_point(q, r * (1 + 1e-9) + 1e-300), dtype=np.int64)
        ball = np.union1d(ball, cand)
        d2 = _sqdist(self.points, q, ball)
        order = np.lexsort((ball, d2))[:k]
        return ball[order], np.sqrt(d2[order])

    def knn_all(self, k: int, exclude_self: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """k nearest neighbours of every indexed point, as ``(N, k)`` arrays.

        Used for neighbourhood statistics; ties among far-away equal distances
        follow the tree order, which is deterministic for a given input.
        """
        n = len(self.points)
        kk = k + 1 if exclude_self else k
        if kk > n:
            raise InsufficientPointsError(f"insufficient points: need {kk}, have {n}")
        _, idx = self._tree.query(self.points, k=kk, workers=threads())
        idx = np.asarray(idx).reshape(n, kk)
        if exclude_self:
            # duplicates can push a point out of its own first slot
            for i in np.nonzero(idx[:, 0] != np.arange(n))[0]:
                row = idx[i]
                idx[i] = np.concatenate(([i], row[row != i]))[:kk]
            idx = idx[:, 1:]
        d = np.sqrt(_sqdist(self.points, self.points, idx))
        return idx, d

    def nearest(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Nearest indexed point for every query row: ``(indices, squared distances)``."""
        q = np.asarray(queries, dtype=np.float64)
        n = len(self.points)
        if len(q) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        k = min(n, 4)
        _, cand = self._tree.query(q, k=k, workers=threads())
        cand = np.asarray(cand).reshape(len(q), k)
        # the tree pads with index n when distances overflow to inf
        cand[cand >= n] = 0
        d2 = _sqdist(self.points, q, cand)
        best = d2.min(axis=1)
        tied = d2 == best[:, None]
        # lowest index among exact ties in the candidate list
        masked = np.where(tied, cand, np.iinfo(np.int64).max)
        idx = masked.min(axis=1)
        if k < n:
            overflow = np.nonzero(tied.all(axis=1) | ~np.isfinite(best))[0]
            for i in overflow:
                full = _sqdist(self.points, q[i], np.arange(n))
                idx[i] = int(np.argmin(full))
                best[i] = full[idx[i]]
        return idx, best


def nearest_neighbors(points, queries) -> tuple[np.ndarray, np.ndarray]:
    """One-shot :meth:`NnIndex.nearest`."""
    return NnIndex(points).nearest(queries)


def knn_query(index: NnIndex, q, k: int) -> tuple[np.ndarray, np.ndarray]:
    return index.knn(q, k)


def normalize_unit(cloud) -> tuple[np.ndarray, np.ndarray, float]:
    """Center on the centroid and scale the longest bounding-box side to 1.

    Returns ``(normalized, centroid, scale)`` with ``cloud = normalized * scale + centroid``.
    """
    pts = as_cloud(cloud)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scale = float(np.ptp(centered, axis=0).max())
    if not scale > 0:
        raise DegenerateGeometryError("cannot normalize a cloud with zero extent")
    out = centered / scale
    # re-centre to kill the rounding residue of the first subtraction
    out -= out.mean(axis=0)
    return out, centroid, scale


def denormalize(normalized, centroid, scale: float) -> np.ndarray:
    return np.asarray(normalized) * scale + np.asarray(centroid)


def sample_fixed_n(cloud, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw exactly ``n`` points; without replacement when the cloud is large enough."""
    pts = as_cloud(cloud)
    if n < 1:
        raise PcrkError("n must be >= 1")
    if len(pts) >= n:
        idx = rng.permutation(len(pts))[:n]
    else:
        idx = rng.integers(0, len(pts), size=n)
    return pts[idx]
