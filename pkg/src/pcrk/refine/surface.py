"""Implicit surface from oriented points with per-point support, meshed by marching cubes.

The field at ``x`` is a weighted mean of signed distances to each sample's
tangent plane, ``n_i . (x - p_i)``, with compactly supported weights whose
radius is proportional to the sample's own scale. Cells not covered by any
support are undefined and never produce triangles.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from skimage.measure import marching_cubes

from ..errors import DegenerateGeometryError, NoSurfaceError, PcrkError
from ..geom import TriangleMesh
from .normals import OrientedCloud


def wendland(q):
    """Wendland C2 kernel, 1 at q=0 and 0 for q >= 1."""
    q = np.clip(q, 0.0, 1.0)
    return (1.0 - q) ** 4 * (4.0 * q + 1.0)


def evaluate_field(oc: OrientedCloud, queries, support_factor: float = 3.0):
    """Field value and weight sum at arbitrary query points; value is NaN where weight is 0."""
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    radius = support_factor * oc.scales
    tree = cKDTree(oc.points)
    num = np.zeros(len(q))
    den = np.zeros(len(q))
    for qi, hits in enumerate(tree.query_ball_point(q, radius.max())):
        if not hits:
            continue
        hits = np.asarray(hits)
        diff = q[qi] - oc.points[hits]
        d = np.linalg.norm(diff, axis=1)
        w = np.where(d < radius[hits], wendland(d / radius[hits]), 0.0)
        num[qi] = np.sum(w * np.einsum("ij,ij->i", diff, oc.normals[hits]))
        den[qi] = w.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(den > 0, num / den, np.nan)
    return value, den


def sample_grid(oc: OrientedCloud, resolution: int, support_factor: float):
    """Field and weight sums on a regular grid of cubic cells covering every support ball.

    Returns ``(field, weight, origin, spacing)``; the longest axis has
    ``resolution`` samples.
    """
    if resolution < 2:
        raise PcrkError("grid resolution must be >= 2")
    if np.ptp(oc.points, axis=0).max() <= 0:
        raise DegenerateGeometryError("point cloud bounding box is degenerate")
    radius = support_factor * oc.scales
    lo = (oc.points - radius[:, None]).min(axis=0)
    hi = (oc.points + radius[:, None]).max(axis=0)
    extent = hi - lo
    spacing = float(extent.max()) / (resolution - 1)
    shape = tuple(int(s) for s in np.minimum(np.ceil(extent / spacing).astype(int) + 1, resolution))
    num = np.zeros(shape)
    den = np.zeros(shape)
    dims = np.array(shape)
    for p, nrm, r in zip(oc.points, oc.normals, radius):
        i0 = np.maximum(np.ceil((p - r - lo) / spacing).astype(int), 0)
        i1 = np.minimum(np.floor((p + r - lo) / spacing).astype(int), dims - 1)
        if np.any(i1 < i0):
            continue
        axes = [lo[a] + spacing * np.arange(i0[a], i1[a] + 1) - p[a] for a in range(3)]
        dx, dy, dz = axes[0][:, None, None], axes[1][None, :, None], axes[2][None, None, :]
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        w = np.where(d < r, wendland(d / r), 0.0)
        f = dx * nrm[0] + dy * nrm[1] + dz * nrm[2]
        sl = tuple(slice(i0[a], i1[a] + 1) for a in range(3))
        num[sl] += w * f
        den[sl] += w
    with np.errstate(invalid="ignore", divide="ignore"):
        field = np.where(den > 0, num / den, np.nan)
    return field, den, lo, spacing


def _compact(vertices, faces):
    used, inverse = np.unique(faces.ravel(), return_inverse=True)
    return vertices[used], inverse.reshape(-1, 3)


def reconstruct_surface(oc: OrientedCloud, resolution: int = 64, support_factor: float = 3.0) -> TriangleMesh:
    field, weight, origin, spacing = sample_grid(oc, resolution, support_factor)
    defined = weight > 0
    if min(field.shape) < 2 or not defined.any():
        raise NoSurfaceError("no surface found")
    # a cube is usable only if all eight corners carry weight
    cube_ok = np.ones(tuple(s - 1 for s in field.shape), dtype=bool)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                cube_ok &= defined[dx:dx + cube_ok.shape[0], dy:dy + cube_ok.shape[1], dz:dz + cube_ok.shape[2]]
    values = field[defined]
    if not (values.min() < 0 < values.max()):
        raise NoSurfaceError("no surface found: field has no zero crossing")
    # undefined samples get a value that only influences discarded cubes
    volume = np.where(defined, field, 1.0)
    try:
        verts, faces, _, _ = marching_cubes(volume, level=0.0, spacing=(spacing,) * 3)
    except (ValueError, RuntimeError) as exc:
        raise NoSurfaceError(f"no surface found ({exc})") from None
    faces = faces.astype(np.int64)
    cell = np.floor(verts[faces].mean(axis=1) / spacing).astype(int)
    cell = np.clip(cell, 0, np.array(cube_ok.shape) - 1)
    faces = faces[cube_ok[cell[:, 0], cell[:, 1], cell[:, 2]]]
    verts = verts + origin
    if len(faces) == 0:
        raise NoSurfaceError("no surface found inside the sample supports")

    # weld coincident vertices, then drop collapsed and zero-area triangles
    key = np.round(verts / (spacing * 1e-6)).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    verts = verts[first]
    faces = inverse.ravel()[faces]
    ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    faces = faces[ok]
    tri = verts[faces]
    area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    faces = faces[area2 > 1e-12 * spacing * spacing]
    _, vweight = evaluate_field(oc, verts, support_factor)
    outside = vweight <= 0
    faces = faces[~outside[faces].any(axis=1)]
    if len(faces) == 0:
        raise NoSurfaceError("no surface found")
    verts, faces = _compact(verts, faces)
    return TriangleMesh(verts, faces)
