"""Surface-based point cloud refinement.

Pipeline: normals and scales -> implicit surface -> small-component cleaning
-> implicit curvature flow -> Poisson-disc resampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import PcrkError, StageError
from ..geom import as_cloud
from .mesh import clean_mesh, enclosed_volume, face_components, smooth_curvature_flow
from .normals import OrientedCloud, estimate_normals, estimate_scales
from .sampling import poisson_disc_resample, sample_surface
from .surface import reconstruct_surface

__all__ = [
    "OrientedCloud", "RefineConfig", "RefineResult", "clean_mesh", "enclosed_volume",
    "estimate_normals", "estimate_scales", "face_components", "poisson_disc_resample",
    "reconstruct_surface", "refine_pipeline", "sample_surface", "smooth_curvature_flow",
]


@dataclass(frozen=True)
class RefineConfig:
    knn_for_normals: int = 6
    smooth_iters: int = 5
    smooth_step: float = 0.1
    grid_resolution: int = 64
    support_radius_factor: float = 3.0
    min_component_faces: int = 20
    resample_count: int | None = None  # None keeps the input point count

    def __post_init__(self):
        counts = (self.knn_for_normals, self.smooth_iters, self.grid_resolution, self.min_component_faces)
        if min(counts) < 1 or (self.resample_count is not None and self.resample_count < 1):
            raise PcrkError("refine counts must be >= 1")
        if not (self.smooth_step > 0 and self.support_radius_factor > 0):
            raise PcrkError("smooth_step and support_radius_factor must be positive")


@dataclass
class RefineResult:
    points: np.ndarray
    fitted: object
    cleaned: object
    smoothed: object
    radius: float


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PcrkError as exc:
        raise StageError(name, exc) from exc
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def refine_pipeline(cloud, cfg: RefineConfig, rng: np.random.Generator, return_meshes: bool = False):
    """Run every refinement stage; errors are re-raised as :class:`StageError` tagged with the stage.

    Returns the resampled cloud, or a :class:`RefineResult` with the
    intermediate meshes when ``return_meshes`` is set.
    """
    pts = _stage("input", as_cloud, cloud)
    # exact duplicates would get a zero scale
    _, first = np.unique(pts, axis=0, return_index=True)
    if len(first) < len(pts):
        pts = pts[np.sort(first)]
    count = cfg.resample_count or len(as_cloud(cloud))

    normals = _stage("normals", estimate_normals, pts, cfg.knn_for_normals)
    scales = _stage("scales", estimate_scales, pts)
    oc = OrientedCloud(pts, normals, scales)
    fitted = _stage("surface", reconstruct_surface, oc, cfg.grid_resolution, cfg.support_radius_factor)
    cleaned = _stage("clean", clean_mesh, fitted, cfg.min_component_faces)
    if cleaned.n_faces == 0:
        raise StageError("clean", PcrkError("every mesh component was below the size threshold"))
    smoothed = _stage("smooth", smooth_curvature_flow, cleaned, cfg.smooth_iters, cfg.smooth_step)
    out, radius = _stage("resample", poisson_disc_resample, smoothed, count, rng, return_radius=True)
    if return_meshes:
        return RefineResult(out, fitted, cleaned, smoothed, radius)
    return out
