"""Point cloud reconstruction toolkit: losses, refinement, occlusion synthesis and evaluation."""

from .errors import PcrkError
from .geom import Camera, NnIndex, TriangleMesh, normalize_unit, sample_fixed_n, seeded_rng
from .metrics import chamfer, emd_approx, emd_exact, iou, iou_report

__version__ = "0.1.0"

__all__ = [
    "Camera", "NnIndex", "PcrkError", "TriangleMesh", "chamfer", "emd_approx", "emd_exact",
    "iou", "iou_report", "normalize_unit", "sample_fixed_n", "seeded_rng",
]
