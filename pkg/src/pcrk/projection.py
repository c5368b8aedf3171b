"""Perspective and orthographic projection of point clouds, and mask sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, PcrkError
from .geom import Camera, as_cloud, as_mask

MIN_DEPTH = 1e-9

# retained coordinates for each orthographic view (right-handed axes)
_ORTHO_AXES = {"ortho-xy": (0, 1), "ortho-yz": (1, 2), "ortho-xz": (0, 2)}


@dataclass(frozen=True)
class View:
    kind: str
    camera: Camera | None = None

    def __post_init__(self):
        if self.kind == "perspective":
            if self.camera is None:
                raise PcrkError("perspective view needs a camera")
        elif self.kind not in _ORTHO_AXES:
            raise PcrkError(f"unknown view kind {self.kind!r}")


ORTHO_XY = View("ortho-xy")
ORTHO_YZ = View("ortho-yz")
ORTHO_XZ = View("ortho-xz")


def perspective(camera: Camera) -> View:
    return View("perspective", camera)


def view_from_name(name: str, camera: Camera | None = None) -> View:
    if name == "perspective":
        return perspective(camera)
    return View(name)


def project_with_jacobian(P, view: View) -> tuple[np.ndarray, np.ndarray]:
    """Project points and return the per-point 2x3 Jacobian d(u, v)/d(x, y, z)."""
    P = as_cloud(P, allow_empty=True)
    n = len(P)
    if view.kind != "perspective":
        a, b = _ORTHO_AXES[view.kind]
        J = np.zeros((n, 2, 3))
        J[:, 0, a] = 1.0
        J[:, 1, b] = 1.0
        return P[:, [a, b]].copy(), J

    cam = view.camera
    X = P @ cam.R.T + cam.t
    z = X[:, 2]
    if np.any(z <= MIN_DEPTH):
        raise BehindCameraError(f"point behind camera (index {int(np.argmax(z <= MIN_DEPTH))})")
    inv_z = 1.0 / z
    uv = np.empty((n, 2))
    uv[:, 0] = cam.fx * X[:, 0] * inv_z + cam.cx
    uv[:, 1] = cam.fy * X[:, 1] * inv_z + cam.cy
    # d(u)/dX' = fx * (1/z, 0, -x/z^2), then chain through X' = R p + t
    dX = np.zeros((n, 2, 3))
    dX[:, 0, 0] = cam.fx * inv_z
    dX[:, 0, 2] = -cam.fx * X[:, 0] * inv_z**2
    dX[:, 1, 1] = cam.fy * inv_z
    dX[:, 1, 2] = -cam.fy * X[:, 1] * inv_z**2
    return uv, dX @ cam.R


def project(P, view: View) -> np.ndarray:
    return project_with_jacobian(P, view)[0]


def mask_to_points(S) -> np.ndarray:
    """Pixel-centre coordinates ``(col + 0.5, row + 0.5)`` of every foreground pixel, row-major."""
    rows, cols = np.nonzero(as_mask(S))
    return np.column_stack([cols + 0.5, rows + 0.5]).astype(np.float64)
