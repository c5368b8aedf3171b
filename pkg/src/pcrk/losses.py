"""Training objective: 3-D Chamfer, multi-view reprojection and silhouette terms.

Every loss returns ``(value, grad)`` where ``grad`` is the ``(N, 3)`` gradient
with respect to the predicted points, or ``None`` when not requested. Ground
truth points are constants.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPointsError, PcrkError
from .geom import Camera, NnIndex, as_cloud, as_mask
from .projection import ORTHO_XY, ORTHO_XZ, View, mask_to_points, perspective, project_with_jacobian

DEFAULT_VIEWS = (ORTHO_XY, ORTHO_XZ)


@dataclass(frozen=True)
class LossWeights:
    w_rec: float = 1.0
    w_silhouette: float = 1e-9
    w_proj: float = 1e-10

    def __post_init__(self):
        if min(self.w_rec, self.w_silhouette, self.w_proj) < 0:
            raise PcrkError("loss weights must be non-negative")


DEFAULT_WEIGHTS = LossWeights(1.0, 1e-9, 1e-10)


@dataclass
class LossBreakdown:
    total: float
    rec: float
    silhouette: float
    proj: float
    grad: np.ndarray | None = None


def directed_chamfer(src, dst, with_grad: bool = False):
    """Mean squared distance from each ``src`` point to its nearest ``dst`` point.

    The gradient is taken with respect to ``dst``; ties resolve to the lowest
    ``dst`` index, which yields a valid subgradient.
    """
    idx, d2 = NnIndex(dst).nearest(src)
    value = float(d2.mean())
    if not with_grad:
        return value, None
    grad = np.zeros_like(dst)
    np.add.at(grad, idx, 2.0 * (dst[idx] - src) / len(src))
    return value, grad


def loss_rec(P, Phat, with_grad: bool = False):
    P = as_cloud(P)
    Phat = as_cloud(Phat)
    fwd, g_fwd = directed_chamfer(P, Phat, with_grad)
    bwd_idx, bwd_d2 = NnIndex(P).nearest(Phat)
    value = fwd + float(bwd_d2.mean())
    if not with_grad:
        return value, None
    g_bwd = 2.0 * (Phat - P[bwd_idx]) / len(Phat)
    return value, g_fwd + g_bwd


def _projected_term(targets_2d, Phat, view: View, with_grad: bool):
    uv, J = project_with_jacobian(Phat, view)
    value, g2 = directed_chamfer(targets_2d, uv, with_grad)
    if g2 is None:
        return value, None
    return value, np.einsum("nij,ni->nj", J, g2)


def loss_proj(P, Phat, views=DEFAULT_VIEWS, with_grad: bool = False):
    """Unidirectional 2-D Chamfer from projected ground truth to projected prediction, summed over views."""
    P = as_cloud(P)
    Phat = as_cloud(Phat)
    views = tuple(views)
    if not views:
        raise PcrkError("loss_proj needs at least one view")
    total = 0.0
    grad = np.zeros_like(Phat) if with_grad else None
    for view in views:
        gt_uv, _ = project_with_jacobian(P, view)
        value, g = _projected_term(gt_uv, Phat, view, with_grad)
        total += value
        if with_grad:
            grad += g
    return total, grad


def loss_silhouette(S, Phat, cam: Camera, with_grad: bool = False):
    """Unidirectional 2-D Chamfer from mask pixel centres to the perspective projection of the prediction."""
    pts = mask_to_points(as_mask(S))
    if len(pts) == 0:
        raise InsufficientPointsError("silhouette mask has no foreground pixels")
    Phat = as_cloud(Phat)
    return _projected_term(pts, Phat, perspective(cam), with_grad)


def loss_total(P, Phat, S=None, cam: Camera | None = None, views=DEFAULT_VIEWS,
               weights: LossWeights = DEFAULT_WEIGHTS, with_grad: bool = False) -> LossBreakdown:
    """Weighted sum of the three terms.

    The silhouette term is skipped when ``S`` is None and the projection term
    when ``views`` is empty; skipped terms report 0.
    """
    if S is not None and cam is None:
        raise PcrkError("silhouette term needs a camera")
    Phat = as_cloud(Phat)
    rec, g_rec = loss_rec(P, Phat, with_grad)
    sil, g_sil = (0.0, None)
    if S is not None:
        sil, g_sil = loss_silhouette(S, Phat, cam, with_grad)
    proj, g_proj = (0.0, None)
    if len(views):
        proj, g_proj = loss_proj(P, Phat, views, with_grad)
    w = weights
    total = w.w_rec * rec + w.w_silhouette * sil + w.w_proj * proj
    grad = None
    if with_grad:
        grad = w.w_rec * g_rec
        if g_sil is not None:
            grad = grad + w.w_silhouette * g_sil
        if g_proj is not None:
            grad = grad + w.w_proj * g_proj
    return LossBreakdown(total=total, rec=rec, silhouette=sil, proj=proj, grad=grad)
