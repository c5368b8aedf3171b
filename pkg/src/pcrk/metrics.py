"""Point-set and silhouette metrics: Chamfer, EMD (exact and auction), IoU."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import PcrkError, SizeMismatchError
from .geom import NnIndex, as_cloud, as_mask

EMD_EXACT_CAP = 256


def chamfer(P, Phat, squared: bool = True) -> float:
    """Bidirectional Chamfer distance: sum of the two mean nearest-neighbour terms.

    With ``squared=True`` (the training loss and the default evaluation metric)
    each term averages squared Euclidean distances; ``squared=False`` averages
    plain distances instead.
    """
    P = as_cloud(P)
    Phat = as_cloud(Phat)
    _, d_fwd = NnIndex(Phat).nearest(P)
    _, d_bwd = NnIndex(P).nearest(Phat)
    if not squared:
        d_fwd, d_bwd = np.sqrt(d_fwd), np.sqrt(d_bwd)
    return _mean(d_fwd) + _mean(d_bwd)


def _mean(values) -> float:
    """Exactly rounded mean, independent of the order of ``values``."""
    return math.fsum(values.tolist()) / len(values)


def _check_pair(P, Phat):
    P = as_cloud(P)
    Phat = as_cloud(Phat)
    if len(P) != len(Phat):
        raise SizeMismatchError(f"EMD needs equal sizes, got {len(P)} and {len(Phat)}")
    return P, Phat


def emd_exact(P, Phat, cap: int = EMD_EXACT_CAP) -> float:
    """Mean Euclidean distance under the optimal bijection (Hungarian algorithm)."""
    P, Phat = _check_pair(P, Phat)
    if len(P) > cap:
        raise PcrkError(f"{len(P)} points exceeds the exact-EMD cap of {cap}; use emd_approx")
    cost = cdist(P, Phat)
    rows, cols = linear_sum_assignment(cost)
    return _mean(cost[rows, cols])


def auction_assignment(cost: np.ndarray, eps_final: float, scaling: float = 5.0) -> np.ndarray:
    """Min-cost perfect assignment by the Jacobi auction algorithm with epsilon scaling.

    Returns ``assign`` with ``assign[i]`` the column matched to row ``i``. The
    total cost is within ``n * eps_final`` of the optimum.
    """
    n = cost.shape[0]
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    benefit = -cost
    prices = np.zeros(n)
    eps = max(float(cost.max()) / 4.0, eps_final)
    rows = np.arange(n)
    while True:
        assign = np.full(n, -1, dtype=np.int64)
        owner = np.full(n, -1, dtype=np.int64)
        unassigned = rows
        while len(unassigned):
            values = benefit[unassigned] - prices
            best = np.argmax(values, axis=1)
            r = np.arange(len(unassigned))
            w1 = values[r, best]
            values[r, best] = -np.inf
            w2 = values.max(axis=1)
            bids = prices[best] + (w1 - w2) + eps
            # highest bid wins each object; ties go to the lowest row index
            order = np.lexsort((unassigned, -bids, best))
            objs = best[order]
            first = np.ones(len(order), dtype=bool)
            first[1:] = objs[1:] != objs[:-1]
            win_obj = objs[first]
            win_row = unassigned[order[first]]
            prev = owner[win_obj]
            assign[prev[prev >= 0]] = -1
            owner[win_obj] = win_row
            assign[win_row] = win_obj
            prices[win_obj] = bids[order[first]]
            unassigned = np.nonzero(assign < 0)[0]
        if eps <= eps_final:
            return assign
        eps = max(eps / scaling, eps_final)


def emd_approx(P, Phat, epsilon: float = 1e-3) -> float:
    """Auction-based EMD; at most ``epsilon * diameter`` above the exact value."""
    P, Phat = _check_pair(P, Phat)
    if not epsilon > 0:
        raise PcrkError("epsilon must be positive")
    cost = cdist(P, Phat)
    span = float(cost.max())
    if span == 0.0:
        return 0.0
    # max cross distance never exceeds the diameter, so this keeps the bound
    assign = auction_assignment(cost, eps_final=0.5 * epsilon * span)
    return _mean(cost[np.arange(len(P)), assign])


def iou(A, B) -> float:
    A = as_mask(A)
    B = as_mask(B)
    if A.shape != B.shape:
        raise SizeMismatchError(f"mask shapes differ: {A.shape} vs {B.shape}")
    union = np.count_nonzero(A | B)
    if union == 0:
        return 1.0
    return np.count_nonzero(A & B) / union


@dataclass(frozen=True)
class IoUReport:
    full: float
    visible: float
    occluded: float | None  # None when the ground truth has no occluded region


def iou_report(pred_full, gt_full, gt_visible) -> IoUReport:
    pred_full, gt_full, gt_visible = as_mask(pred_full), as_mask(gt_full), as_mask(gt_visible)
    if not (pred_full.shape == gt_full.shape == gt_visible.shape):
        raise SizeMismatchError("mask shapes differ")
    if np.any(gt_visible & ~gt_full):
        raise PcrkError("visible mask is not a subset of the full mask")
    occluded_region = gt_full & ~gt_visible
    occluded = None
    if occluded_region.any():
        occluded = iou(pred_full & occluded_region, occluded_region)
    return IoUReport(
        full=iou(pred_full, gt_full),
        visible=iou(pred_full & gt_visible, gt_visible),
        occluded=occluded,
    )
