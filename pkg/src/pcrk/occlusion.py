"""Synthetic occlusion by cut-and-paste, bounding-box expansion and image augmentation.

Images are ``(H, W, 3)`` uint8 arrays and masks ``(H, W)`` bool arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import OcclusionError, PcrkError, SizeMismatchError
from .geom import as_mask

MAX_OCCLUDED_FRACTION = 0.5


@dataclass(frozen=True)
class BBox:
    """Pixel box, top/left inclusive and bottom/right exclusive."""

    top: int
    left: int
    bottom: int
    right: int

    def __post_init__(self):
        if not (self.bottom > self.top and self.right > self.left):
            raise PcrkError(f"empty bounding box {self}")

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def width(self) -> int:
        return self.right - self.left


@dataclass
class OccludedSample:
    image: np.ndarray
    visible_mask: np.ndarray
    full_mask: np.ndarray
    occluder_mask: np.ndarray
    paste_offset: tuple[int, int] | None = None
    donor_index: int | None = None
    background_index: int | None = None

    @property
    def occluded_fraction(self) -> float:
        full = np.count_nonzero(self.full_mask)
        return 1.0 - np.count_nonzero(self.visible_mask) / full if full else 0.0


def mask_bbox(mask) -> BBox:
    m = as_mask(mask)
    rows = np.nonzero(m.any(axis=1))[0]
    cols = np.nonzero(m.any(axis=0))[0]
    if len(rows) == 0:
        raise PcrkError("mask is empty")
    return BBox(int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1)


def expand_bbox(b: BBox, factor: float, image_w: int, image_h: int) -> BBox:
    """Grow each side outward by ``factor`` times the box extent, clipped to the image."""
    if factor < 0:
        raise PcrkError("factor must be non-negative")
    dh = factor * b.height
    dw = factor * b.width
    # the epsilon stops values like 0.3 * 10 = 3.0000000000000004 rounding outward
    return BBox(
        max(0, math.floor(b.top - dh + 1e-9)),
        max(0, math.floor(b.left - dw + 1e-9)),
        min(image_h, math.ceil(b.bottom + dh - 1e-9)),
        min(image_w, math.ceil(b.right + dw - 1e-9)),
    )


def paste_location_range(O_mask, donor_mask) -> tuple[range, range]:
    """Admissible donor top-left rows and columns before the coverage rule.

    The donor's bounding-box corner may land anywhere in
    ``[(h0 - h', w0 - w'), (h1 + h', w1 + w')]`` around the object box, clipped
    so that it stays inside the image.
    """
    O_mask = as_mask(O_mask)
    H, W = O_mask.shape
    ob = mask_bbox(O_mask)
    db = mask_bbox(donor_mask)
    rows = range(max(0, ob.top - db.height), min(H - 1, ob.bottom + db.height) + 1)
    cols = range(max(0, ob.left - db.width), min(W - 1, ob.right + db.width) + 1)
    return rows, cols


def paste(I, O_mask, donor, donor_mask, offset: tuple[int, int]) -> OccludedSample:
    """Overlay the donor segment with its bounding-box corner at ``offset``; pixels past the image edge are dropped."""
    I = np.asarray(I, dtype=np.uint8)
    O_mask = as_mask(O_mask)
    donor_mask = as_mask(donor_mask)
    H, W = O_mask.shape
    db = mask_bbox(donor_mask)
    r0, c0 = offset
    ys, xs = np.nonzero(donor_mask)
    ty = ys - db.top + r0
    tx = xs - db.left + c0
    inside = (ty >= 0) & (ty < H) & (tx >= 0) & (tx < W)
    occluder = np.zeros((H, W), dtype=bool)
    occluder[ty[inside], tx[inside]] = True
    image = I.copy()
    image[ty[inside], tx[inside]] = np.asarray(donor)[ys[inside], xs[inside]]
    return OccludedSample(image, O_mask & ~occluder, O_mask.copy(), occluder, (int(r0), int(c0)))


def _check_inputs(I, O_mask, donor, donor_mask):
    I = np.asarray(I)
    if I.ndim != 3 or I.shape[2] != 3:
        raise PcrkError("image must have shape (H, W, 3)")
    if not (I.shape == np.asarray(donor).shape and I.shape[:2] == np.shape(O_mask) == np.shape(donor_mask)):
        raise SizeMismatchError("image, donor and masks must share dimensions")
    if not np.any(O_mask) or not np.any(donor_mask):
        raise PcrkError("object and donor masks must be non-empty")


def cut_and_paste(I, O_mask, donor, donor_mask, rng: np.random.Generator, max_attempts: int = 50) -> OccludedSample:
    """Paste the donor segment at a uniformly drawn location, redrawing while it hides over half the object."""
    _check_inputs(I, O_mask, donor, donor_mask)
    rows, cols = paste_location_range(O_mask, donor_mask)
    for _ in range(max_attempts):
        r = int(rng.integers(rows.start, rows.stop))
        c = int(rng.integers(cols.start, cols.stop))
        sample = paste(I, O_mask, donor, donor_mask, (r, c))
        if sample.occluded_fraction <= MAX_OCCLUDED_FRACTION:
            return sample
    raise OcclusionError(f"cannot satisfy 50% coverage rule after {max_attempts} attempts")


def compose_sample(I, O_mask, donor_pool, background_pool, rng: np.random.Generator,
                   p_occlude: float = 0.5, p_background: float = 0.5, max_attempts: int = 50) -> OccludedSample:
    """Randomly occlude (cut-and-paste) and/or replace the background of one training sample.

    ``donor_pool`` is a sequence of ``(image, mask)`` pairs and
    ``background_pool`` a sequence of images of the same size.
    """
    I = np.asarray(I, dtype=np.uint8)
    O_mask = as_mask(O_mask)
    if p_occlude > 0 and len(donor_pool) == 0:
        raise PcrkError("donor pool is empty but p_occlude > 0")
    if p_background > 0 and len(background_pool) == 0:
        raise PcrkError("background pool is empty but p_background > 0")
    # both decisions are drawn every time so the random stream does not depend on outcomes
    do_occlude = rng.random() < p_occlude
    do_background = rng.random() < p_background
    if do_occlude:
        k = int(rng.integers(len(donor_pool)))
        donor, dmask = donor_pool[k]
        sample = cut_and_paste(I, O_mask, donor, dmask, rng, max_attempts)
        sample.donor_index = k
    else:
        sample = OccludedSample(I.copy(), O_mask.copy(), O_mask.copy(), np.zeros_like(O_mask))
    if do_background:
        k = int(rng.integers(len(background_pool)))
        bg = np.asarray(background_pool[k], dtype=np.uint8)
        if bg.shape != I.shape:
            raise SizeMismatchError("background image size differs from the input")
        outside = ~(sample.full_mask | sample.occluder_mask)
        sample.image[outside] = bg[outside]
        sample.background_index = k
    return sample


def check_sample(sample: OccludedSample, original=None) -> list[str]:
    """Invariant violations of a generated sample (empty list when valid)."""
    problems = []
    if np.any(sample.visible_mask & ~sample.full_mask):
        problems.append("visible mask is not a subset of the full mask")
    if not np.array_equal(sample.visible_mask, sample.full_mask & ~sample.occluder_mask):
        problems.append("visible mask differs from full minus occluder")
    if sample.occluded_fraction > MAX_OCCLUDED_FRACTION:
        problems.append(f"occluded fraction {sample.occluded_fraction:.3f} exceeds 0.5")
    if original is not None and sample.background_index is None:
        changed = np.any(np.asarray(original) != sample.image, axis=2)
        if np.any(changed & ~sample.occluder_mask):
            problems.append("pixels outside the occluder were modified")
    return problems


# --- augmentation -------------------------------------------------------------

def apply_photometric(I, gamma: float, min_intensity: float, channel_factors) -> np.ndarray:
    """Gamma on [0, 1] intensities, linear rescale to [min_intensity, 255], per-channel gain, clamp."""
    x = np.asarray(I, dtype=np.float64)
    x = 255.0 * (x / 255.0) ** gamma
    x = min_intensity + x * (255.0 - min_intensity) / 255.0
    x = x * np.asarray(channel_factors, dtype=np.float64).reshape(1, 1, 3)
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def photometric_params(rng: np.random.Generator) -> dict:
    return {
        "gamma": float(rng.uniform(0.5, 2.0)),
        "min_intensity": float(rng.uniform(0.0, 127.0)),
        "channel_factors": rng.uniform(0.8, 1.2, size=3),
    }


def photometric_augment(I, rng: np.random.Generator) -> np.ndarray:
    return apply_photometric(I, **photometric_params(rng))


def apply_geometric(I, masks, crop=(0.0, 0.0, 0.0, 0.0), flip: bool = False, angle_deg: float = 0.0):
    """Crop ``(top, bottom, left, right)`` fractions, optionally mirror left-right, rotate about the centre.

    Images are resampled bilinearly with white fill; masks use nearest
    neighbour with empty fill.
    """
    I = np.asarray(I, dtype=np.uint8)
    H, W = I.shape[:2]
    masks = [as_mask(m) for m in masks]
    if any(m.shape != (H, W) for m in masks):
        raise SizeMismatchError("masks must match the image size")
    t, b, l, r = crop
    top, bottom = int(math.floor(t * H)), H - int(math.floor(b * H))
    left, right = int(math.floor(l * W)), W - int(math.floor(r * W))
    if bottom <= top or right <= left:
        raise PcrkError("crop leaves an empty image")
    I = I[top:bottom, left:right]
    masks = [m[top:bottom, left:right] for m in masks]
    if flip:
        I = I[:, ::-1]
        masks = [m[:, ::-1] for m in masks]
    if angle_deg != 0.0:
        I = np.clip(np.rint(ndimage.rotate(I.astype(np.float64), angle_deg, axes=(1, 0), reshape=False,
                                           order=1, mode="constant", cval=255.0)), 0, 255).astype(np.uint8)
        masks = [ndimage.rotate(m.astype(np.uint8), angle_deg, axes=(1, 0), reshape=False,
                                order=0, mode="constant", cval=0).astype(bool) for m in masks]
    return np.ascontiguousarray(I), [np.ascontiguousarray(m) for m in masks]


def geometric_params(rng: np.random.Generator) -> dict:
    return {
        "crop": tuple(float(x) for x in rng.uniform(0.2, 0.4, size=4)),
        "flip": bool(rng.random() < 0.5),
        "angle_deg": float(rng.uniform(-5.0, 5.0)),
    }


def geometric_augment(I, masks, rng: np.random.Generator):
    return apply_geometric(I, masks, **geometric_params(rng))
