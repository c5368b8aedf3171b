"""Direct point-set optimization under the combined loss, and 2x2 folding up-sampling."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, DivergenceError, PcrkError
from .geom import Camera, as_cloud, sample_fixed_n, seeded_rng
from .losses import DEFAULT_VIEWS, DEFAULT_WEIGHTS, LossWeights, loss_total

INIT_MODES = ("sphere", "cube", "cloud")


@dataclass(frozen=True)
class FitConfig:
    n_coarse: int = 1024
    learning_rate: float = 1e-4
    adam_eps: float = 1e-6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    max_iters: int = 1000
    weights: LossWeights = DEFAULT_WEIGHTS
    seed: int = 0
    init: str = "sphere"
    views: tuple = DEFAULT_VIEWS
    # stop once the best total has not dropped by rel_tol (relative) for this
    # many iterations; 0 disables early stopping
    patience: int = 100
    rel_tol: float = 1e-9

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise PcrkError("learning_rate must be positive")
        if self.max_iters < 1:
            raise PcrkError("max_iters must be >= 1")
        if self.n_coarse < 1:
            raise PcrkError("n_coarse must be >= 1")
        if self.patience < 0 or self.rel_tol < 0:
            raise PcrkError("patience and rel_tol must be non-negative")
        if self.init not in INIT_MODES:
            raise PcrkError(f"init must be one of {INIT_MODES}")


@dataclass
class FitTrace:
    totals: list = field(default_factory=list)
    rec: list = field(default_factory=list)
    silhouette: list = field(default_factory=list)
    proj: list = field(default_factory=list)
    points: np.ndarray | None = None
    best_iteration: int = 0

    def __len__(self):
        return len(self.totals)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "total", "rec", "silhouette", "proj"])
            for i, row in enumerate(zip(self.totals, self.rec, self.silhouette, self.proj)):
                w.writerow([i, *(repr(float(x)) for x in row)])


def init_points(n: int, mode: str, rng: np.random.Generator, cloud=None) -> np.ndarray:
    """Starting points: uniform on the unit sphere, uniform in [-0.5, 0.5]^3, or resampled from ``cloud``."""
    if n < 1:
        raise PcrkError("n must be >= 1")
    if mode == "sphere":
        g = rng.standard_normal((n, 3))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        while np.any(norms == 0):  # measure-zero, but keep the contract
            bad = norms[:, 0] == 0
            g[bad] = rng.standard_normal((int(bad.sum()), 3))
            norms = np.linalg.norm(g, axis=1, keepdims=True)
        return g / norms
    if mode == "cube":
        return rng.uniform(-0.5, 0.5, size=(n, 3))
    if mode == "cloud":
        if cloud is None or len(cloud) == 0:
            raise PcrkError("init from cloud needs a non-empty cloud")
        return sample_fixed_n(cloud, n, rng)
    raise PcrkError(f"unknown init mode {mode!r}")


def fit(target, S=None, cam: Camera | None = None, cfg: FitConfig = FitConfig(),
        start=None) -> FitTrace:
    """Minimize the combined loss over free point coordinates with Adam.

    ``start`` overrides the configured initialization. The returned trace holds
    the loss of every evaluated iterate, and ``trace.points`` is the iterate with
    the lowest total, so its loss never exceeds the initial one. Iteration
    stops early at an exact zero loss or when progress stalls for
    ``cfg.patience`` iterations.
    """
    target = as_cloud(target)
    if S is not None and cam is None:
        raise PcrkError("a silhouette mask needs a camera")
    rng = seeded_rng(cfg.seed)
    if start is not None:
        x = as_cloud(start).copy()
    else:
        x = init_points(cfg.n_coarse, cfg.init, rng, cloud=target)

    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    trace = FitTrace()
    best_total = np.inf
    best_x = x.copy()
    last_gain = 0
    for it in range(cfg.max_iters):
        br = loss_total(target, x, S, cam, cfg.views, cfg.weights, with_grad=True)
        if not (np.isfinite(br.total) and np.all(np.isfinite(br.grad))):
            raise DivergenceError(f"loss became non-finite at iteration {it}",
                                  points=best_x if it == 0 else prev_x, iteration=it)
        trace.totals.append(br.total)
        trace.rec.append(br.rec)
        trace.silhouette.append(br.silhouette)
        trace.proj.append(br.proj)
        if br.total < best_total * (1 - cfg.rel_tol):
            last_gain = it
        if br.total < best_total:
            best_total, best_x, trace.best_iteration = br.total, x.copy(), it
        if br.total == 0.0 or (cfg.patience and it - last_gain >= cfg.patience):
            break
        g = br.grad
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        step = it + 1
        m_hat = m / (1 - b1**step)
        v_hat = v / (1 - b2**step)
        prev_x = x
        x = x - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    trace.points = best_x
    return trace


def tangent_frame(normal) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal tangents for a normal, seeded by the least-aligned coordinate axis."""
    n = np.asarray(normal, dtype=np.float64)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise DegenerateGeometryError("zero normal vector")
    n = n / norm
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n)))] = 1.0
    t1 = axis - axis.dot(n) * n
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def fold_upsample(coarse, side: float = 0.1, normals=None) -> np.ndarray:
    """Replace each point by a zero-centred 2x2 grid of children (4N points).

    Children sit at ``(+-side/4, +-side/4)`` along the tangent plane of the given
    normal, or in the x-y plane when no normals are given. Each parent's four
    children are contiguous in the output.
    """
    coarse = as_cloud(coarse)
    if not side > 0:
        raise PcrkError("side must be positive")
    n = len(coarse)
    if normals is None:
        t1 = np.tile([1.0, 0.0, 0.0], (n, 1))
        t2 = np.tile([0.0, 1.0, 0.0], (n, 1))
    else:
        normals = np.asarray(normals, dtype=np.float64).reshape(n, 3)
        frames = [tangent_frame(nv) for nv in normals]
        t1 = np.array([f[0] for f in frames])
        t2 = np.array([f[1] for f in frames])
    h = side / 4.0
    grid = np.array([(-h, -h), (-h, h), (h, -h), (h, h)])
    offsets = grid[None, :, 0, None] * t1[:, None, :] + grid[None, :, 1, None] * t2[:, None, :]
    return (coarse[:, None, :] + offsets).reshape(4 * n, 3)
