"""Regenerate the bundled test fixtures: ``python tests/fixtures/make_fixtures.py``."""
from pathlib import Path

import numpy as np

from pcrk import io
from pcrk.geom import Camera, rotation_about_axis, seeded_rng

HERE = Path(__file__).parent


def cube_surface(n, rng):
    face = rng.integers(0, 6, n)
    uv = rng.uniform(-0.5, 0.5, (n, 2))
    pts = np.empty((n, 3))
    for i in range(n):
        axis = face[i] // 2
        others = [a for a in range(3) if a != axis]
        pts[i, axis] = 0.5 if face[i] % 2 else -0.5
        pts[i, others] = uv[i]
    return pts


def unit_sphere(n, rng):
    g = rng.standard_normal((n, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def shape_mask(kind, h, w, rng):
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0.35, 0.65) * h, rng.uniform(0.35, 0.65) * w
    if kind == "disk":
        return (yy - cy) ** 2 + (xx - cx) ** 2 < (0.22 * h) ** 2
    if kind == "box":
        return (np.abs(yy - cy) < 0.18 * h) & (np.abs(xx - cx) < 0.25 * w)
    if kind == "ellipse":
        return ((yy - cy) / (0.15 * h)) ** 2 + ((xx - cx) / (0.28 * w)) ** 2 < 1
    # triangle
    return (yy > cy - 0.2 * h) & (yy < cy + 0.2 * h) & (np.abs(xx - cx) < (yy - (cy - 0.2 * h)) * 0.7)


def main():
    rng = seeded_rng(2024)
    io.write_xyz(HERE / "cube.xyz", cube_surface(1024, rng))
    sphere = unit_sphere(2000, rng)
    io.write_xyz(HERE / "noisy_sphere.xyz", sphere * (1 + 0.02 * rng.standard_normal((2000, 1))))

    # evaluation pairs: an asymmetric blob and transformed predictions
    ev = HERE / "eval"
    ev.mkdir(exist_ok=True)
    gt = rng.standard_normal((800, 3)) * [1.0, 0.5, 0.25] + [0.2, -0.1, 0.0]
    io.write_xyz(ev / "gt.xyz", gt)
    io.write_xyz(ev / "pred_same.xyz", gt)
    io.write_xyz(ev / "pred_noisy.xyz", gt + 0.01 * rng.standard_normal(gt.shape))
    io.write_xyz(ev / "pred_scaled.xyz", 1.7 * gt + [3.0, 1.0, -2.0])
    (ev / "pairs.csv").write_text(
        "sample_id,pred,gt\nsame,pred_same.xyz,gt.xyz\nnoisy,pred_noisy.xyz,gt.xyz\nscaled,pred_scaled.xyz,gt.xyz\n")
    (ev / "bad_pairs.csv").write_text("id;pred;gt\nsame;pred_same.xyz\n")
    np.savetxt(ev / "rot.txt", rotation_about_axis([0.0, 1.0, 0.0], np.radians(20.0)), fmt="%.17g")

    # occlusion dataset: small synthetic renders on white backgrounds
    occ = HERE / "occ"
    (occ / "backgrounds").mkdir(parents=True, exist_ok=True)
    h = w = 64
    for i, kind in enumerate(["disk", "box", "ellipse", "triangle"]):
        mask = shape_mask(kind, h, w, rng)
        img = np.full((h, w, 3), 255, dtype=np.uint8)
        color = rng.integers(0, 200, 3)
        shaded = np.clip(color[None, None, :] + 0.5 * np.arange(w)[None, :, None], 0, 255)
        img[mask] = np.broadcast_to(shaded, (h, w, 3))[mask].astype(np.uint8)
        io.write_ppm(occ / f"image_{i:03d}.ppm", img)
        io.write_mask(occ / f"mask_{i:03d}.pgm", mask)
    for i in range(2):
        io.write_ppm(occ / "backgrounds" / f"bg_{i:03d}.ppm", rng.integers(0, 256, (h, w, 3), dtype=np.uint8))

    # the 4x4 half masks from the IoU example
    left = np.zeros((4, 4), bool)
    left[:, :2] = True
    top = np.zeros((4, 4), bool)
    top[:2, :] = True
    io.write_mask(HERE / "left_half.pgm", left, binary=False)
    io.write_mask(HERE / "top_half.pgm", top)
    io.write_camera(HERE / "camera.txt", Camera(2.0, 2.0, 112.0, 112.0))


if __name__ == "__main__":
    main()
