import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from oracles import brute_min_pairwise, grid_mesh, icosphere, union_find_components, unit_sphere
from pcrk.errors import DegenerateGeometryError, NoSurfaceError, PcrkError, StageError
from pcrk.geom import TriangleMesh, seeded_rng
from pcrk.metrics import chamfer
from pcrk.refine import RefineConfig, refine_pipeline
from pcrk.refine.mesh import (boundary_vertices, clean_mesh, enclosed_volume, face_components,
                              smooth_curvature_flow)
from pcrk.refine.normals import OrientedCloud, estimate_normals, estimate_scales, orient_cloud
from pcrk.refine.sampling import eliminate_samples, poisson_disc_resample, sample_surface
from pcrk.refine.surface import reconstruct_surface


@pytest.fixture(scope="module")
def sphere_mesh():
    v, f = icosphere(3)
    return TriangleMesh(v, f)


# --- normals and scales --------------------------------------------------------

def test_plane_normals_consistent(rng):
    pts = np.column_stack([rng.random((20, 2)), np.zeros(20)])
    n = estimate_normals(pts, k=6)
    assert np.all(np.abs(np.abs(n[:, 2]) - 1) < 1e-12)
    assert len(np.unique(np.sign(n[:, 2]))) == 1


def test_sphere_normals_radial():
    pts = unit_sphere(2000, seeded_rng(3))
    n = estimate_normals(pts, k=6)
    assert np.mean(np.sum(n * pts, axis=1) > 0.99) >= 0.95


def test_normals_errors():
    with pytest.raises(PcrkError):
        estimate_normals(np.eye(3), k=6)
    line = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])
    with pytest.raises(DegenerateGeometryError):
        estimate_normals(line, k=3)


def test_normals_widen_locally_collinear_neighbourhood(rng):
    # a dense row of points along x sits next to a sparse planar patch:
    # the row's 6-neighbourhoods are collinear, but the cloud spans z = 0
    row = np.column_stack([np.linspace(0, 1e-3, 10), np.zeros(10), np.zeros(10)])
    patch = np.column_stack([rng.random((30, 2)) + 1.0, np.zeros(30)])
    normals = estimate_normals(np.concatenate([row, patch]), k=6)
    np.testing.assert_allclose(np.abs(normals[:, 2]), 1.0, atol=1e-12)


def test_scales_examples():
    assert estimate_scales([[0, 0, 0], [1, 0, 0], [2, 0, 0]])[1] == 1.0
    xs, ys = np.meshgrid(np.arange(6) * 0.3, np.arange(6) * 0.3)
    grid = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(36)])
    s = estimate_scales(grid).reshape(6, 6)
    np.testing.assert_allclose(s[1:-1, 1:-1], 0.3, rtol=1e-12)
    with pytest.raises(PcrkError):
        estimate_scales(np.eye(3)[:2])


def test_scales_brute_force_and_invariance(rng):
    pts = rng.random((60, 3))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    expected = np.sort(d, axis=1)[:, :2].mean(axis=1)
    s = estimate_scales(pts)
    np.testing.assert_allclose(s, expected, rtol=1e-12)
    assert np.all(s > 0)
    R = Rotation.from_rotvec([0.3, -1.1, 0.4]).as_matrix()
    np.testing.assert_allclose(estimate_scales(pts @ R.T + [5, -2, 1]), s, rtol=1e-9)


def test_oriented_cloud_validation(rng):
    pts = rng.random((4, 3))
    with pytest.raises(PcrkError):
        OrientedCloud(pts, np.tile([0.0, 0.0, 2.0], (4, 1)), np.ones(4))
    with pytest.raises(PcrkError):
        OrientedCloud(pts, np.tile([0.0, 0.0, 1.0], (4, 1)), np.zeros(4))


# --- surface ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def sphere_surface():
    oc = orient_cloud(unit_sphere(2000, seeded_rng(11)))
    return oc, reconstruct_surface(oc, resolution=64)


def test_sphere_surface(sphere_surface):
    _, mesh = sphere_surface
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.mean(np.abs(r - 1)) < 0.05


def test_plane_patch_surface(rng):
    pts = np.column_stack([rng.uniform(-1, 1, (1500, 2)), np.zeros(1500)])
    oc = orient_cloud(pts)
    mesh = reconstruct_surface(oc, resolution=48)
    assert np.abs(mesh.vertices[:, 2]).max() < 0.02 * oc.scales.mean()


def test_surface_too_few_points():
    with pytest.raises(PcrkError):
        reconstruct_surface(orient_cloud(np.eye(3) * [1, 2, 3]), resolution=16)


def test_surface_no_crossing():
    # a grid too coarse to straddle the narrow supports
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [100, 100, 100]], float)
    oc = OrientedCloud(pts, np.tile([0.0, 0.0, 1.0], (4, 1)), np.full(4, 0.01))
    with pytest.raises(NoSurfaceError, match="no surface found"):
        reconstruct_surface(oc, resolution=4)


def test_surface_rigid_motion_equivariance(sphere_surface):
    oc, mesh = sphere_surface
    R = Rotation.from_rotvec([0.2, 0.5, -0.3]).as_matrix()
    t = np.array([0.3, -0.2, 0.1])
    moved = OrientedCloud(oc.points @ R.T + t, oc.normals @ R.T, oc.scales)
    mesh2 = reconstruct_surface(moved, resolution=64)
    cell = np.ptp(oc.points, axis=0).max() / 63
    rng = seeded_rng(0)
    a = sample_surface(mesh, 3000, rng) @ R.T + t
    b = sample_surface(mesh2, 3000, rng)
    assert np.sqrt(chamfer(a, b) / 2) < 2 * cell


# --- cleaning ---------------------------------------------------------------------

def floater_mesh(sphere_mesh):
    v, f = sphere_mesh.vertices, sphere_mesh.faces
    extra = np.array([[5, 5, 5], [6, 5, 5], [5, 6, 5], [6, 6, 5], [5.5, 5.5, 6]])
    ef = np.array([[0, 1, 4], [1, 3, 4], [3, 2, 4], [2, 0, 4]]) + len(v)
    return TriangleMesh(np.vstack([v, extra]), np.vstack([f, ef]))


def test_clean_single_component_unchanged(sphere_mesh):
    out = clean_mesh(sphere_mesh, 20)
    np.testing.assert_array_equal(out.faces, sphere_mesh.faces)
    np.testing.assert_array_equal(out.vertices, sphere_mesh.vertices)


def test_clean_removes_floater(sphere_mesh):
    out = clean_mesh(floater_mesh(sphere_mesh), 20)
    assert out.n_faces == sphere_mesh.n_faces
    assert out.n_vertices == sphere_mesh.n_vertices


def test_clean_matches_union_find(rng):
    parts_v, parts_f, offset = [], [], 0
    for size in (2, 3, 5, 8):
        v, f = grid_mesh(size)
        parts_v.append(v + rng.random(3) * 100)
        parts_f.append(f + offset)
        offset += len(v)
    mesh = TriangleMesh(np.vstack(parts_v), np.vstack(parts_f))
    labels = np.array(union_find_components(mesh.faces.tolist()))
    _, counts = np.unique(labels, return_counts=True)
    for threshold in (1, 5, 20, 60, 100):
        expected = int(counts[counts >= threshold].sum())
        assert clean_mesh(mesh, threshold).n_faces == expected
    assert len(np.unique(face_components(mesh))) == 4
    assert clean_mesh(mesh, 1000).n_faces == 0


# --- smoothing --------------------------------------------------------------------

def test_smoothing_shrinks_sphere_volume(sphere_mesh):
    vol = [enclosed_volume(sphere_mesh)]
    m = sphere_mesh
    for _ in range(5):
        m = smooth_curvature_flow(m, iters=1, step=0.1)
        vol.append(enclosed_volume(m))
    assert all(b < a for a, b in zip(vol, vol[1:]))


def test_smoothing_flat_grid():
    v, f = grid_mesh(8, spacing=0.1)
    out = smooth_curvature_flow(TriangleMesh(v, f), iters=5, step=0.1)
    assert np.abs(out.vertices - v).max() < 1e-9
    assert boundary_vertices(TriangleMesh(v, f)).sum() == 28


def test_smoothing_reduces_radial_noise(sphere_mesh):
    rng = seeded_rng(4)
    v = sphere_mesh.vertices * (1 + 0.02 * rng.standard_normal((sphere_mesh.n_vertices, 1)))
    noisy = TriangleMesh(v, sphere_mesh.faces)
    out = smooth_curvature_flow(noisy, iters=5, step=0.1)
    assert np.var(np.linalg.norm(out.vertices, axis=1)) < np.var(np.linalg.norm(v, axis=1))
    np.testing.assert_array_equal(out.faces, noisy.faces)
    assert out.n_vertices == noisy.n_vertices


def test_smoothing_degenerate_face_named():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], float)
    mesh = TriangleMesh(v, [[0, 1, 2], [0, 1, 3]])
    with pytest.raises(DegenerateGeometryError, match="face 0"):
        smooth_curvature_flow(mesh)


# --- resampling -------------------------------------------------------------------

SQUARE = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float), [[0, 1, 2], [0, 2, 3]])


def test_resample_square():
    pts = poisson_disc_resample(SQUARE, 100, seeded_rng(0))
    assert pts.shape == (100, 3)
    assert np.all(pts[:, 2] == 0)
    assert np.all((pts[:, :2] >= 0) & (pts[:, :2] <= 1))
    one = poisson_disc_resample(SQUARE, 1, seeded_rng(0))
    assert one.shape == (1, 3) and one[0, 2] == 0


def test_resample_reports_true_min_distance(sphere_mesh):
    pts, radius = poisson_disc_resample(sphere_mesh, 500, seeded_rng(2), return_radius=True)
    assert radius == pytest.approx(brute_min_pairwise(pts), rel=1e-12)


def test_eliminate_samples_greedy(rng):
    cand = rng.random((40, 3))
    keep, r = eliminate_samples(cand, 10)
    assert len(set(keep.tolist())) == 10
    assert r == pytest.approx(brute_min_pairwise(cand[keep]), rel=1e-12)


def test_resample_zero_area():
    flat = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float), [[0, 1, 2]])
    with pytest.raises(PcrkError):
        poisson_disc_resample(flat, 5, seeded_rng(0))


# --- pipeline ---------------------------------------------------------------------

def test_pipeline_count_and_determinism():
    pts = unit_sphere(800, seeded_rng(9)) * (1 + 0.01 * seeded_rng(10).standard_normal((800, 1)))
    cfg = RefineConfig(grid_resolution=32, resample_count=300)
    a = refine_pipeline(pts, cfg, seeded_rng(1))
    b = refine_pipeline(pts, cfg, seeded_rng(1))
    assert a.shape == (300, 3)
    np.testing.assert_array_equal(a, b)


def test_pipeline_stage_tagged_error():
    with pytest.raises(StageError, match=r"^\[normals\]"):
        refine_pipeline(np.eye(3), RefineConfig(), seeded_rng(0))


def test_config_validation():
    with pytest.raises(PcrkError):
        RefineConfig(smooth_iters=0)
    with pytest.raises(PcrkError):
        RefineConfig(support_radius_factor=0.0)
