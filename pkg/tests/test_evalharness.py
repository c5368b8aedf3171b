import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from oracles import brute_chamfer
from pcrk.errors import InsufficientPointsError, PcrkError
from pcrk.evalharness import Protocol, evaluate, evaluate_batch, icp
from pcrk.geom import seeded_rng


def asymmetric_shape(rng, n=600):
    """An L-shaped bracket with a knob: no rotational symmetry."""
    a = rng.uniform([0, 0, 0], [1.0, 0.2, 0.2], (n // 3, 3))
    b = rng.uniform([0, 0, 0], [0.2, 0.7, 0.2], (n // 3, 3))
    c = rng.uniform([0.8, 0.2, 0], [1.0, 0.3, 0.5], (n - 2 * (n // 3), 3))
    return np.concatenate([a, b, c])


# --- ICP -------------------------------------------------------------------------

def test_icp_identity(rng):
    P = rng.random((50, 3))
    R, t, res, _ = icp(P, P)
    np.testing.assert_array_equal(R, np.eye(3))
    np.testing.assert_array_equal(t, np.zeros(3))
    assert res == 0.0


def test_icp_translation_only():
    # sparse points so nearest neighbours are the true partners
    P = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0], [0, 0, 10], [10, 10, 10]], float)
    R, t, res, _ = icp(P, P + [1, 2, 3], mode="translation")
    np.testing.assert_allclose(t, [1, 2, 3], atol=1e-12)
    np.testing.assert_array_equal(R, np.eye(3))
    assert res < 1e-9


def test_icp_recovers_rotation(rng):
    P = asymmetric_shape(rng)
    R_true = Rotation.from_euler("z", 10, degrees=True).as_matrix()
    R, t, res, hist = icp(P, P @ R_true.T)
    assert np.linalg.norm(R - R_true) < 1e-4
    assert np.all(np.diff(hist) <= 1e-15)


def test_icp_residual_non_increasing(rng):
    for _ in range(5):
        P, Q = rng.random((80, 3)), rng.random((70, 3)) + 0.2
        for mode in ("full", "translation"):
            hist = icp(P, Q, mode=mode).history
            assert np.all(np.diff(hist) <= 1e-12)


def test_icp_errors(rng):
    with pytest.raises(InsufficientPointsError):
        icp(rng.random((2, 3)), rng.random((5, 3)))
    with pytest.raises(PcrkError):
        icp(rng.random((5, 3)), rng.random((5, 3)), mode="affine")
    # a single point is enough without rotation
    assert icp([[0, 0, 0]], [[1, 1, 1]], mode="translation").residual == 0.0


# --- protocols --------------------------------------------------------------------

def test_protocol_defaults_and_validation():
    assert Protocol.viewer_centered().n == 2466
    assert Protocol.object_centered().n == 1024
    with pytest.raises(PcrkError):
        Protocol("weird")
    with pytest.raises(PcrkError):
        Protocol.pix3d(pre_rotation=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(PcrkError):
        Protocol.viewer_centered(n=0)


@pytest.mark.parametrize("proto", [Protocol.viewer_centered(), Protocol.object_centered(), Protocol.pix3d()])
def test_identical_pair_scores_zero(proto, rng):
    gt = rng.random((3000, 3))
    rec = evaluate(gt.copy(), gt, proto, seeded_rng(1))
    assert rec.cd == 0.0 and rec.emd == 0.0


def test_viewer_centered_matches_direct_chamfer(rng):
    gt = rng.random((50, 3))
    pred = rng.random((50, 3))
    rec = evaluate(pred, gt, Protocol.viewer_centered(n=50), seeded_rng(0))
    # n equals the cloud size, so sampling is a permutation and chamfer is unchanged
    assert rec.cd == pytest.approx(brute_chamfer(gt, pred), rel=1e-12)


def test_object_centered_invariance(rng):
    gt = asymmetric_shape(rng, 1200)
    pred = gt + 0.01 * rng.standard_normal(gt.shape)
    proto = Protocol.object_centered()
    base = evaluate(pred, gt, proto, seeded_rng(4))
    moved = evaluate(2.5 * pred + [-7, 3, 0.5], gt, proto, seeded_rng(4))
    assert moved.cd == pytest.approx(base.cd, abs=1e-9)
    assert moved.emd == pytest.approx(base.emd, abs=1e-9)


def test_pix3d_translation_vs_rotation(rng):
    gt = asymmetric_shape(rng, 1200)
    proto = Protocol.pix3d()
    shifted = evaluate(gt + [0.4, -0.2, 1.0], gt, proto, seeded_rng(2))
    assert shifted.cd < 1e-6 and shifted.emd < 1e-6
    R = Rotation.from_euler("y", 30, degrees=True).as_matrix()
    turned = evaluate(gt @ R.T, gt, proto, seeded_rng(2))
    assert turned.cd > 1e-3


def test_pix3d_pre_rotation_applied(rng):
    gt = asymmetric_shape(rng, 900)
    R = Rotation.from_euler("x", 40, degrees=True).as_matrix()
    # the prediction is already in the viewer frame the rotation produces
    rec = evaluate(gt @ R.T, gt, Protocol.pix3d(pre_rotation=R), seeded_rng(0))
    assert rec.cd < 1e-6


def test_unsquared_flag(rng):
    gt = rng.random((40, 3))
    pred = gt + [0.5, 0, 0]
    sq = evaluate(pred, gt, Protocol.viewer_centered(n=40), seeded_rng(0)).cd
    plain = evaluate(pred, gt, Protocol.viewer_centered(n=40, squared_cd=False), seeded_rng(0)).cd
    assert plain != sq and plain > 0


# --- batches ----------------------------------------------------------------------

def test_batch_single_and_mean(rng):
    gt = rng.random((100, 3))
    pairs = [(gt + 0.01, gt), (gt + 0.03, gt)]
    proto = Protocol.viewer_centered(n=100)
    single = evaluate_batch(pairs[:1], proto, seeded_rng(0))
    assert single.mean_cd == single.records[0].cd
    both = evaluate_batch(pairs, proto, seeded_rng(0), ids=["a", "b"])
    assert [r.sample_id for r in both.records] == ["a", "b"]
    assert both.mean_cd == pytest.approx((both.records[0].cd + both.records[1].cd) / 2)
    assert both.mean_emd == pytest.approx((both.records[0].emd + both.records[1].emd) / 2)


def test_batch_identical_pairs_zero_variance(rng):
    gt = rng.random((200, 3))
    pred = gt + 0.02 * rng.standard_normal(gt.shape)
    report = evaluate_batch([(pred, gt)] * 4, Protocol.viewer_centered(n=200), seeded_rng(0))
    assert np.var([r.cd for r in report.records]) == 0.0


def test_batch_failures_excluded_and_deterministic(rng, tmp_path):
    gt = rng.random((60, 3))
    pairs = [(gt + 0.05, gt), (np.zeros((0, 3)), gt), (gt + 0.1, gt)]
    proto = Protocol.object_centered(n=60)
    a = evaluate_batch(pairs, proto, seeded_rng(9), workers=1)
    b = evaluate_batch(pairs, proto, seeded_rng(9), workers=3)
    assert [f[0] for f in a.failures] == ["1"]
    assert a.mean_cd == pytest.approx(np.mean([r.cd for r in a.records]))
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "sample_id,cd,emd" and lines[-1].startswith("mean,")


def test_batch_empty():
    with pytest.raises(PcrkError):
        evaluate_batch([], Protocol.viewer_centered(), seeded_rng(0))
