"""Seed estimates: principal point, focal, homography poses, linear distortion."""

import math

import numpy as np
import pytest

import epcal as ec
from conftest import make_config


def test_principal_point_center():
    assert ec.init_principal_point(2048, 2048) == (1024.0, 1024.0)
    assert ec.init_principal_point(640, 480) == (320.0, 240.0)
    assert ec.init_principal_point(1, 1) == (0.5, 0.5)


def test_principal_point_rejects_bad_dims():
    with pytest.raises(ValueError):
        ec.init_principal_point(0, 480)


def test_focal_seed_wide_fov():
    f = ec.init_focal(195.0, 2048)
    assert f == pytest.approx(1024.0 / math.radians(97.5), rel=1e-15)
    assert 595.0 < f < 610.0  # same order as a real ~195 degree device


def test_focal_seed_constructed_identities():
    assert ec.init_focal(180.0, math.pi * 100.0) == pytest.approx(100.0, rel=1e-12)
    assert ec.init_focal(90.0, 2.0) == pytest.approx(1.0 / (math.pi / 4.0), rel=1e-12)


def test_focal_seed_rejects_bad_fov():
    with pytest.raises(ValueError):
        ec.init_focal(0.0, 2048)
    with pytest.raises(ValueError):
        ec.init_focal(400.0, 2048)


# ---------------------------------------------------------------------------
# Homography
# ---------------------------------------------------------------------------

def test_homography_exact_on_constructed_map():
    rng = np.random.default_rng(0)
    h_true = np.array([
        [0.9, 0.05, 3.0],
        [-0.04, 1.1, -2.0],
        [1e-4, -2e-4, 1.0],
    ])
    src = rng.uniform(-50, 50, size=(30, 2))
    src_h = np.column_stack([src, np.ones(30)])
    dst_h = src_h @ h_true.T
    dst = dst_h[:, :2] / dst_h[:, 2:3]
    h = ec.estimate_homography(src, dst)
    np.testing.assert_allclose(h, h_true / h_true[2, 2], atol=1e-9)


def test_homography_similarity_composition():
    # Applying an extra similarity S to the source coordinates must yield
    # H' = H S^{-1} exactly; normalization makes the estimate invariant to
    # the coordinate frame.
    rng = np.random.default_rng(1)
    src = rng.uniform(-40, 40, size=(25, 2))
    dst = rng.uniform(-1, 1, size=(25, 2))
    h = ec.estimate_homography(src, dst)
    s, tx, ty = 3.7, 12.0, -4.0
    sim = np.array([[s, 0.0, tx], [0.0, s, ty], [0.0, 0.0, 1.0]])
    src_sim = src * s + [tx, ty]
    h_sim = ec.estimate_homography(src_sim, dst)
    recomposed = h_sim @ sim
    np.testing.assert_allclose(
        recomposed / recomposed[2, 2], h / h[2, 2], atol=1e-9
    )


def test_homography_rejects_collinear_points():
    src = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    dst = np.array([[0.0, 0.0], [1.0, 0.9], [2.0, 2.1], [3.0, 3.0]])
    with pytest.raises(ec.InitializationError):
        ec.estimate_homography(src, dst)


def test_homography_rejects_too_few_points():
    with pytest.raises(ec.InitializationError):
        ec.estimate_homography(np.zeros((3, 2)), np.zeros((3, 2)))


# ---------------------------------------------------------------------------
# Pose from homography
# ---------------------------------------------------------------------------

def test_pose_recovery_exact_for_identity_intrinsics():
    # Data generated by the projection model itself with k = 0 and identity
    # pixel map: the homography relation is exact, recovery to 1e-9.
    intr = ec.CameraIntrinsics(1.0, 1.0, 0.0, 0.0, 0.0)
    model = ec.CameraModel.svp(intr, ec.RadialDistortion())
    pose = ec.Pose((0.2, -0.1, 0.05), (4.0, -6.0, 130.0))
    pts = ec.generate_target(ec.TargetSpec(5, 6, 12.0))
    pix = ec.project(model, pose, pts)
    est = ec.init_pose_from_homography(pts, pix, intr, ec.RadialDistortion())
    np.testing.assert_allclose(est.rotation, pose.rotation, atol=1e-9)
    np.testing.assert_allclose(est.translation, pose.translation, atol=1e-9)


def test_pose_recovery_fronto_parallel_real_scale(ref_intrinsics):
    model = ec.CameraModel.svp(ref_intrinsics, ec.RadialDistortion())
    pose = ec.Pose(np.zeros(3), (2.0, -3.0, 120.0))
    pts = ec.generate_target(ec.TargetSpec(7, 11, 10.0))
    pix = ec.project(model, pose, pts)
    est = ec.init_pose_from_homography(pts, pix, ref_intrinsics, ec.RadialDistortion())
    assert np.linalg.norm(est.translation - pose.translation) < 1.0  # mm
    assert np.linalg.norm(est.rotation - pose.rotation) < math.radians(0.5)


def test_pose_recovery_with_small_distortion_stays_close(ref_intrinsics):
    # k != 0 data initialized with a k = 0 model: bias stays in the LM basin.
    model = ec.CameraModel.svp(ref_intrinsics, ec.REFERENCE_RADIAL)
    pose = ec.Pose((0.15, 0.1, -0.08), (5.0, 2.0, 115.0))
    pts = ec.generate_target(ec.TargetSpec(7, 11, 10.0))
    pix = ec.project(model, pose, pts)
    est = ec.init_pose_from_homography(pts, pix, ref_intrinsics, ec.RadialDistortion())
    assert np.linalg.norm(est.translation - pose.translation) < 3.0
    assert np.linalg.norm(est.rotation - pose.rotation) < math.radians(2.0)


def test_pose_from_collinear_points_degenerate(ref_intrinsics):
    pts = np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0]])
    pix = np.array([[1024.0, 1024.0], [1080.0, 1024.0], [1136.0, 1024.0], [1192.0, 1024.0]])
    with pytest.raises(ec.InitializationError):
        ec.init_pose_from_homography(pts, pix, ref_intrinsics, ec.RadialDistortion())


# ---------------------------------------------------------------------------
# Linear distortion estimate
# ---------------------------------------------------------------------------

def _distortion_dataset(ref_intrinsics, k1, k2, seed=5, n_poses=4):
    radial = ec.RadialDistortion(k1, k2, 0.0, 0.0)
    model = ec.CameraModel.svp(ref_intrinsics, radial)
    config = make_config(model, n_poses=n_poses, noise_px=0.0, seed=seed)
    return ec.render_dataset(config), model


def test_init_distortion_recovers_k1_k2(ref_intrinsics):
    dataset, model = _distortion_dataset(ref_intrinsics, 0.01, -0.001)
    k1, k2 = ec.init_distortion(dataset, model.intrinsics, dataset.ground_truth.poses)
    assert k1 == pytest.approx(0.01, abs=1e-6)
    assert k2 == pytest.approx(-0.001, abs=1e-6)


def test_init_distortion_zero_for_undistorted_data(ref_intrinsics):
    dataset, model = _distortion_dataset(ref_intrinsics, 0.0, 0.0)
    k1, k2 = ec.init_distortion(dataset, model.intrinsics, dataset.ground_truth.poses)
    assert abs(k1) < 1e-9
    assert abs(k2) < 1e-9


def test_init_distortion_single_pose(ref_intrinsics):
    dataset, model = _distortion_dataset(ref_intrinsics, 0.01, -0.001, n_poses=1)
    k1, k2 = ec.init_distortion(dataset, model.intrinsics, dataset.ground_truth.poses)
    assert k1 == pytest.approx(0.01, abs=1e-5)
    assert k2 == pytest.approx(-0.001, abs=1e-5)


def test_init_distortion_pose_count_mismatch(ref_intrinsics):
    dataset, model = _distortion_dataset(ref_intrinsics, 0.01, -0.001)
    with pytest.raises(ec.InitializationError):
        ec.init_distortion(dataset, model.intrinsics, dataset.ground_truth.poses[:-1])


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def test_initial_estimate_structural_zeros(ref_model, target_spec):
    config = make_config(ref_model, target_spec, n_poses=5, noise_px=0.1, seed=13)
    dataset = ec.render_dataset(config)
    est = ec.initial_estimate(dataset)
    assert est.ep.is_zero()
    assert est.radial.k3 == 0.0 and est.radial.k4 == 0.0
    assert est.intrinsics.sk == 0.0
    assert len(est.poses) == dataset.n_views


def test_initial_estimate_lands_in_convergence_basin(ref_intrinsics, target_spec):
    # Noise-free SVP data with small distortion: init + refinement reaches
    # the exact solution.
    model = ec.CameraModel.svp(ref_intrinsics, ec.RadialDistortion(0.01, -0.001, 0, 0))
    config = make_config(model, target_spec, n_poses=8, noise_px=0.0, seed=17)
    dataset = ec.render_dataset(config)
    est = ec.initial_estimate(dataset)
    model0 = ec.CameraModel(est.intrinsics, est.radial, est.ep,
                            ec.ModelKind.SVP, model.theta_max)
    result = ec.lm_solve(
        model0, est.poses, dataset,
        ec.SolveOptions(fixed=ec.svp_parameter_mask(dataset.n_views)),
    )
    assert result.converged
    assert result.rms_px < 1e-8
