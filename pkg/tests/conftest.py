"""Shared fixtures: a reference camera and small synthetic datasets."""

import numpy as np
import pytest

import epcal as ec


@pytest.fixture
def ref_intrinsics() -> ec.CameraIntrinsics:
    return ec.CameraIntrinsics(601.75, 601.75, 0.0, 1024.0, 1024.0)


@pytest.fixture
def ref_model(ref_intrinsics) -> ec.CameraModel:
    """Wide-FOV fisheye with a non-trivial entrance pupil."""
    return ec.CameraModel(ref_intrinsics, ec.REFERENCE_RADIAL, ec.REFERENCE_EP)


@pytest.fixture
def ref_model_svp(ref_intrinsics) -> ec.CameraModel:
    return ec.CameraModel.svp(ref_intrinsics, ec.REFERENCE_RADIAL)


@pytest.fixture
def target_spec() -> ec.TargetSpec:
    return ec.TargetSpec(rows=7, cols=11, spacing=10.0)


def make_config(model, target=None, **kwargs) -> ec.SynthConfig:
    return ec.SynthConfig(
        model=model,
        target=target or ec.TargetSpec(7, 11, 10.0),
        **kwargs,
    )


@pytest.fixture
def small_noisefree_dataset(ref_model, target_spec) -> ec.CalibrationDataset:
    config = ec.SynthConfig(ref_model, target_spec, n_poses=6, noise_px=0.0, seed=11)
    return ec.render_dataset(config)


def random_front_points(rng: np.random.Generator, n: int) -> np.ndarray:
    """Target points that stay well inside the FOV at ~120 mm."""
    return rng.uniform(-55.0, 55.0, size=(n, 2))


def random_pose(rng: np.random.Generator, max_tilt_rad: float = 0.45) -> ec.Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_tilt_rad)
    trans = np.array([
        rng.uniform(-12.0, 12.0),
        rng.uniform(-12.0, 12.0),
        rng.uniform(100.0, 150.0),
    ])
    return ec.Pose(axis * angle, trans)
