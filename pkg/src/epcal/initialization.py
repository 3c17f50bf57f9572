"""Initial camera and pose estimates from planar-target correspondences.

The pipeline seeds the nonlinear refinement: principal point at the image
center, focal length from the nominal field of view assuming an ideal
angle-proportional mapping, per-view poses from a plane-to-image homography
(normalized DLT, nearest-rotation decomposition), and a linear least-squares
estimate of the first two radial coefficients. Skew, the two highest radial
coefficients, and all entrance-pupil coefficients start at zero and are left
to the refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CalibrationDataset
from .model import (
    DEFAULT_THETA_MAX,
    CameraIntrinsics,
    EntrancePupil,
    Pose,
    RadialDistortion,
    RadialRangeError,
    incidence_angle,
    invert_radial,
    matrix_to_rodrigues,
    transform_world_to_camera,
)

# Pinhole normalization tan(theta) blows up near 90 degrees; points at or
# beyond this angle are excluded from initialization only.
INIT_THETA_LIMIT = math.radians(85.0)


class InitializationError(ValueError):
    """Initial estimation failed (degenerate or insufficient data)."""


@dataclass(frozen=True)
class InitialEstimate:
    """Seed parameters for the refinement: k3 = k4 = sk = 0, entrance pupil zero."""

    intrinsics: CameraIntrinsics
    radial: RadialDistortion
    ep: EntrancePupil
    poses: tuple[Pose, ...]

    def __post_init__(self) -> None:
        if not self.ep.is_zero():
            raise ValueError("initial estimate must have a zero entrance pupil")
        if self.radial.k3 != 0.0 or self.radial.k4 != 0.0:
            raise ValueError("initial estimate must have k3 = k4 = 0")
        if self.intrinsics.sk != 0.0:
            raise ValueError("initial estimate must have sk = 0")
        object.__setattr__(self, "poses", tuple(self.poses))


def init_principal_point(image_width: float, image_height: float) -> tuple[float, float]:
    """Image center (W/2, H/2) as the principal-point seed."""
    if image_width <= 0 or image_height <= 0:
        raise ValueError(f"image dimensions must be positive, got "
                         f"{image_width}x{image_height}")
    return image_width / 2.0, image_height / 2.0


def init_focal(fov_degrees: float, image_width: float) -> float:
    """Focal seed assuming an angle-proportional mapping filling the width.

    f = (W/2) / (half FOV in radians); used for both fx and fy.
    """
    if not 0.0 < fov_degrees < 360.0:
        raise ValueError(f"field of view must be in (0, 360) degrees, got {fov_degrees}")
    return (image_width / 2.0) / math.radians(fov_degrees / 2.0)


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity transform putting the centroid at 0 with mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    mean_dist = float(np.mean(np.linalg.norm(pts - centroid, axis=1)))
    s = 1.0 if mean_dist < 1e-12 else math.sqrt(2.0) / mean_dist
    t = np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])
    return (pts - centroid) * s, t


def estimate_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Plane-to-plane homography via normalized DLT.

    ``src`` and ``dst`` are (N, 2) with N >= 4. Raises InitializationError for
    rank-deficient (e.g. collinear) configurations.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    n = src.shape[0]
    if n < 4 or dst.shape[0] != n:
        raise InitializationError(f"homography needs >= 4 correspondences, got {n}")
    sn, ts = _normalize_points(src)
    dn, td = _normalize_points(dst)
    a = np.zeros((2 * n, 9))
    a[0::2, 0:2] = -sn
    a[0::2, 2] = -1.0
    a[0::2, 6:8] = dn[:, 0:1] * sn
    a[0::2, 8] = dn[:, 0]
    a[1::2, 3:5] = -sn
    a[1::2, 5] = -1.0
    a[1::2, 6:8] = dn[:, 1:2] * sn
    a[1::2, 8] = dn[:, 1]
    _, sv, vt = np.linalg.svd(a)
    if sv[7] <= 1e-9 * sv[0]:
        raise InitializationError("degenerate correspondence configuration (rank-deficient)")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ h_norm @ ts
    if abs(h[2, 2]) > 1e-12:
        h = h / h[2, 2]
    return h


def _pinhole_normalized(
    pixels: np.ndarray,
    intrinsics: CameraIntrinsics,
    radial: RadialDistortion,
) -> tuple[np.ndarray, np.ndarray]:
    """Undistort pixels to (tan t cos p, tan t sin p); mask out t >= 85 deg.

    Points whose radius falls outside the invertible polynomial range are
    excluded the same way as the angle cutoff.
    """
    yr = (pixels[:, 1] - intrinsics.v0) / intrinsics.fy
    xr = (pixels[:, 0] - intrinsics.u0 - intrinsics.sk * yr) / intrinsics.fx
    radius = np.hypot(xr, yr)
    phi = np.arctan2(yr, xr)
    normalized = np.zeros_like(pixels)
    usable = np.zeros(pixels.shape[0], dtype=bool)
    for i, r in enumerate(radius):
        try:
            theta = invert_radial(float(r), radial, INIT_THETA_LIMIT)
        except RadialRangeError:
            continue
        normalized[i] = math.tan(theta) * np.array([math.cos(phi[i]), math.sin(phi[i])])
        usable[i] = True
    return normalized, usable


def init_pose_from_homography(
    target_points: np.ndarray,
    pixels: np.ndarray,
    intrinsics: CameraIntrinsics,
    radial: RadialDistortion,
) -> Pose:
    """Pose of one view from a homography between the target plane and
    pinhole-normalized image coordinates.

    Decomposes H = [r1 r2 t] with the scale fixed by ||r1||, projects
    [r1 r2 r1 x r2] to the nearest rotation, and flips the sign when the
    target would land behind the camera.
    """
    target_points = np.asarray(target_points, dtype=float).reshape(-1, 2)
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    normalized, usable = _pinhole_normalized(pixels, intrinsics, radial)
    if int(usable.sum()) < 4:
        raise InitializationError(
            f"only {int(usable.sum())} points below the {math.degrees(INIT_THETA_LIMIT):.0f} "
            "degree initialization cutoff; need at least 4"
        )
    h = estimate_homography(target_points[usable], normalized[usable])
    h1, h2, h3 = h[:, 0], h[:, 1], h[:, 2]
    scale = np.linalg.norm(h1)
    if scale < 1e-12:
        raise InitializationError("degenerate homography (vanishing first column)")
    r1, r2, t = h1 / scale, h2 / scale, h3 / scale
    # Positive depth: the plane must sit in front of the camera.
    src = target_points[usable]
    depths = src[:, 0] * r1[2] + src[:, 1] * r2[2] + t[2]
    if float(depths.mean()) < 0.0:
        r1, r2, t = -r1, -r2, -t
    candidate = np.column_stack([r1, r2, np.cross(r1, r2)])
    u, _, vt = np.linalg.svd(candidate)
    rot = u @ vt
    if np.linalg.det(rot) < 0.0:
        rot = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return Pose(matrix_to_rodrigues(rot), t)


def init_distortion(
    dataset: CalibrationDataset,
    intrinsics: CameraIntrinsics,
    poses,
) -> tuple[float, float]:
    """Linear least-squares estimate of (k1, k2).

    Each observation relates its geometric incidence angle (from the given
    pose, no entrance pupil) to the measured normalized radius through
    r = theta + k1 theta^3 + k2 theta^5; the stacked system is solved by
    normal equations.
    """
    if len(poses) != dataset.n_views:
        raise InitializationError(
            f"got {len(poses)} poses for {dataset.n_views} views"
        )
    thetas = []
    radii = []
    for view, pose in zip(dataset.views, poses):
        cam = transform_world_to_camera(pose, dataset.target_points[view.target_indices])
        thetas.append(np.asarray(incidence_angle(cam)))
        yr = (view.pixels[:, 1] - intrinsics.v0) / intrinsics.fy
        xr = (view.pixels[:, 0] - intrinsics.u0 - intrinsics.sk * yr) / intrinsics.fx
        radii.append(np.hypot(xr, yr))
    theta = np.concatenate(thetas)
    r = np.concatenate(radii)
    if theta.size < 2:
        raise InitializationError(f"need at least 2 observations, got {theta.size}")
    t3 = theta ** 3
    a = np.column_stack([t3, t3 * theta * theta])
    b = r - theta
    try:
        k1, k2 = np.linalg.solve(a.T @ a, a.T @ b)
    except np.linalg.LinAlgError as exc:
        raise InitializationError(f"distortion normal equations are singular: {exc}") from exc
    return float(k1), float(k2)


def initial_estimate(
    dataset: CalibrationDataset,
    fov_degrees: float | None = None,
    theta_max: float = DEFAULT_THETA_MAX,
) -> InitialEstimate:
    """Full initialization pipeline for a dataset.

    ``fov_degrees`` defaults to twice ``theta_max``, matching the assumption
    that the valid cone fills the image width.
    """
    if fov_degrees is None:
        fov_degrees = 2.0 * math.degrees(theta_max)
    w, h = dataset.image_size
    u0, v0 = init_principal_point(w, h)
    f = init_focal(fov_degrees, w)
    intrinsics = CameraIntrinsics(f, f, 0.0, u0, v0)
    zero_radial = RadialDistortion()
    poses = []
    for view in dataset.views:
        try:
            poses.append(
                init_pose_from_homography(
                    dataset.target_points[view.target_indices],
                    view.pixels,
                    intrinsics,
                    zero_radial,
                )
            )
        except InitializationError as exc:
            raise InitializationError(f"pose {view.pose_id}: {exc}") from exc
    k1, k2 = init_distortion(dataset, intrinsics, poses)
    return InitialEstimate(
        intrinsics=intrinsics,
        radial=RadialDistortion(k1, k2, 0.0, 0.0),
        ep=EntrancePupil(),
        poses=tuple(poses),
    )
