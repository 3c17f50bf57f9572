"""Camera model types and projection geometry for wide-FOV fisheye lenses.

Two image-formation variants share one code path:

* SVP: single-viewpoint model. Every incidence ray passes through the
  optical center and the image radius is the ninth-order odd polynomial
  ``r(theta)`` of the incidence angle.
* NSVP: non-single-viewpoint variant. Before the rigid transform, each
  world point is shifted along the world Z axis by ``E(theta)``, an odd
  polynomial modelling the axial wander of the entrance pupil. The shift
  depends on the incidence angle and the angle depends on the shift, so the
  angle is resolved by a fixed-point iteration seeded from the unshifted
  (SVP) angle.

Units: target points are planar ``(x, y)`` millimetres with Z = 0 on the
target plane, camera points and entrance-pupil shifts are millimetres,
image coordinates are pixels, angles are radians. All operations are pure
functions over immutable value types; point arguments may be a single
``(2,)`` point or a stack ``(N, 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

DEFAULT_THETA_MAX = math.radians(97.5)

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 20

_MONOTONE_GRID = 1024


class ProjectionError(ValueError):
    """The point has no valid pixel under the given model and pose."""


class OutOfFovError(ProjectionError):
    """Resolved incidence angle exceeds the model's maximum angle."""


class BehindCameraError(ProjectionError):
    """Point lies behind the camera (or on the projection center)."""


class FixedPointError(ProjectionError):
    """The entrance-pupil angle iteration did not converge."""


class RadialRangeError(ValueError):
    """Requested radius is outside the invertible range of r(theta)."""


class NonMonotoneRadialError(ValueError):
    """r(theta) is not strictly increasing up to theta_max."""


class InvalidRotationError(ValueError):
    """Input matrix is not a proper rotation."""


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pixel-space affine map: u = fx*x + sk*y + u0, v = fy*y + v0."""

    fx: float
    fy: float
    sk: float
    u0: float
    v0: float

    def __post_init__(self) -> None:
        _require_finite("intrinsics", self.fx, self.fy, self.sk, self.u0, self.v0)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")


@dataclass(frozen=True)
class RadialDistortion:
    """Coefficients of r(theta) = theta + k1*theta^3 + ... + k4*theta^9."""

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0

    def __post_init__(self) -> None:
        _require_finite("radial coefficients", self.k1, self.k2, self.k3, self.k4)

    def as_array(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.k4])


@dataclass(frozen=True)
class EntrancePupil:
    """Coefficients of E(theta) = e1*theta^3 + e2*theta^5 + e3*theta^7 + e4*theta^9.

    The shift is in world length units (millimetres); E(0) = 0 by
    construction since there is no constant or linear term.
    """

    e1: float = 0.0
    e2: float = 0.0
    e3: float = 0.0
    e4: float = 0.0

    def __post_init__(self) -> None:
        _require_finite("entrance-pupil coefficients", self.e1, self.e2, self.e3, self.e4)

    def as_array(self) -> np.ndarray:
        return np.array([self.e1, self.e2, self.e3, self.e4])

    def is_zero(self) -> bool:
        return self.e1 == 0.0 and self.e2 == 0.0 and self.e3 == 0.0 and self.e4 == 0.0


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform: Pc = R(rotation) @ Pw + translation.

    ``rotation`` is an axis-angle (Rodrigues) 3-vector in radians,
    ``translation`` is in millimetres.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rot = np.array(self.rotation, dtype=float).reshape(3)
        tra = np.array(self.translation, dtype=float).reshape(3)
        if not (np.isfinite(rot).all() and np.isfinite(tra).all()):
            raise ValueError("pose parameters must be finite")
        rot.setflags(write=False)
        tra.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    def matrix(self) -> np.ndarray:
        return rodrigues_to_matrix(self.rotation)

    def canonical(self) -> "Pose":
        """Equivalent pose with axis-angle magnitude wrapped into [0, pi]."""
        angle = float(np.linalg.norm(self.rotation))
        if angle == 0.0:
            return self
        axis = self.rotation / angle
        wrapped = math.fmod(angle, 2.0 * math.pi)
        if wrapped < 0.0:
            wrapped += 2.0 * math.pi
        if wrapped > math.pi:
            wrapped = 2.0 * math.pi - wrapped
            axis = -axis
        return Pose(axis * wrapped, self.translation)


class ModelKind(str, Enum):
    SVP = "SVP"
    NSVP = "NSVP"


@dataclass(frozen=True)
class CameraModel:
    """Complete camera: intrinsics, radial polynomial, entrance pupil, FOV limit."""

    intrinsics: CameraIntrinsics
    radial: RadialDistortion
    ep: EntrancePupil
    kind: ModelKind = ModelKind.NSVP
    theta_max: float = DEFAULT_THETA_MAX
    radial_monotone: bool = field(init=False)

    def __post_init__(self) -> None:
        if not isinstance(self.kind, ModelKind):
            raise ValueError(f"kind must be a ModelKind, got {self.kind!r}")
        if not (0.0 < self.theta_max < math.pi):
            raise ValueError(f"theta_max must be in (0, pi), got {self.theta_max}")
        if self.kind is ModelKind.SVP and not self.ep.is_zero():
            raise ValueError("SVP models must have all entrance-pupil coefficients zero")
        object.__setattr__(
            self, "radial_monotone", radial_is_monotone(self.radial, self.theta_max)
        )

    @classmethod
    def svp(
        cls,
        intrinsics: CameraIntrinsics,
        radial: RadialDistortion,
        theta_max: float = DEFAULT_THETA_MAX,
    ) -> "CameraModel":
        return cls(intrinsics, radial, EntrancePupil(), ModelKind.SVP, theta_max)


class UnprojectResult(NamedTuple):
    """Unit ray direction(s), incidence angle(s), and axial ray-origin offset(s).

    ``z_offset`` is E(theta): for an NSVP model the recovered ray emanates
    from a point offset by that amount along the optical axis; it is zero
    for SVP models.
    """

    ray: np.ndarray
    theta: np.ndarray
    z_offset: np.ndarray


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------

def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rodrigues_to_matrix(axis_angle) -> np.ndarray:
    """Rotation matrix from an axis-angle 3-vector.

    Continuous in the input: near zero the sin/cos factors are replaced by
    their series so the map has no seam at the identity.
    """
    v = np.asarray(axis_angle, dtype=float).reshape(3)
    t2 = float(v @ v)
    t = math.sqrt(t2)
    if t < 1e-4:
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    else:
        a = math.sin(t) / t
        b = (1.0 - math.cos(t)) / t2
    k = _skew(v)
    return np.eye(3) + a * k + b * (k @ k)


def rodrigues_to_matrix_many(axis_angles: np.ndarray) -> np.ndarray:
    """Vectorized ``rodrigues_to_matrix`` for a stack of (B, 3) vectors."""
    v = np.asarray(axis_angles, dtype=float).reshape(-1, 3)
    t2 = np.einsum("bi,bi->b", v, v)
    t = np.sqrt(t2)
    small = t < 1e-4
    safe_t = np.where(small, 1.0, t)
    safe_t2 = np.where(small, 1.0, t2)
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(t) / safe_t)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(t)) / safe_t2)
    zeros = np.zeros_like(t)
    k = np.stack([
        np.stack([zeros, -v[:, 2], v[:, 1]], axis=-1),
        np.stack([v[:, 2], zeros, -v[:, 0]], axis=-1),
        np.stack([-v[:, 1], v[:, 0], zeros], axis=-1),
    ], axis=-2)
    kk = k @ k
    return np.eye(3) + a[:, None, None] * k + b[:, None, None] * kk


def matrix_to_rodrigues(matrix) -> np.ndarray:
    """Axis-angle 3-vector (magnitude in [0, pi]) from a rotation matrix.

    Raises InvalidRotationError when the matrix is not orthonormal to 1e-9
    or has non-positive determinant.
    """
    r = np.asarray(matrix, dtype=float)
    if r.shape != (3, 3):
        raise InvalidRotationError(f"expected a 3x3 matrix, got shape {r.shape}")
    defect = float(np.abs(r.T @ r - np.eye(3)).max())
    if defect > 1e-9 or np.linalg.det(r) <= 0.0:
        raise InvalidRotationError(
            f"matrix is not a proper rotation (orthonormality defect {defect:.3e})"
        )
    cos_t = min(1.0, max(-1.0, (float(np.trace(r)) - 1.0) / 2.0))
    t = math.acos(cos_t)
    w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if t < 1e-7:
        # theta/(2 sin theta) ~ 1/2 + theta^2/12
        return w * (0.5 + t * t / 12.0)
    if t > math.pi - 1e-2:
        # Near a half turn the sin-based formula amplifies rounding by
        # 1/(pi - theta)^2; recover the axis from the symmetric part instead.
        axis_sq = np.clip((np.diag(r) - cos_t) / (1.0 - cos_t), 0.0, 1.0)
        axis = np.sqrt(axis_sq)
        i = int(np.argmax(axis))
        for j in range(3):
            if j != i:
                axis[j] = (r[i, j] + r[j, i]) / (2.0 * axis[i] * (1.0 - cos_t))
        axis /= np.linalg.norm(axis)
        if float(w @ axis) < 0.0:
            axis = -axis
        return axis * t
    return w * (t / (2.0 * math.sin(t)))


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------

def _ep_poly(theta, e1: float, e2: float, e3: float, e4: float):
    t2 = theta * theta
    return theta * t2 * (e1 + t2 * (e2 + t2 * (e3 + t2 * e4)))


def _radial_poly(theta, k1: float, k2: float, k3: float, k4: float):
    t2 = theta * theta
    return theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))))


def _radial_slope(theta, k1: float, k2: float, k3: float, k4: float):
    t2 = theta * theta
    return 1.0 + t2 * (3.0 * k1 + t2 * (5.0 * k2 + t2 * (7.0 * k3 + t2 * 9.0 * k4)))


def ep_shift(theta, ep: EntrancePupil):
    """Entrance-pupil shift E(theta) in millimetres (odd, E(0) = 0 exactly)."""
    return _ep_poly(np.asarray(theta, dtype=float) if np.ndim(theta) else float(theta),
                    ep.e1, ep.e2, ep.e3, ep.e4)


def radial_distance(theta, radial: RadialDistortion):
    """Normalized image radius r(theta); r(0) = 0 exactly."""
    return _radial_poly(np.asarray(theta, dtype=float) if np.ndim(theta) else float(theta),
                        radial.k1, radial.k2, radial.k3, radial.k4)


def radial_is_monotone(radial: RadialDistortion, theta_max: float) -> bool:
    """True when r'(theta) > 0 on a dense grid over [0, theta_max]."""
    grid = np.linspace(0.0, theta_max, _MONOTONE_GRID)
    slope = _radial_slope(grid, radial.k1, radial.k2, radial.k3, radial.k4)
    return bool((slope > 0.0).all())


def invert_radial(r: float, radial: RadialDistortion, theta_max: float) -> float:
    """Solve radial_distance(theta) = r for theta in [0, theta_max].

    Newton iteration seeded at theta = r with a bisection fallback that keeps
    the iterate bracketed; the result satisfies |r(theta) - r| < 1e-12.
    """
    if not (0.0 < theta_max < math.pi):
        raise ValueError(f"theta_max must be in (0, pi), got {theta_max}")
    if not radial_is_monotone(radial, theta_max):
        raise NonMonotoneRadialError(
            "r(theta) is not strictly increasing on [0, theta_max]; cannot invert"
        )
    r = float(r)
    r_max = _radial_poly(theta_max, radial.k1, radial.k2, radial.k3, radial.k4)
    slack = 1e-12 * max(1.0, r_max)
    if not math.isfinite(r) or r < -slack or r > r_max + slack:
        raise RadialRangeError(f"radius {r!r} outside invertible range [0, {r_max:.12g}]")
    r = min(max(r, 0.0), r_max)
    if r == 0.0:
        return 0.0
    lo, hi = 0.0, theta_max
    theta = min(r, theta_max)
    for _ in range(200):
        f = _radial_poly(theta, radial.k1, radial.k2, radial.k3, radial.k4) - r
        if abs(f) < 1e-12:
            return theta
        if f > 0.0:
            hi = theta
        else:
            lo = theta
        slope = _radial_slope(theta, radial.k1, radial.k2, radial.k3, radial.k4)
        step_ok = slope > 0.0
        if step_ok:
            candidate = theta - f / slope
            step_ok = lo < candidate < hi
        theta = candidate if step_ok else 0.5 * (lo + hi)
    raise RadialRangeError(f"radial inversion failed to converge for r={r!r}")


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def transform_world_to_camera(pose: Pose, point, z_shift=0.0) -> np.ndarray:
    """Map target point(s) (x, y, 0 + z_shift) through [R|T] into camera frame.

    The shift is applied to the world Z coordinate before the rigid
    transform; ``z_shift`` may be a scalar or one value per point.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    rot = rodrigues_to_matrix(pose.rotation)
    shift = np.broadcast_to(np.asarray(z_shift, dtype=float), pts.shape[:1])
    cam = (
        pts[:, 0, None] * rot[:, 0]
        + pts[:, 1, None] * rot[:, 1]
        + shift[:, None] * rot[:, 2]
        + pose.translation
    )
    return cam[0] if single else cam


def incidence_angle(camera_point) -> np.ndarray | float:
    """Angle between the ray to the point and the +Z camera axis, in [0, pi).

    Computed as atan2(sqrt(X^2 + Y^2), Z), which is equivalent to the
    arccos form but well conditioned near the axis. Rejects zero vectors.
    """
    pts = np.asarray(camera_point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    if bool(((rho == 0.0) & (pts[:, 2] == 0.0)).any()):
        raise ValueError("incidence angle undefined for a zero-length vector")
    theta = np.arctan2(rho, pts[:, 2])
    return float(theta[0]) if single else theta


def _resolve_theta_arrays(
    base: np.ndarray,
    rz: np.ndarray,
    e: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fixed-point resolution of theta on (B, N) stacks.

    ``base`` is the unshifted camera point (B, N, 3), ``rz`` the world-Z
    column of each rotation (B, 1, 3). Returns (theta, camera point at the
    resolved shift, converged mask). Points already satisfying the tolerance
    keep the pre-update angle, so a zero entrance pupil reproduces the SVP
    angle bit for bit after a single iteration.
    """
    theta = np.arctan2(np.hypot(base[..., 0], base[..., 1]), base[..., 2])
    if not e.any():
        return theta, base, np.ones(theta.shape, dtype=bool)
    done = np.zeros(theta.shape, dtype=bool)
    for _ in range(max_iter):
        shift = _ep_poly(theta, e[0], e[1], e[2], e[3])
        cam = base + shift[..., None] * rz
        theta_next = np.arctan2(np.hypot(cam[..., 0], cam[..., 1]), cam[..., 2])
        conv = np.abs(theta_next - theta) < tol
        theta = np.where(done | conv, theta, theta_next)
        done |= conv
        if done.all():
            break
    shift = _ep_poly(theta, e[0], e[1], e[2], e[3])
    cam = base + shift[..., None] * rz
    return theta, cam, done


def resolve_theta_nsvp(
    pose: Pose,
    point,
    ep: EntrancePupil,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> np.ndarray | float:
    """Incidence angle under the entrance-pupil model.

    Fixed-point iteration theta_{k+1} = angle(transform(pose, point,
    E(theta_k))), seeded from the unshifted transform; returns theta_k once
    |theta_{k+1} - theta_k| < tol. The returned angle is the one to use for
    both E(theta) and r(theta) downstream.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    rot = rodrigues_to_matrix(pose.rotation)
    base = (
        pts[:, 0, None] * rot[:, 0] + pts[:, 1, None] * rot[:, 1] + pose.translation
    )[None]
    theta, _, done = _resolve_theta_arrays(
        base, rot[:, 2][None, None, :], ep.as_array(), tol, max_iter
    )
    if not done.all():
        bad = int(np.argmin(done[0]))
        raise FixedPointError(
            f"entrance-pupil angle iteration did not converge within {max_iter} "
            f"iterations (point index {bad})"
        )
    return float(theta[0, 0]) if single else theta[0]


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def _project_batch(
    intr: tuple[float, float, float, float, float],
    k: np.ndarray,
    e: np.ndarray,
    rotations: np.ndarray,
    translations: np.ndarray,
    pts: np.ndarray,
    kind: ModelKind,
    theta_max: float,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Project N target points through B poses in one vectorized pass.

    Returns (pixels (B, N, 2), theta (B, N), z_cam (B, N), converged (B, N),
    ok (B, N)); no exceptions are raised for invalid points, they are simply
    flagged. This is the kernel behind every public projection entry point
    and the optimizer's residual evaluation.
    """
    fx, fy, sk, u0, v0 = intr
    x = pts[:, 0]
    y = pts[:, 1]
    base = (
        rotations[:, None, :, 0] * x[None, :, None]
        + rotations[:, None, :, 1] * y[None, :, None]
        + translations[:, None, :]
    )
    if kind is ModelKind.NSVP:
        theta, cam, converged = _resolve_theta_arrays(
            base, rotations[:, None, :, 2], e, tol, max_iter
        )
    else:
        theta = np.arctan2(np.hypot(base[..., 0], base[..., 1]), base[..., 2])
        cam = base
        converged = np.ones(theta.shape, dtype=bool)
    phi = np.arctan2(cam[..., 1], cam[..., 0])
    r = _radial_poly(theta, k[0], k[1], k[2], k[3])
    xr = r * np.cos(phi)
    yr = r * np.sin(phi)
    pix = np.stack([fx * xr + sk * yr + u0, fy * yr + v0], axis=-1)
    z_cam = cam[..., 2]
    degenerate = (theta == 0.0) & (z_cam == 0.0)
    ok = converged & ~degenerate & (theta <= theta_max)
    return pix, theta, z_cam, converged, ok


def _model_arrays(model: CameraModel):
    i = model.intrinsics
    return (i.fx, i.fy, i.sk, i.u0, i.v0), model.radial.as_array(), model.ep.as_array()


def try_project(model: CameraModel, pose: Pose, point) -> tuple[np.ndarray, np.ndarray]:
    """Like ``project`` but flags invalid points instead of raising.

    Returns (pixels, ok); pixel rows with ``ok`` False are numerically
    defined but meaningless.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    intr, k, e = _model_arrays(model)
    pix, _, _, _, ok = _project_batch(
        intr, k, e,
        rodrigues_to_matrix(pose.rotation)[None],
        np.asarray(pose.translation)[None],
        pts, model.kind, model.theta_max,
    )
    if single:
        return pix[0, 0], ok[0, 0]
    return pix[0], ok[0]


def try_project_views(
    model: CameraModel, poses, points
) -> tuple[np.ndarray, np.ndarray]:
    """Project the same point set through many poses: (m, N, 2) pixels + mask."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rots = rodrigues_to_matrix_many(np.stack([p.rotation for p in poses]))
    trans = np.stack([p.translation for p in poses])
    intr, k, e = _model_arrays(model)
    pix, _, _, _, ok = _project_batch(
        intr, k, e, rots, trans, pts, model.kind, model.theta_max
    )
    return pix, ok


def project(model: CameraModel, pose: Pose, point) -> np.ndarray:
    """Project target point(s) to pixel coordinates.

    Pipeline: resolve theta (fixed point for NSVP, direct for SVP), camera
    point at the resolved shift, phi = atan2(Yc, Xc), image point
    (r(theta) cos phi, r(theta) sin phi), then the affine pixel map
    u = fx*x + sk*y + u0, v = fy*y + v0.

    Raises OutOfFovError / BehindCameraError / FixedPointError for points
    without a valid pixel.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    intr, k, e = _model_arrays(model)
    pix, theta, z_cam, converged, ok = _project_batch(
        intr, k, e,
        rodrigues_to_matrix(pose.rotation)[None],
        np.asarray(pose.translation)[None],
        pts, model.kind, model.theta_max,
    )
    if not ok.all():
        i = int(np.argmin(ok[0]))
        if theta[0, i] == 0.0 and z_cam[0, i] == 0.0:
            raise BehindCameraError(f"point {i}: coincides with the projection center")
        if not converged[0, i]:
            # The iteration has no meaning for points behind the camera;
            # report those as such rather than as a solver failure.
            base_z = float(transform_world_to_camera(pose, pts[i])[2])
            if base_z <= 0.0:
                raise BehindCameraError(
                    f"point {i}: behind the camera (unshifted Zc = {base_z:.4g})"
                )
            raise FixedPointError(
                f"point {i}: entrance-pupil angle iteration did not converge"
            )
        if z_cam[0, i] <= 0.0:
            raise BehindCameraError(
                f"point {i}: behind the camera (theta={theta[0, i]:.4f} rad "
                f"> theta_max={model.theta_max:.4f})"
            )
        raise OutOfFovError(
            f"point {i}: theta={theta[0, i]:.4f} rad exceeds theta_max="
            f"{model.theta_max:.4f}"
        )
    return pix[0, 0] if single else pix[0]


def unproject(model: CameraModel, pixel) -> UnprojectResult:
    """Invert the projection pipeline for pixel(s) -> unit ray(s) + theta.

    Undoes the affine map, recovers (r, phi), inverts the radial polynomial,
    and returns the ray (sin t cos p, sin t sin p, cos t) together with the
    axial ray-origin offset E(theta) (zero for SVP models). Requires a
    strictly increasing radial polynomial and r within its invertible range.
    """
    if not model.radial_monotone:
        raise NonMonotoneRadialError(
            "model's radial polynomial is not invertible up to theta_max"
        )
    px = np.asarray(pixel, dtype=float)
    single = px.ndim == 1
    px = np.atleast_2d(px)
    i = model.intrinsics
    yr = (px[:, 1] - i.v0) / i.fy
    xr = (px[:, 0] - i.u0 - i.sk * yr) / i.fx
    r = np.hypot(xr, yr)
    phi = np.arctan2(yr, xr)
    theta = np.array([invert_radial(ri, model.radial, model.theta_max) for ri in r])
    sin_t = np.sin(theta)
    ray = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), np.cos(theta)], axis=-1)
    offset = _ep_poly(theta, *model.ep.as_array())
    if single:
        return UnprojectResult(ray[0], float(theta[0]), float(offset[0]))
    return UnprojectResult(ray, theta, offset)
