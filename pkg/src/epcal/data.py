"""Calibration dataset containers: planar target geometry plus per-view observations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import CameraModel, Pose


@dataclass(frozen=True)
class TargetSpec:
    """Planar grid of rows x cols features spaced ``spacing`` millimetres apart."""

    rows: int
    cols: int
    spacing: float

    def __post_init__(self) -> None:
        if self.rows < 2 or self.cols < 2:
            raise ValueError(f"target needs at least 2x2 features, got {self.rows}x{self.cols}")
        if not (self.spacing > 0.0 and np.isfinite(self.spacing)):
            raise ValueError(f"spacing must be positive and finite, got {self.spacing}")

    @property
    def n_points(self) -> int:
        return self.rows * self.cols


def generate_target(spec: TargetSpec) -> np.ndarray:
    """Target feature coordinates, row-major and centered on the origin.

    Columns advance along x, rows along y; the target plane carries Z = 0
    implicitly. Returns an (rows*cols, 2) array in millimetres.
    """
    cx = (spec.cols - 1) / 2.0
    cy = (spec.rows - 1) / 2.0
    pts = np.empty((spec.n_points, 2))
    i = 0
    for row in range(spec.rows):
        for col in range(spec.cols):
            pts[i, 0] = (col - cx) * spec.spacing
            pts[i, 1] = (row - cy) * spec.spacing
            i += 1
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True, eq=False)
class ViewObservations:
    """Observed pixels of one view, matched to target features by index."""

    pose_id: int
    target_indices: np.ndarray
    pixels: np.ndarray

    def __post_init__(self) -> None:
        idx = np.array(self.target_indices, dtype=np.int64).reshape(-1)
        px = np.array(self.pixels, dtype=float).reshape(-1, 2)
        if idx.shape[0] != px.shape[0]:
            raise ValueError(
                f"pose {self.pose_id}: {idx.shape[0]} indices vs {px.shape[0]} pixels"
            )
        if idx.shape[0] == 0:
            raise ValueError(f"pose {self.pose_id}: view has no observations")
        uniq, counts = np.unique(idx, return_counts=True)
        if uniq.shape[0] != idx.shape[0]:
            dup = int(uniq[counts > 1][0])
            raise ValueError(f"pose {self.pose_id}: duplicate target_index {dup}")
        if not np.isfinite(px).all():
            raise ValueError(f"pose {self.pose_id}: non-finite pixel coordinate")
        idx.setflags(write=False)
        px.setflags(write=False)
        object.__setattr__(self, "target_indices", idx)
        object.__setattr__(self, "pixels", px)

    @property
    def n_points(self) -> int:
        return int(self.target_indices.shape[0])


@dataclass(frozen=True)
class GroundTruth:
    """Generating model and poses carried alongside synthetic datasets."""

    model: CameraModel
    poses: tuple[Pose, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "poses", tuple(self.poses))


@dataclass(frozen=True, eq=False)
class CalibrationDataset:
    """Everything a calibration run consumes: target, image size, observations."""

    image_size: tuple[int, int]
    target: TargetSpec
    views: tuple[ViewObservations, ...]
    ground_truth: GroundTruth | None = None
    target_points: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError(f"image size must be positive, got {self.image_size}")
        object.__setattr__(self, "image_size", (int(w), int(h)))
        object.__setattr__(self, "views", tuple(self.views))
        if not self.views:
            raise ValueError("dataset has no views")
        n = self.target.n_points
        for view in self.views:
            lo = int(view.target_indices.min())
            hi = int(view.target_indices.max())
            if lo < 0 or hi >= n:
                bad = lo if lo < 0 else hi
                raise ValueError(
                    f"pose {view.pose_id}: target_index {bad} out of range [0, {n})"
                )
        object.__setattr__(self, "target_points", generate_target(self.target))

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_observations(self) -> int:
        return sum(v.n_points for v in self.views)
