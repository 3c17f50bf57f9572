"""Stable on-disk formats for datasets, camera models, and reports.

Both file kinds are JSON with a ``schema_version`` gate. Floats are written
with Python's shortest round-trip representation, so save -> load reproduces
every double bit-exactly. Writers go through a temp-file-and-rename so a
failure never leaves a partial file behind.

Dataset file::

    {"schema_version": 1,
     "image_size": [W, H],
     "target": {"rows": R, "cols": C, "spacing": S},
     "observations": [
        {"pose_id": 0,
         "points": [{"target_index": 0, "pixel": [u, v]}, ...]},
        ...],
     "ground_truth": {"model": {...}, "poses": [...]}}        # optional

Model file::

    {"schema_version": 1,
     "kind": "SVP" | "NSVP",
     "intrinsics": {"fx":, "fy":, "sk":, "u0":, "v0":},
     "radial": {"k1":, "k2":, "k3":, "k4":},
     "ep": {"e1":, "e2":, "e3":, "e4":},
     "theta_max_deg": ...,
     "poses": [{"rotation": [3], "translation": [3]}, ...],
     "stats": {"rms_px":, "std_px":, "iterations":, "converged":}}

Angles inside pose rotation vectors are radians; ``theta_max_deg`` is degrees
for readability.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from io import StringIO
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .data import CalibrationDataset, GroundTruth, TargetSpec, ViewObservations
from .model import (
    CameraIntrinsics,
    CameraModel,
    EntrancePupil,
    ModelKind,
    Pose,
    RadialDistortion,
)
from .optim import CalibrationResult
from .synth import STABILITY_GROUPS, StabilityResult

SCHEMA_VERSION = 1

REPORT_ROWS = (
    "fx", "fy", "sk", "u0", "v0",
    "e1", "e2", "e3", "e4",
    "k1", "k2", "k3", "k4",
    "error", "std",
)


class DataFileError(Exception):
    """Base class for file-format failures; message carries the path."""

    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")
        self.path = str(path)
        self.reason = message


class ParseError(DataFileError):
    """The file is not well-formed JSON."""


class SchemaError(DataFileError):
    """The file's schema version is missing or unsupported."""


class ValidationError(DataFileError):
    """The file parsed but violates the format's invariants."""


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partials."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_json(path) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON at line {exc.lineno} column {exc.colno}: "
                               f"{exc.msg}") from exc


def _check_schema(doc: Any, path) -> dict:
    if not isinstance(doc, dict):
        raise ValidationError(path, f"top level must be an object, got {type(doc).__name__}")
    version = doc.get("schema_version")
    if version is None:
        raise SchemaError(path, "missing schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(path, f"unsupported schema_version {version!r} "
                                f"(supported: {SCHEMA_VERSION})")
    return doc


def _get(mapping: Any, key: str, ctx: str, path) -> Any:
    if not isinstance(mapping, dict):
        raise ValidationError(path, f"{ctx} must be an object")
    if key not in mapping:
        raise ValidationError(path, f"{ctx} is missing field '{key}'")
    return mapping[key]


def _as_float(value: Any, ctx: str, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"{ctx} must be a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ValidationError(path, f"{ctx} must be finite, got {value!r}")
    return v


def _as_int(value: Any, ctx: str, path) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, f"{ctx} must be an integer, got {value!r}")
    return value


def _as_vec(value: Any, length: int, ctx: str, path) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise ValidationError(path, f"{ctx} must be a list of {length} numbers, got {value!r}")
    return [_as_float(v, f"{ctx}[{i}]", path) for i, v in enumerate(value)]


# ---------------------------------------------------------------------------
# Camera model blocks (shared by model files and ground-truth dataset blocks)
# ---------------------------------------------------------------------------

def _model_to_dict(model: CameraModel) -> dict:
    i, r, e = model.intrinsics, model.radial, model.ep
    return {
        "kind": model.kind.value,
        "intrinsics": {"fx": i.fx, "fy": i.fy, "sk": i.sk, "u0": i.u0, "v0": i.v0},
        "radial": {"k1": r.k1, "k2": r.k2, "k3": r.k3, "k4": r.k4},
        "ep": {"e1": e.e1, "e2": e.e2, "e3": e.e3, "e4": e.e4},
        "theta_max_deg": math.degrees(model.theta_max),
    }


def _model_from_dict(doc: Any, ctx: str, path) -> CameraModel:
    kind_raw = _get(doc, "kind", ctx, path)
    try:
        kind = ModelKind(kind_raw)
    except ValueError:
        raise ValidationError(path, f"{ctx}.kind must be 'SVP' or 'NSVP', got {kind_raw!r}") \
            from None
    intr = _get(doc, "intrinsics", ctx, path)
    rad = _get(doc, "radial", ctx, path)
    ep = _get(doc, "ep", ctx, path)
    theta_max_deg = _as_float(_get(doc, "theta_max_deg", ctx, path), f"{ctx}.theta_max_deg", path)
    try:
        return CameraModel(
            CameraIntrinsics(*(
                _as_float(_get(intr, k, f"{ctx}.intrinsics", path), f"{ctx}.intrinsics.{k}", path)
                for k in ("fx", "fy", "sk", "u0", "v0")
            )),
            RadialDistortion(*(
                _as_float(_get(rad, k, f"{ctx}.radial", path), f"{ctx}.radial.{k}", path)
                for k in ("k1", "k2", "k3", "k4")
            )),
            EntrancePupil(*(
                _as_float(_get(ep, k, f"{ctx}.ep", path), f"{ctx}.ep.{k}", path)
                for k in ("e1", "e2", "e3", "e4")
            )),
            kind,
            math.radians(theta_max_deg),
        )
    except ValueError as exc:
        raise ValidationError(path, f"{ctx}: {exc}") from exc


def _pose_to_dict(pose: Pose) -> dict:
    return {
        "rotation": [float(v) for v in pose.rotation],
        "translation": [float(v) for v in pose.translation],
    }


def _pose_from_dict(doc: Any, ctx: str, path) -> Pose:
    return Pose(
        _as_vec(_get(doc, "rotation", ctx, path), 3, f"{ctx}.rotation", path),
        _as_vec(_get(doc, "translation", ctx, path), 3, f"{ctx}.translation", path),
    )


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

def save_dataset(dataset: CalibrationDataset, path) -> None:
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "image_size": [int(dataset.image_size[0]), int(dataset.image_size[1])],
        "target": {
            "rows": int(dataset.target.rows),
            "cols": int(dataset.target.cols),
            "spacing": float(dataset.target.spacing),
        },
        "observations": [
            {
                "pose_id": int(view.pose_id),
                "points": [
                    {"target_index": int(i), "pixel": [float(u), float(v)]}
                    for i, (u, v) in zip(view.target_indices, view.pixels)
                ],
            }
            for view in dataset.views
        ],
    }
    if dataset.ground_truth is not None:
        doc["ground_truth"] = {
            "model": _model_to_dict(dataset.ground_truth.model),
            "poses": [_pose_to_dict(p) for p in dataset.ground_truth.poses],
        }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def load_dataset(path) -> CalibrationDataset:
    doc = _check_schema(_load_json(path), path)
    w, h = _as_vec(_get(doc, "image_size", "file", path), 2, "image_size", path)
    target_doc = _get(doc, "target", "file", path)
    try:
        target = TargetSpec(
            _as_int(_get(target_doc, "rows", "target", path), "target.rows", path),
            _as_int(_get(target_doc, "cols", "target", path), "target.cols", path),
            _as_float(_get(target_doc, "spacing", "target", path), "target.spacing", path),
        )
    except ValueError as exc:
        raise ValidationError(path, f"target: {exc}") from exc
    obs_doc = _get(doc, "observations", "file", path)
    if not isinstance(obs_doc, list) or not obs_doc:
        raise ValidationError(path, "observations must be a non-empty list")
    views = []
    for entry in obs_doc:
        pose_id = _as_int(_get(entry, "pose_id", "observation", path), "pose_id", path)
        ctx = f"pose {pose_id}"
        points = _get(entry, "points", ctx, path)
        if not isinstance(points, list) or not points:
            raise ValidationError(path, f"{ctx}: points must be a non-empty list")
        indices = []
        pixels = []
        for rec in points:
            idx = _as_int(_get(rec, "target_index", ctx, path), f"{ctx}: target_index", path)
            if not 0 <= idx < target.n_points:
                raise ValidationError(
                    path, f"{ctx}: target_index {idx} out of range [0, {target.n_points})"
                )
            indices.append(idx)
            pixels.append(_as_vec(_get(rec, "pixel", ctx, path), 2,
                                  f"{ctx}: pixel of target_index {idx}", path))
        try:
            views.append(ViewObservations(pose_id, np.array(indices), np.array(pixels)))
        except ValueError as exc:
            raise ValidationError(path, str(exc)) from exc
    ground_truth = None
    if "ground_truth" in doc:
        gt_doc = doc["ground_truth"]
        model = _model_from_dict(_get(gt_doc, "model", "ground_truth", path),
                                 "ground_truth.model", path)
        poses_doc = _get(gt_doc, "poses", "ground_truth", path)
        if not isinstance(poses_doc, list):
            raise ValidationError(path, "ground_truth.poses must be a list")
        poses = tuple(
            _pose_from_dict(p, f"ground_truth.poses[{i}]", path)
            for i, p in enumerate(poses_doc)
        )
        ground_truth = GroundTruth(model, poses)
    try:
        return CalibrationDataset((int(w), int(h)), target, tuple(views), ground_truth)
    except ValueError as exc:
        raise ValidationError(path, str(exc)) from exc


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunStats:
    rms_px: float
    std_px: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class ModelFile:
    """On-disk unit: a camera model, its per-view poses, and fit statistics."""

    model: CameraModel
    poses: tuple[Pose, ...]
    stats: RunStats

    def __post_init__(self) -> None:
        object.__setattr__(self, "poses", tuple(self.poses))

    @classmethod
    def from_result(cls, result: CalibrationResult) -> "ModelFile":
        return cls(
            model=result.model,
            poses=result.poses,
            stats=RunStats(result.rms_px, result.std_px, result.iterations,
                           result.converged),
        )


def save_model(model_file: ModelFile, path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        **_model_to_dict(model_file.model),
        "poses": [_pose_to_dict(p) for p in model_file.poses],
        "stats": {
            "rms_px": model_file.stats.rms_px,
            "std_px": model_file.stats.std_px,
            "iterations": model_file.stats.iterations,
            "converged": model_file.stats.converged,
        },
    }
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def load_model(path) -> ModelFile:
    doc = _check_schema(_load_json(path), path)
    model = _model_from_dict(doc, "model", path)
    poses_doc = _get(doc, "poses", "file", path)
    if not isinstance(poses_doc, list):
        raise ValidationError(path, "poses must be a list")
    poses = tuple(_pose_from_dict(p, f"poses[{i}]", path) for i, p in enumerate(poses_doc))
    stats_doc = _get(doc, "stats", "file", path)
    converged = _get(stats_doc, "converged", "stats", path)
    if not isinstance(converged, bool):
        raise ValidationError(path, f"stats.converged must be a boolean, got {converged!r}")
    stats = RunStats(
        _as_float(_get(stats_doc, "rms_px", "stats", path), "stats.rms_px", path),
        _as_float(_get(stats_doc, "std_px", "stats", path), "stats.std_px", path),
        _as_int(_get(stats_doc, "iterations", "stats", path), "stats.iterations", path),
        converged,
    )
    return ModelFile(model, poses, stats)


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return format(float(value), ".10g")


def write_report(results: Sequence[CalibrationResult], labels: Sequence[str], path) -> None:
    """Side-by-side parameter table, one column per labeled run.

    Rows: fx, fy, sk, u0, v0, e1..e4, k1..k4, error (rms_px), std (std_px).
    SVP runs leave the entrance-pupil cells empty.
    """
    if not results or len(results) != len(labels):
        raise ValueError("need one label per result and at least one result")
    columns = []
    for result in results:
        i, r, e = result.model.intrinsics, result.model.radial, result.model.ep
        svp = result.model.kind is ModelKind.SVP
        values = {
            "fx": _fmt(i.fx), "fy": _fmt(i.fy), "sk": _fmt(i.sk),
            "u0": _fmt(i.u0), "v0": _fmt(i.v0),
            "e1": "" if svp else _fmt(e.e1), "e2": "" if svp else _fmt(e.e2),
            "e3": "" if svp else _fmt(e.e3), "e4": "" if svp else _fmt(e.e4),
            "k1": _fmt(r.k1), "k2": _fmt(r.k2), "k3": _fmt(r.k3), "k4": _fmt(r.k4),
            "error": _fmt(result.rms_px), "std": _fmt(result.std_px),
        }
        columns.append(values)
    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["parameter", *labels])
    for row in REPORT_ROWS:
        writer.writerow([row, *(col[row] for col in columns)])
    atomic_write_text(path, buf.getvalue())


def write_stability_report(results: Sequence[StabilityResult], path) -> None:
    """Grouped parameter-scatter table, one column per model kind.

    Rows: the five parameter groups (focal pair, skew, principal point,
    entrance-pupil group, radial group), then trial bookkeeping.
    """
    if not results:
        raise ValueError("need at least one stability result")
    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["group", *(r.kind.value for r in results)])
    for name, _ in STABILITY_GROUPS:
        writer.writerow([name, *(_fmt(r.group_std[name]) for r in results)])
    writer.writerow(["trials_used", *(r.trials_used for r in results)])
    writer.writerow(["trials_excluded", *(r.trials_excluded for r in results)])
    atomic_write_text(path, buf.getvalue())
