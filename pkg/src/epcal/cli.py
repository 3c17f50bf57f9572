"""Command-line interface: synth, calibrate, evaluate, stability, undistort-points.

Exit codes: 0 success, 1 usage / IO / validation failure, 2 numerical
non-convergence (a calibrate run that stops without meeting its tolerances
still writes its model file, flagged ``converged: false``).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from io import StringIO
from typing import Sequence

import numpy as np

from .data import TargetSpec
from .initialization import InitializationError, init_focal, initial_estimate
from .io import (
    DataFileError,
    ModelFile,
    RunStats,
    atomic_write_text,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from .model import (
    CameraIntrinsics,
    CameraModel,
    EntrancePupil,
    ModelKind,
    NonMonotoneRadialError,
    Pose,
    RadialDistortion,
    RadialRangeError,
    unproject,
)
from .optim import (
    SolverError,
    SolveOptions,
    compute_statistics,
    lm_solve,
    n_parameters,
    pack_parameters,
    residual_vector,
    svp_parameter_mask,
)
from .synth import (
    REFERENCE_EP,
    REFERENCE_RADIAL,
    PoseGenerationError,
    SynthConfig,
    monte_carlo_stability,
    render_dataset,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def _coeffs(text: str) -> tuple[float, float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected 4 comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _kind(text: str) -> ModelKind:
    try:
        return ModelKind(text.strip().upper())
    except ValueError:
        raise argparse.ArgumentTypeError(f"kind must be 'svp' or 'nsvp', got {text!r}") from None


def _kinds(text: str) -> list[ModelKind]:
    return [_kind(p) for p in text.split(",") if p.strip()]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epcal",
        description="Fisheye calibration with an entrance-pupil aware camera model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic ground-truth dataset")
    p.add_argument("--output", required=True, help="dataset file to write")
    p.add_argument("--gt-output", required=True, help="ground-truth model file to write")
    p.add_argument("--poses", type=int, default=25)
    p.add_argument("--rows", type=int, default=7)
    p.add_argument("--cols", type=int, default=11)
    p.add_argument("--spacing", type=float, default=10.0, help="feature pitch in mm")
    p.add_argument("--dist-min", type=float, default=100.0, help="nearest working distance, mm")
    p.add_argument("--dist-max", type=float, default=150.0, help="farthest working distance, mm")
    p.add_argument("--noise", type=float, default=0.0, help="pixel noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fov", type=float, default=195.0, help="field of view, degrees")
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--height", type=int, default=2048)
    p.add_argument("--ep", type=_coeffs, default=REFERENCE_EP.as_array(),
                   metavar="e1,e2,e3,e4", help="ground-truth entrance-pupil coefficients")
    p.add_argument("--k", type=_coeffs, default=REFERENCE_RADIAL.as_array(),
                   metavar="k1,k2,k3,k4", help="ground-truth radial coefficients")
    p.add_argument("--max-tilt", type=float, default=30.0, help="max target tilt, degrees")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="fit a model to a dataset")
    p.add_argument("--input", required=True, help="dataset file")
    p.add_argument("--output", required=True, help="model file to write")
    p.add_argument("--kind", type=_kind, default=ModelKind.NSVP)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-12, help="relative cost tolerance")
    p.add_argument("--report", default=None, help="CSV report path (figures land beside it)")
    p.add_argument("--theta-max", type=float, default=97.5,
                   help="maximum incidence angle, degrees")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="reprojection statistics of a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--reestimate-poses", action="store_true",
                   help="re-fit per-view poses with intrinsics frozen")
    p.add_argument("--csv", default=None, help="optional per-view CSV output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stability", help="Monte-Carlo parameter-stability study")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--kinds", type=_kinds, default=[ModelKind.SVP, ModelKind.NSVP])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="grouped-std CSV to write")
    p.add_argument("--poses", type=int, default=25)
    p.add_argument("--ep", type=_coeffs, default=REFERENCE_EP.as_array(),
                   metavar="e1,e2,e3,e4", help="ground-truth entrance-pupil coefficients")
    p.add_argument("--k", type=_coeffs, default=REFERENCE_RADIAL.as_array(),
                   metavar="k1,k2,k3,k4", help="ground-truth radial coefficients")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("undistort-points", help="pixels -> unit rays through a model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True,
                   help="text file, one 'u v' (or 'u,v') pixel pair per line")
    p.add_argument("--output", required=True, help="CSV of rays to write")
    p.set_defaults(func=cmd_undistort_points)

    return parser


def _synth_model(fov: float, width: int, height: int, k, ep) -> CameraModel:
    f = init_focal(fov, width)
    radial = RadialDistortion(*k)
    pupil = EntrancePupil(*ep)
    kind = ModelKind.SVP if pupil.is_zero() else ModelKind.NSVP
    return CameraModel(
        CameraIntrinsics(f, f, 0.0, width / 2.0, height / 2.0),
        radial, pupil, kind, math.radians(fov) / 2.0,
    )


def cmd_synth(args) -> int:
    model = _synth_model(args.fov, args.width, args.height, args.k, args.ep)
    config = SynthConfig(
        model=model,
        target=TargetSpec(args.rows, args.cols, args.spacing),
        n_poses=args.poses,
        dist_min=args.dist_min,
        dist_max=args.dist_max,
        max_tilt_deg=args.max_tilt,
        noise_px=args.noise,
        seed=args.seed,
        image_size=(args.width, args.height),
    )
    dataset = render_dataset(config)
    save_dataset(dataset, args.output)

    params = pack_parameters(model, dataset.ground_truth.poses)
    res = residual_vector(params, dataset, model.kind, model.theta_max)
    rms, std = compute_statistics(res)
    save_model(
        ModelFile(model, dataset.ground_truth.poses, RunStats(rms, std, 0, True)),
        args.gt_output,
    )
    total = dataset.n_observations
    rate = total / (config.n_poses * config.target.n_points)
    print(f"wrote {args.output}: {dataset.n_views} poses, {total} observations "
          f"(visibility {rate:.1%}), noise sigma {args.noise} px")
    print(f"wrote {args.gt_output}: ground truth, residual rms {rms:.6g} px")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    dataset = load_dataset(args.input)
    theta_max = math.radians(args.theta_max)
    estimate = initial_estimate(dataset, theta_max=theta_max)
    model0 = CameraModel(estimate.intrinsics, estimate.radial, estimate.ep,
                         args.kind, theta_max)
    options = SolveOptions(max_iterations=args.max_iters, cost_tolerance=args.tol)
    if args.kind is ModelKind.SVP:
        options.fixed = svp_parameter_mask(dataset.n_views)
    result = lm_solve(model0, estimate.poses, dataset, options)
    save_model(ModelFile.from_result(result), args.output)
    if args.report:
        from .report import render_calibration_report

        written = render_calibration_report([result], [args.kind.value], dataset,
                                            args.report)
        print("report: " + ", ".join(str(p) for p in written))
    status = "converged" if result.converged else f"did not converge ({result.reason})"
    print(f"{args.kind.value} fit {status}: rms {result.rms_px:.6g} px, "
          f"std {result.std_px:.6g} px, {result.iterations} iterations")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _reestimated_poses(model_file: ModelFile, dataset) -> tuple[Pose, ...]:
    from .initialization import init_pose_from_homography

    model = model_file.model
    poses = tuple(
        init_pose_from_homography(
            dataset.target_points[view.target_indices], view.pixels,
            model.intrinsics, model.radial,
        )
        for view in dataset.views
    )
    mask = np.zeros(n_parameters(dataset.n_views), dtype=bool)
    mask[:13] = True
    result = lm_solve(model, poses, dataset, SolveOptions(fixed=mask))
    return result.poses


def cmd_evaluate(args) -> int:
    model_file = load_model(args.model)
    dataset = load_dataset(args.input)
    if len(model_file.poses) != dataset.n_views and not args.reestimate_poses:
        print(f"error: model has {len(model_file.poses)} poses but dataset has "
              f"{dataset.n_views} views (pass --reestimate-poses to re-fit them)",
              file=sys.stderr)
        return EXIT_ERROR
    if args.reestimate_poses:
        poses = _reestimated_poses(model_file, dataset)
    else:
        poses = model_file.poses
    model = model_file.model
    params = pack_parameters(model, poses)
    res = residual_vector(params, dataset, model.kind, model.theta_max)
    rms, std = compute_statistics(res)
    print(f"rms {rms:.6g} px, std {std:.6g} px over {dataset.n_observations} observations")
    rows = []
    start = 0
    for view in dataset.views:
        stop = start + 2 * view.n_points
        view_rms, _ = compute_statistics(res[start:stop])
        rows.append((view.pose_id, view.n_points, view_rms))
        print(f"  pose {view.pose_id}: {view.n_points} points, rms {view_rms:.6g} px")
        start = stop
    if args.csv:
        buf = StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pose_id", "points", "rms_px"])
        for pose_id, n, view_rms in rows:
            writer.writerow([pose_id, n, format(view_rms, ".10g")])
        atomic_write_text(args.csv, buf.getvalue())
    return EXIT_OK


def cmd_stability(args) -> int:
    model = _synth_model(195.0, 2048, 2048, args.k, args.ep)
    config = SynthConfig(
        model=model,
        target=TargetSpec(7, 11, 10.0),
        n_poses=args.poses,
        noise_px=args.noise,
        seed=args.seed,
    )
    results = monte_carlo_stability(config, args.trials, args.kinds)
    from .report import render_stability_report

    written = render_stability_report(results, args.output)
    for r in results:
        print(f"{r.kind.value}: {r.trials_used}/{r.trials_requested} trials used, "
              f"{r.trials_excluded} excluded")
    print("report: " + ", ".join(str(p) for p in written))
    if any(r.trials_used < 2 for r in results):
        print("error: too few usable trials for statistics", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_undistort_points(args) -> int:
    model_file = load_model(args.model)
    model = model_file.model
    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["line", "u", "v", "x", "y", "z", "theta_rad", "z_offset_mm"])
    warnings = 0
    with open(args.input) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.replace(",", " ").split()
            try:
                if len(parts) != 2:
                    raise ValueError(f"expected 2 values, got {len(parts)}")
                u, v = float(parts[0]), float(parts[1])
            except ValueError as exc:
                print(f"line {lineno}: cannot parse {text!r}: {exc}", file=sys.stderr)
                warnings += 1
                continue
            try:
                ray, theta, offset = unproject(model, (u, v))
            except (RadialRangeError, NonMonotoneRadialError) as exc:
                print(f"line {lineno}: {exc}", file=sys.stderr)
                warnings += 1
                continue
            writer.writerow([lineno, format(u, ".10g"), format(v, ".10g"),
                             *(format(c, ".17g") for c in ray),
                             format(theta, ".17g"), format(offset, ".17g")])
    atomic_write_text(args.output, buf.getvalue())
    if warnings:
        print(f"{warnings} line(s) skipped (see warnings)", file=sys.stderr)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except (PoseGenerationError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (DataFileError, InitializationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
