"""Bundle adjustment: joint refinement of camera parameters and per-view poses.

The objective is the stacked reprojection residual (observed - predicted,
pixels) over every observation of every view, minimized with a classic
Levenberg-Marquardt loop: solve (J^T J + lambda diag(J^T J)) d = -J^T r,
accept a step only when the cost strictly decreases, scale lambda by 10
either way.

Parameter vector layout (length 13 + 6m for m views)::

    [fx, fy, sk, u0, v0, k1..k4, e1..e4,
     rot_0 (3), trans_0 (3), ..., rot_{m-1} (3), trans_{m-1} (3)]

Derivatives are central finite differences. The Jacobian is evaluated
block-aware: a pose parameter only touches its own view's residuals, so its
column is computed from that view alone; the resulting matrix is bit-identical
to the naive definition (other views' entries are exactly zero) but an order
of magnitude cheaper.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CalibrationDataset
from .model import (
    DEFAULT_THETA_MAX,
    CameraIntrinsics,
    CameraModel,
    EntrancePupil,
    ModelKind,
    Pose,
    RadialDistortion,
    _project_batch,
    rodrigues_to_matrix_many,
)

PARAM_LABELS = (
    "fx", "fy", "sk", "u0", "v0",
    "k1", "k2", "k3", "k4",
    "e1", "e2", "e3", "e4",
)
N_GLOBAL = len(PARAM_LABELS)

# Residual assigned to both components of an observation whose point fails to
# project at the current parameters; constant, so its finite difference is
# zero and LM survives bad transients instead of aborting.
FALLBACK_RESIDUAL = 1e4


class SolverError(RuntimeError):
    """Raised when the solve cannot proceed (non-finite cost, singular system)."""


def n_parameters(n_views: int) -> int:
    return N_GLOBAL + 6 * n_views


def pose_parameter_slice(view_index: int) -> slice:
    start = N_GLOBAL + 6 * view_index
    return slice(start, start + 6)


def pack_parameters(model: CameraModel, poses) -> np.ndarray:
    """Flatten a camera model and pose list into the optimization vector."""
    params = np.empty(n_parameters(len(poses)))
    i = model.intrinsics
    params[0:5] = (i.fx, i.fy, i.sk, i.u0, i.v0)
    params[5:9] = model.radial.as_array()
    params[9:13] = model.ep.as_array()
    for j, pose in enumerate(poses):
        s = pose_parameter_slice(j)
        params[s.start:s.start + 3] = pose.rotation
        params[s.start + 3:s.stop] = pose.translation
    return params


def unpack_parameters(
    params: np.ndarray,
    kind: ModelKind = ModelKind.NSVP,
    theta_max: float = DEFAULT_THETA_MAX,
) -> tuple[CameraModel, tuple[Pose, ...]]:
    """Inverse of ``pack_parameters``; pack(unpack(p)) == p."""
    params = np.asarray(params, dtype=float)
    if (params.size - N_GLOBAL) % 6 != 0 or params.size < N_GLOBAL + 6:
        raise ValueError(f"parameter vector length {params.size} does not match layout")
    model = CameraModel(
        CameraIntrinsics(*params[0:5]),
        RadialDistortion(*params[5:9]),
        EntrancePupil(*params[9:13]),
        kind,
        theta_max,
    )
    pose_block = params[N_GLOBAL:].reshape(-1, 6)
    poses = tuple(Pose(row[:3], row[3:]) for row in pose_block)
    return model, poses


@dataclass
class SolveOptions:
    """Levenberg-Marquardt knobs; defaults suit datasets of this scale."""

    max_iterations: int = 100
    cost_tolerance: float = 1e-12
    param_tolerance: float = 1e-10
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    damping_max: float = 1e12
    fixed: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.cost_tolerance <= 0 or self.param_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if not (self.damping_up > 1.0 and 0.0 < self.damping_down < 1.0):
            raise ValueError("damping factors must satisfy up > 1 and 0 < down < 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Refined model, poses, and residual statistics of one solve."""

    model: CameraModel
    poses: tuple[Pose, ...]
    rms_px: float
    std_px: float
    cost_trace: np.ndarray
    iterations: int
    converged: bool
    reason: str


@dataclass(eq=False)
class _Prepared:
    """Dataset flattened for vectorized residual evaluation."""

    uv: np.ndarray            # (K, 2) observed pixels
    pose_idx: np.ndarray      # (K,) view of each observation
    target_idx: np.ndarray    # (K,) target feature of each observation
    view_slices: list[slice]  # observation range of each view
    target_points: np.ndarray
    n_views: int
    n_residuals: int = field(init=False)

    def __post_init__(self) -> None:
        self.n_residuals = 2 * self.uv.shape[0]


def _prepare(dataset: CalibrationDataset) -> _Prepared:
    uv = np.concatenate([v.pixels for v in dataset.views])
    target_idx = np.concatenate([v.target_indices for v in dataset.views])
    pose_idx = np.concatenate(
        [np.full(v.n_points, j, dtype=np.int64) for j, v in enumerate(dataset.views)]
    )
    slices = []
    start = 0
    for v in dataset.views:
        slices.append(slice(start, start + v.n_points))
        start += v.n_points
    return _Prepared(uv, pose_idx, target_idx, slices, dataset.target_points,
                     dataset.n_views)


def _eval_residual(
    params: np.ndarray,
    prep: _Prepared,
    kind: ModelKind,
    theta_max: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Residual vector (2K,) plus the per-observation validity mask (K,)."""
    pose_block = params[N_GLOBAL:].reshape(prep.n_views, 6)
    rots = rodrigues_to_matrix_many(pose_block[:, :3])
    pix, _, _, _, ok = _project_batch(
        tuple(params[0:5]), params[5:9], params[9:13],
        rots, pose_block[:, 3:], prep.target_points, kind, theta_max,
    )
    pred = pix[prep.pose_idx, prep.target_idx]
    valid = ok[prep.pose_idx, prep.target_idx]
    res = prep.uv - pred
    res[~valid] = FALLBACK_RESIDUAL
    return res.reshape(-1), valid


def _check_length(params: np.ndarray, n_views: int) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    expected = n_parameters(n_views)
    if params.size != expected:
        raise ValueError(
            f"parameter vector has length {params.size}, expected {expected} "
            f"for {n_views} views"
        )
    return params


def residual_vector(
    params: np.ndarray,
    dataset: CalibrationDataset,
    kind: ModelKind = ModelKind.NSVP,
    theta_max: float = DEFAULT_THETA_MAX,
) -> np.ndarray:
    """Stacked reprojection residuals, view-major, point-minor, (du, dv) pairs.

    The sign convention is observed minus predicted. Observations whose point
    fails to project contribute ``FALLBACK_RESIDUAL`` in both components.
    """
    params = _check_length(params, dataset.n_views)
    res, _ = _eval_residual(params, _prepare(dataset), kind, theta_max)
    return res


def _fd_step(value: float) -> float:
    return max(1e-6, 1e-7 * abs(value))


def _jacobian(
    params: np.ndarray,
    prep: _Prepared,
    kind: ModelKind,
    theta_max: float,
    columns: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Central-difference Jacobian of the residual for the requested columns.

    Returns (J, base residual, base validity). Entries whose base point or
    either probe fails to project are zeroed, matching the constant fallback
    residual's zero derivative.
    """
    base_res, base_valid = _eval_residual(params, prep, kind, theta_max)
    jac = np.zeros((prep.n_residuals, params.size))
    base_bad_rows = np.repeat(~base_valid, 2)

    for c in (c for c in columns if c < N_GLOBAL):
        h = _fd_step(params[c])
        plus = params.copy()
        plus[c] += h
        minus = params.copy()
        minus[c] -= h
        res_p, ok_p = _eval_residual(plus, prep, kind, theta_max)
        res_m, ok_m = _eval_residual(minus, prep, kind, theta_max)
        col = (res_p - res_m) / (2.0 * h)
        col[np.repeat(~(ok_p & ok_m), 2) | base_bad_rows] = 0.0
        jac[:, c] = col

    pose_cols = [c for c in columns if c >= N_GLOBAL]
    if pose_cols:
        pose_block = params[N_GLOBAL:].reshape(prep.n_views, 6)
        probes = np.empty((2 * len(pose_cols), 6))
        views = np.empty(len(pose_cols), dtype=np.int64)
        steps = np.empty(len(pose_cols))
        for b, c in enumerate(pose_cols):
            j, q = divmod(c - N_GLOBAL, 6)
            h = _fd_step(params[c])
            views[b] = j
            steps[b] = h
            probes[2 * b] = pose_block[j]
            probes[2 * b, q] += h
            probes[2 * b + 1] = pose_block[j]
            probes[2 * b + 1, q] -= h
        pix, _, _, _, ok = _project_batch(
            tuple(params[0:5]), params[5:9], params[9:13],
            rodrigues_to_matrix_many(probes[:, :3]), probes[:, 3:],
            prep.target_points, kind, theta_max,
        )
        for b, c in enumerate(pose_cols):
            j = views[b]
            sl = prep.view_slices[j]
            idx = prep.target_idx[sl]
            pred_p = pix[2 * b, idx]
            pred_m = pix[2 * b + 1, idx]
            block = (pred_m - pred_p) / (2.0 * steps[b])
            bad = ~(ok[2 * b, idx] & ok[2 * b + 1, idx] & base_valid[sl])
            block[bad] = 0.0
            jac[2 * sl.start:2 * sl.stop, c] = block.reshape(-1)

    return jac, base_res, base_valid


def numeric_jacobian(
    params: np.ndarray,
    dataset: CalibrationDataset,
    kind: ModelKind = ModelKind.NSVP,
    theta_max: float = DEFAULT_THETA_MAX,
) -> np.ndarray:
    """Central-difference Jacobian of ``residual_vector`` w.r.t. every parameter.

    Per-parameter step h = max(1e-6, 1e-7 |p|); column j is
    (res(p + h e_j) - res(p - h e_j)) / (2h). Columns coupling a pose to
    another view's residuals are exactly zero.
    """
    params = _check_length(params, dataset.n_views)
    jac, _, _ = _jacobian(
        params, _prepare(dataset), kind, theta_max, np.arange(params.size)
    )
    return jac


def compute_statistics(residuals: np.ndarray) -> tuple[float, float]:
    """(rms_px, std_px) of a stacked residual vector.

    ``rms_px`` is the root mean square over residual components (the usual
    reprojection RMS: for pure noise of sigma per coordinate it approaches
    sigma); ``std_px`` is the standard deviation of the per-point Euclidean
    residual norms.
    """
    res = np.asarray(residuals, dtype=float).reshape(-1)
    if res.size == 0:
        raise ValueError("cannot compute statistics of an empty residual vector")
    rms = float(np.sqrt(np.mean(res * res)))
    norms = np.hypot(res[0::2], res[1::2])
    return rms, float(norms.std())


def lm_solve(
    model0: CameraModel,
    poses0,
    dataset: CalibrationDataset,
    options: SolveOptions | None = None,
) -> CalibrationResult:
    """Levenberg-Marquardt refinement of all free parameters.

    The model kind and theta_max of ``model0`` are carried through unchanged;
    the entrance-pupil fixed point runs inside every residual evaluation, so
    each iteration re-corrects the world points. Masked parameters
    (``options.fixed``) are excluded from the normal equations and returned
    bit-identical.
    """
    opts = options or SolveOptions()
    if len(poses0) != dataset.n_views:
        raise ValueError(
            f"got {len(poses0)} initial poses for {dataset.n_views} dataset views"
        )
    params = pack_parameters(model0, poses0)
    kind, theta_max = model0.kind, model0.theta_max
    prep = _prepare(dataset)

    free = np.ones(params.size, dtype=bool)
    if opts.fixed is not None:
        fixed = np.asarray(opts.fixed, dtype=bool)
        if fixed.shape != params.shape:
            raise ValueError(
                f"fixed mask has shape {fixed.shape}, expected {params.shape}"
            )
        free = ~fixed
    if kind is ModelKind.SVP:
        # An SVP projection never reads the entrance pupil, so its columns
        # would be identically zero; keep them fixed regardless of the mask.
        free[9:13] = False
    free_idx = np.flatnonzero(free)
    if free_idx.size == 0:
        raise ValueError("all parameters are masked; nothing to optimize")

    res, _ = _eval_residual(params, prep, kind, theta_max)
    with np.errstate(over="ignore"):
        cost = float(res @ res)
    if not np.isfinite(cost):
        raise SolverError("initial parameters produce a non-finite cost")

    trace = [cost]
    lam = opts.initial_damping
    converged = False
    reason = "max_iterations"
    iterations = 0

    for iterations in range(1, opts.max_iterations + 1):
        if cost == 0.0:
            iterations -= 1
            converged = True
            reason = "zero_cost"
            break
        jac, res, _ = _jacobian(params, prep, kind, theta_max, free_idx)
        jf = jac[:, free_idx]
        jtj = jf.T @ jf
        grad = jf.T @ res
        diag = np.diag(jtj).copy()
        # A transiently uninformative parameter (e.g. a view whose points all
        # fail to project) would zero its diagonal and leave the damped system
        # singular at any lambda; unit damping keeps it harmlessly in place.
        diag[diag == 0.0] = 1.0

        accepted = False
        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.isfinite(step).all():
                candidate = params.copy()
                candidate[free_idx] += step
                res_new, _ = _eval_residual(candidate, prep, kind, theta_max)
                with np.errstate(over="ignore"):
                    cost_new = float(res_new @ res_new)
                if np.isfinite(cost_new) and cost_new < cost:
                    accepted = True
                    break
            lam *= opts.damping_up
            if lam > opts.damping_max:
                break
        if not accepted:
            if step is None:
                raise SolverError(
                    "normal equations remained singular after damping escalation"
                )
            reason = "damping_overflow"
            break

        params = candidate
        res = res_new
        previous_cost, cost = cost, cost_new
        trace.append(cost)
        lam = max(lam * opts.damping_down, 1e-32)

        if cost == 0.0 or previous_cost - cost <= opts.cost_tolerance * previous_cost:
            converged = True
            reason = "zero_cost" if cost == 0.0 else "cost_tolerance"
            break
        step_norm = float(np.linalg.norm(step))
        scale = float(np.linalg.norm(params[free_idx]))
        if step_norm <= opts.param_tolerance * (scale + opts.param_tolerance):
            converged = True
            reason = "param_tolerance"
            break

    rms, std = compute_statistics(res)
    model, poses = unpack_parameters(params, kind, theta_max)
    return CalibrationResult(
        model=model,
        poses=poses,
        rms_px=rms,
        std_px=std,
        cost_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        reason=reason,
    )


def svp_parameter_mask(n_views: int) -> np.ndarray:
    """Mask holding the entrance-pupil coefficients fixed (at zero) for SVP fits."""
    mask = np.zeros(n_parameters(n_views), dtype=bool)
    mask[9:13] = True
    return mask
