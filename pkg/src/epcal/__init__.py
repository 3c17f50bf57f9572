"""Fisheye camera calibration with an entrance-pupil aware projection model.

``epcal`` implements two planar-target calibration models behind one
optimizer: the classic single-viewpoint (SVP) polynomial fisheye model and a
non-single-viewpoint (NSVP) extension in which the effective viewpoint slides
along the optical axis as a function of the incidence angle. The package
covers the full loop: synthetic ground-truth dataset generation, initial
estimation, Levenberg-Marquardt bundle adjustment, evaluation, stable file
formats, and a CLI.
"""

from .data import (
    CalibrationDataset,
    GroundTruth,
    TargetSpec,
    ViewObservations,
    generate_target,
)
from .initialization import (
    InitialEstimate,
    InitializationError,
    estimate_homography,
    init_distortion,
    init_focal,
    init_pose_from_homography,
    init_principal_point,
    initial_estimate,
)
from .model import (
    DEFAULT_THETA_MAX,
    BehindCameraError,
    CameraIntrinsics,
    CameraModel,
    EntrancePupil,
    FixedPointError,
    InvalidRotationError,
    ModelKind,
    NonMonotoneRadialError,
    OutOfFovError,
    Pose,
    ProjectionError,
    RadialDistortion,
    RadialRangeError,
    UnprojectResult,
    ep_shift,
    incidence_angle,
    invert_radial,
    matrix_to_rodrigues,
    project,
    radial_distance,
    radial_is_monotone,
    resolve_theta_nsvp,
    rodrigues_to_matrix,
    rodrigues_to_matrix_many,
    transform_world_to_camera,
    try_project,
    try_project_views,
    unproject,
)
from .optim import (
    FALLBACK_RESIDUAL,
    N_GLOBAL,
    PARAM_LABELS,
    CalibrationResult,
    SolveOptions,
    SolverError,
    compute_statistics,
    lm_solve,
    n_parameters,
    numeric_jacobian,
    pack_parameters,
    residual_vector,
    svp_parameter_mask,
    unpack_parameters,
)
from .synth import (
    REFERENCE_EP,
    REFERENCE_RADIAL,
    STABILITY_GROUPS,
    PoseGenerationError,
    StabilityResult,
    SynthConfig,
    generate_poses,
    monte_carlo_stability,
    render_dataset,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
