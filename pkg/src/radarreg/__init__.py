"""Probabilistic radar scan registration with credible covariances.

Estimates the planar ego-motion between two sparse radar scans by modeling
the previous scan as a Gaussian mixture (merged with an explicit outlier
mixture) and minimizing the exact joint negative log-likelihood as a robust
max-sum-mixture least-squares problem, optionally fused with per-target
Doppler velocity factors.  A Monte-Carlo simulation and evaluation harness
measures accuracy (RMSE) and covariance credibility (NEES/ANEES).
"""

from .baseline_sa import sa_objective, sa_register
from .estimator import (
    DegenerateProblemError,
    EstimatorConfig,
    assemble_problem,
    estimate_covariance,
    optimize,
    register,
)
from .geometry import (
    CartesianTarget,
    Dof,
    MotionState,
    RadarTarget,
    Scan,
    SensorMount,
    TimingInfo,
    apply_transform,
    polar_to_cartesian,
    rotate_covariance,
)
from .mixture import (
    GaussianComponent,
    MixtureModel,
    OutlierConfig,
    build_model_gmm,
    build_outlier_gmm,
    gmm_nll,
    l2_gaussian,
    merge_models,
    msm_linearize,
)

__version__ = "0.1.0"

__all__ = [
    "CartesianTarget",
    "DegenerateProblemError",
    "Dof",
    "EstimatorConfig",
    "GaussianComponent",
    "MixtureModel",
    "MotionState",
    "OutlierConfig",
    "RadarTarget",
    "Scan",
    "SensorMount",
    "TimingInfo",
    "apply_transform",
    "assemble_problem",
    "build_model_gmm",
    "build_outlier_gmm",
    "estimate_covariance",
    "gmm_nll",
    "l2_gaussian",
    "merge_models",
    "msm_linearize",
    "optimize",
    "polar_to_cartesian",
    "register",
    "rotate_covariance",
    "sa_objective",
    "sa_register",
    "__version__",
]
