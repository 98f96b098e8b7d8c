"""Minimum-distance estimation for ergodic SDEs driven by fractional Brownian motion."""

from .cf_distance import (
    CFConfig,
    EmpiricalMeasure,
    cf_distance_sq_mc,
    cf_distance_sq_quadrature,
    empirical_cf,
    gaussian_cf,
    normalizing_constant,
    sample_gp,
    wasserstein_1d,
)
from .estimator import (
    EstimationProblem,
    EulerConfig,
    SGDConfig,
    SGDTrace,
    contrast_value,
    estimate_1d,
    estimate_sgd,
    estimate_simulated,
    sgd_gradient_sample,
)
from .fbm import fbm_from_normals, sample_fbm
from .fou_analytic import (
    OUParams,
    QuadratureSpec,
    StationaryGaussian,
    augmented_cov,
    grad_augmented_cov,
    identifiability_margin,
    injectivity_map,
    stationary_autocov,
    stationary_variance,
)
from .rng import RngStream
from .sde_sim import (
    AugmentedPath,
    DriftModel,
    ThetaBox,
    ThetaVector,
    augment,
    euler_simulate,
    ou_drift,
    perturbed_ou_drift,
    subsample,
)

__version__ = "0.1.0"
