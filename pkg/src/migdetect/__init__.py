"""Matrix-information-geometry detectors for radar targets in nonhomogeneous
clutter, with learned Stiefel projections of HPD matrices."""

__version__ = "0.1.0"

from .detector import AMFDetector, MIGDetector, amf_statistic, mig_statistic
from .exceptions import (
    DegenerateInputError,
    DomainError,
    MIGError,
    NumericError,
    ParseError,
    ValidationError,
)
from .geometry import MEASURES, GeometricMeasure, sq_dist
from .means import MeanConfig, geometric_mean, variance
from .observation import build_hpd_observation, steering
from .projection import LearnerConfig, ManifoldProjection, learn_projection
from .scenario import ClutterScenario, Interference, clutter_cov, gen_training

__all__ = [
    "__version__",
    "AMFDetector",
    "MIGDetector",
    "amf_statistic",
    "mig_statistic",
    "MIGError",
    "ValidationError",
    "DomainError",
    "DegenerateInputError",
    "ParseError",
    "NumericError",
    "GeometricMeasure",
    "MEASURES",
    "sq_dist",
    "MeanConfig",
    "geometric_mean",
    "variance",
    "steering",
    "build_hpd_observation",
    "LearnerConfig",
    "ManifoldProjection",
    "learn_projection",
    "ClutterScenario",
    "Interference",
    "clutter_cov",
    "gen_training",
]
