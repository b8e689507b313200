"""Nonparametric tests for the number of modes of circular data.

The package provides the wrapped-normal kernel estimate and its critical
concentration, the excess-mass statistic, a bootstrap calibration density,
two bootstrap mode tests, a simulation harness over 25 reference models,
and a spatial false-discovery-rate pipeline for gridded seasonal events.
"""

__version__ = "0.1.0"

from .calibration import CalibrationDensity, build_calibration, sample_calibration
from .circular import (Angle, CircularSample, KdeModel, TurningPointSet, find_turning_points,
                       kde_cdf, kde_deriv, kde_eval, wrapped_distance)
from .concentration import (CriticalConcentration, VonMisesMixture, count_modes,
                            critical_concentration, curvature_ratios, fit_vm_mixture,
                            plugin_concentration)
from .estimators import CircularKDE, ExcessMassModeTest, VonMisesMixtureModel, WatsonModeTest
from .exceptions import (CircModeError, CollidingNeighborhoods, DegenerateDensity, EmptyInput,
                         EmptyRaster, FitFailure, InvalidK, NotAttainable,
                         QuadratureFailure, SpanMismatch, TooLarge, ZeroDensity)
from .excess_mass import (ArcFamily, ExcessMassResult, brute_force_delta, delta_statistic,
                          excess_mass_at, excess_mass_difference, lambda_candidates)
from .models import MODELS, MixtureModel, PrimitiveModel, get_model, model_density, model_sample
from .modetest import TestResult, excess_mass_test, watson_test, watson_u2_statistic
from .study import StudyTable, run_study

__all__ = [
    "Angle", "ArcFamily", "CalibrationDensity", "CircModeError", "CircularKDE",
    "CircularSample", "CollidingNeighborhoods", "CriticalConcentration", "DegenerateDensity",
    "EmptyInput", "EmptyRaster", "ExcessMassModeTest", "ExcessMassResult", "FitFailure",
    "InvalidK", "KdeModel", "MODELS", "MixtureModel", "NotAttainable", "PrimitiveModel",
    "QuadratureFailure", "SpanMismatch", "StudyTable", "TestResult", "TooLarge",
    "TurningPointSet", "VonMisesMixture", "VonMisesMixtureModel", "WatsonModeTest",
    "ZeroDensity", "brute_force_delta", "build_calibration", "count_modes",
    "critical_concentration", "curvature_ratios", "delta_statistic", "excess_mass_at",
    "excess_mass_difference", "excess_mass_test", "find_turning_points", "fit_vm_mixture",
    "get_model", "kde_cdf", "kde_deriv", "kde_eval", "lambda_candidates", "model_density",
    "model_sample", "plugin_concentration", "run_study", "sample_calibration",
    "watson_test", "watson_u2_statistic", "wrapped_distance",
]
