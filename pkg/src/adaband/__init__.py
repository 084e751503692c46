"""Wavelet-based adaptive confidence bands for densities on [0, 1]."""

from .bands import (
    BandConstants,
    BandResult,
    GridS,
    build_grid,
    chi_square_distance,
    grid_band,
    testing_risk,
    two_class_band,
)
from .estimation import empirical_coeffs, lepski_estimator, linear_estimator, rate, sigma
from .holder import HolderBall, coefficient_separation, holder_norm, project_to_ball
from .models import DensityModel, draw, make_bump, make_two_bump, sample_prior, uniform
from .wavelets import CoeffTree, GridFunction, WaveletBasis, analyze, build_basis, evaluate, synthesize

__all__ = [
    "BandConstants", "BandResult", "CoeffTree", "DensityModel", "GridFunction", "GridS",
    "HolderBall", "WaveletBasis", "analyze", "build_basis", "build_grid", "chi_square_distance",
    "coefficient_separation", "draw", "empirical_coeffs", "evaluate", "grid_band", "holder_norm",
    "lepski_estimator", "linear_estimator", "make_bump", "make_two_bump", "project_to_ball",
    "rate", "sample_prior", "sigma", "synthesize", "testing_risk", "two_class_band", "uniform",
]
