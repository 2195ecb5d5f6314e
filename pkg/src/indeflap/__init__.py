"""Spectra of the sign-changing interface Laplacian on rectangles of constant-curvature surfaces."""

from .geometry import (Contrast, HomothetyResult, InvalidSpecError, MetricDomainError,
                       ProblemSpec, contrast, homothety_scale, metric_factor, validate_spec)
from .rootfinder import EigenvalueRecord, enumerate_modes
from .spectrum_assembly import SpectrumTable, detect_zero_mode, spectrum_2d

__all__ = [
    "Contrast", "EigenvalueRecord", "HomothetyResult", "InvalidSpecError", "MetricDomainError",
    "ProblemSpec", "SpectrumTable", "contrast", "detect_zero_mode", "enumerate_modes",
    "homothety_scale", "metric_factor", "spectrum_2d", "validate_spec",
]

__version__ = "0.1.0"
