"""Weighted Doppler transforms of covector fields along curve families on a disk.

Submodules: ``geometry`` (curve families, tracing, the inflow fan),
``fields`` (grids, fields, the solenoidal split), ``weights`` (weights and
the elliptic check), ``transform`` (transform, adjoint, normal operator,
principal symbol), ``reconstruct`` (spectra, reconstruction, perturbation
studies), ``estimators`` (scikit-learn style wrappers) and ``cli``.
"""

from .estimators import DopplerTransform, PairReconstructor, SolenoidalDecomposition
from .exceptions import (
    ConfigError,
    CurveNotMaximal,
    Degenerate,
    DopplerError,
    NoConvergence,
    NonTermination,
    NotMeasurePreserving,
    StepFailure,
    TooLarge,
    ZeroWeight,
)
from .fields import CovectorField, Grid, Pair, ScalarField, SolenoidalProjector, solenoidal_decompose
from .geometry import Domain, TraceConfig, conformal_geodesic, magnetic, make_fan, straight_line, trace_curve
from .reconstruct import perturbation_study, reconstruct, spectral_analysis, stability_constant
from .transform import adjoint, assemble_dense, forward, normal, pair_forward, principal_symbol, symbol_sweep
from .weights import Weight, elliptic_margin

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CovectorField",
    "CurveNotMaximal",
    "Degenerate",
    "Domain",
    "DopplerError",
    "DopplerTransform",
    "Grid",
    "NoConvergence",
    "NonTermination",
    "NotMeasurePreserving",
    "Pair",
    "PairReconstructor",
    "ScalarField",
    "SolenoidalDecomposition",
    "SolenoidalProjector",
    "StepFailure",
    "TooLarge",
    "TraceConfig",
    "Weight",
    "ZeroWeight",
    "adjoint",
    "assemble_dense",
    "conformal_geodesic",
    "elliptic_margin",
    "forward",
    "magnetic",
    "make_fan",
    "normal",
    "pair_forward",
    "perturbation_study",
    "principal_symbol",
    "reconstruct",
    "solenoidal_decompose",
    "spectral_analysis",
    "stability_constant",
    "straight_line",
    "symbol_sweep",
    "trace_curve",
]
