"""Spectra, edge-current states and bound certificates for fibered one-edge quantum Hall operators."""

from .certificates import Certificate, certify, report_json, summary_table
from .errors import (
    CoverageInsufficient,
    CrossTermRisk,
    EdgeCurrentError,
    EmptyWindow,
    HypothesisViolation,
    InvalidArgument,
    MonotonicityViolation,
    NumericalFailure,
    SimplicityViolation,
    StabilityFailure,
    TruncationFailure,
    UnsupportedFamily,
    UnsupportedPerturbation,
)
from .model import FieldConfig, PotentialSpec, check_hypotheses, make_problem
from .numerics import Grid, build_grid, integrate, lowest_eigenpairs
from .spectra import (
    DispersionTable,
    Window,
    check_disjointness,
    dirichlet_ladder,
    invert_dispersion,
    scan_dispersion,
    solve_fiber,
)
from .states import (
    WavePacket,
    b_scaling_study,
    current_expectation_direct,
    current_expectation_slope,
    evolve,
    localization_mass,
    make_wavepacket,
)

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "CoverageInsufficient",
    "CrossTermRisk",
    "DispersionTable",
    "EdgeCurrentError",
    "EmptyWindow",
    "FieldConfig",
    "Grid",
    "HypothesisViolation",
    "InvalidArgument",
    "MonotonicityViolation",
    "NumericalFailure",
    "PotentialSpec",
    "SimplicityViolation",
    "StabilityFailure",
    "TruncationFailure",
    "UnsupportedFamily",
    "UnsupportedPerturbation",
    "WavePacket",
    "Window",
    "b_scaling_study",
    "build_grid",
    "certify",
    "check_disjointness",
    "check_hypotheses",
    "current_expectation_direct",
    "current_expectation_slope",
    "dirichlet_ladder",
    "evolve",
    "integrate",
    "invert_dispersion",
    "localization_mass",
    "lowest_eigenpairs",
    "make_problem",
    "make_wavepacket",
    "report_json",
    "scan_dispersion",
    "solve_fiber",
    "summary_table",
]
