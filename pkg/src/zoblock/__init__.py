"""Randomized block zeroth-order optimization over product sets."""
from .errors import AnalysisError, ConfigurationError, DiagnosticUnavailable, NumericalError
from .geometry import Ball, BlockStructure, Box, FeasibleSet, Free, Halfspace, Simplex, project_block, project_product
from .oracle import (
    GradientEstimate,
    StochasticOracle,
    minibatch_block_gradient,
    smoothed_gradient_reference,
    smoothed_value_estimate,
    zo_gradient_block_sample,
    zo_gradient_sample,
)
from .problems import make_problem, verify_constants
from .residual import ResidualReport, check_residual_inequality, residual, residual_tilde
from .sampling import RngStreams, sample_block, sample_output_index, sample_sphere
from .solver import AlmostSureMode, RateMode, SolverConfig, decompose_errors, run, step

__version__ = "0.1.0"
