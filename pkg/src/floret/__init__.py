"""Multiplicative staged-tree ("floret") models for sequential designs."""

from floret.asymptotics import (
    CovarianceResult,
    asymptotic_covariance,
    ata_matrix,
    covariance_p,
    covariance_theta,
    jacobian,
    standard_errors,
)
from floret.design import (
    DesignMatrix,
    ParameterVector,
    build_design_matrix,
    degrees_of_freedom,
    floret_has_overall_effect,
    leaf_probabilities,
)
from floret.errors import BoundaryError, EstimationError, FloretError, ModelError
from floret.estimation import (
    ExposureStats,
    FitResult,
    ObservedCounts,
    check_proportionality,
    exposure_statistics,
    fit_mle,
    log_likelihood,
    sufficient_statistics,
)
from floret.gof import GofSummary, chisq_upper_tail, deviance_g2, goodness_of_fit, pearson_x2
from floret.simulate import (
    MonteCarloReport,
    SimulationConfig,
    run_monte_carlo,
    sample_multinomial,
    sample_path,
)
from floret.tree import Floret, SequentialTree, load_model, parse_model, validate_tree

__version__ = "0.1.0"
