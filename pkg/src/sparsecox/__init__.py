"""Sparse penalized Cox regression by iterative coordinate ascent."""

from importlib.resources import files

from .kkt import KKTReport, check_local_max
from .likelihood import information, log_partial_likelihood, moments, score, v_matrix
from .optimizer import (
    FitConfig,
    FitResult,
    RegularizationPath,
    default_grid,
    fit_ica,
    fit_oracle,
    fit_path,
    lambda_max,
    partial_quadratic,
    penalized_objective,
)
from .penalties import Penalty, local_concavity, penalty_deriv, penalty_value, solve_univariate
from .selection import FoldPlan, SelectionResult, cv_score, make_folds, select_lambda, sgcv_score
from .simulate import SimConfig, SimulationReport, run_experiment, strong_oracle_rate
from .survival import (
    Dataset,
    StepFunction,
    SurvivalRecord,
    breslow_baseline,
    ingest_csv,
    nelson_aalen,
)

__version__ = "0.1.0"


def toy_csv_path():
    """Path of the bundled toy data set (60 subjects, 8 covariates)."""
    return files(__package__) / "data" / "toy.csv"
