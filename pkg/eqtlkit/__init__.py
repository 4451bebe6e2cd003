__version__ = "0.1.1"

from .DataSet import DataSet, HoldoutSet, MissingnessPattern
from .ModelFit import DegenerateCovarianceError, DimensionMismatchError, ModelFit
from .SolverOutcome import NonConvergenceError, SolverOutcome
from .config import PenaltyConfig, SolverConfig
from .estep import EStepStats, build_estep_stats, conditional_moments
from .likelihood import observed_nll, penalized_objective
from .glasso import GlassoProblem, PrecisionEstimate, UnboundedProblemError, solve_glasso
from .beta_step import BetaProblem, accelerated_prox_grad, solve_beta, sparse_group_prox
from .ecm import EcmTrace, fit_covmt, impute, predict, prediction_intervals
from .metrics import MetricReport, R2Result, evaluate, ld_adjusted_tpr, model_size
from .tuning import CVResult, GridSearchResult, TuningGrid, grid_search, kfold_cv
from .WeightSetArchive import WeightSetArchive
