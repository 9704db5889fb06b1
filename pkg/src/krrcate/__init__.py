"""Kernel ridge regression learners for conditional average treatment effects."""

from ._backend import BACKEND
from .baselines import dr_learner, kfold_cv_lambda, plugin_cate
from .cate import CateEstimator, Dataset, fit_cate, fit_nuisances, predict_cate, switch_impute
from .dgp import ScenarioSpec, generate
from .harness import PipelineConfig, default_pipeline, rate_sweep, run_experiment
from .kernels import KernelSpec, cross_gram, gram_matrix, kernel_eval, median_heuristic_length_scale
from .krr import FittedKRR, fit_masked, predict
from .selection import CandidateConfig, SelectionResult, select, split_three, truncate

__version__ = "0.1.0"
