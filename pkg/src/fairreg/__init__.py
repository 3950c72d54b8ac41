"""Fairness-aware regression with neural dependence estimators.

The package measures nonlinear dependence between a model output and a
continuous sensitive attribute (maximal correlation, chi-square
divergence, mutual information, plus kernel-density and random-feature
baselines) and trains regressors that trade accuracy against those
measures through an adversarial penalty.
"""

from .data import (
    Dataset,
    PATTERN_KINDS,
    gen_bivariate_gaussian,
    gen_pattern,
    gen_synthetic_scenario,
    load_csv,
    split,
)
from .estimators import (
    DivergenceError,
    Estimate,
    KdeConfig,
    NeuralEstimatorConfig,
    NullSummary,
    SamplePairs,
    chi2_kde,
    chi2_nn,
    default_chi2_config,
    default_hgr_config,
    default_mine_config,
    hgr_kde,
    hgr_nn,
    mine,
    null_calibration,
    pearson,
    rdc,
    witsenhausen_discrete,
)
from .metrics import (
    DominanceReport,
    EvalConfig,
    EvalReport,
    dominance_threshold,
    evaluate,
    fair_quant,
    gaussian_dominance_check,
    mse,
)
from .training import (
    FAIRNESS_MODES,
    FairTrainConfig,
    PENALTY_KINDS,
    TrainedModel,
    TrainingError,
    default_train_config,
    predict,
    select_uv,
    train_fair,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DivergenceError",
    "DominanceReport",
    "Estimate",
    "EvalConfig",
    "EvalReport",
    "FAIRNESS_MODES",
    "FairTrainConfig",
    "KdeConfig",
    "NeuralEstimatorConfig",
    "NullSummary",
    "PATTERN_KINDS",
    "PENALTY_KINDS",
    "SamplePairs",
    "TrainedModel",
    "TrainingError",
    "__version__",
    "chi2_kde",
    "chi2_nn",
    "default_chi2_config",
    "default_hgr_config",
    "default_mine_config",
    "default_train_config",
    "dominance_threshold",
    "evaluate",
    "fair_quant",
    "gaussian_dominance_check",
    "gen_bivariate_gaussian",
    "gen_pattern",
    "gen_synthetic_scenario",
    "hgr_kde",
    "hgr_nn",
    "load_csv",
    "mine",
    "mse",
    "null_calibration",
    "pearson",
    "predict",
    "rdc",
    "select_uv",
    "split",
    "train_fair",
    "witsenhausen_discrete",
]
