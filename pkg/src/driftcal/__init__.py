"""Online calibration of prediction intervals under distribution shift.

The package tracks a target miscoverage level through a stream of
conformity scores (or realized coverage levels directly), either with a
single step-size recursion or with a weighted bank of them, and ships the
evaluation harness used to judge the result: synthetic stream generators,
rolling volatility and regression forecasters, coverage metrics, and exact
evaluators for the finite-sample guarantees.
"""

from .aci import AciState, aci_step, run_aci
from .conformal import (
    PredictionInterval,
    ScoreWindow,
    TargetLevel,
    compute_beta,
    empirical_quantile,
    interval_from_quantile,
    pinball_loss,
    pinball_subgradient,
    set_membership,
)
from .faci import (
    DEFAULT_GAMMA_GRID,
    DEFAULT_INTERVAL_LENGTH,
    EnsembleState,
    EtaSchedule,
    ExpertState,
    dynamic_eta,
    faci_step_averaged,
    faci_step_randomized,
    fixed_eta_heuristic,
    pinball_second_moment,
)
from .garch import (
    GarchFit,
    GarchParams,
    garch_fit,
    garch_nll,
    garch_simulate,
    garch_variance_path,
    rolling_volatility_forecasts,
    volatility_scores,
)
from .metrics import BinStat, CoverageReport, compute_metrics, conditional_coverage, local_coverage
from .regression import OlsModel, panel_score, rolling_ols_fit
from .rng import make_rng
from .runner import (
    ALGORITHMS,
    ConfigError,
    ExperimentConfig,
    StepRecord,
    StepTable,
    run_experiment,
    run_panel,
)
from .streams import (
    BetaStream,
    PanelData,
    ScoreStream,
    SegmentSpec,
    SeriesStream,
    generate_beta_stream,
    synthetic_panel,
)
from .theory import (
    RegretBoundInputs,
    dynamic_regret_bound,
    empirical_dynamic_regret,
    long_term_coverage_bound,
    path_length,
    pinball_gap,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ALGORITHMS",
    "AciState",
    "BetaStream",
    "BinStat",
    "ConfigError",
    "CoverageReport",
    "DEFAULT_GAMMA_GRID",
    "DEFAULT_INTERVAL_LENGTH",
    "EnsembleState",
    "EtaSchedule",
    "ExperimentConfig",
    "ExpertState",
    "GarchFit",
    "GarchParams",
    "OlsModel",
    "PanelData",
    "PredictionInterval",
    "RegretBoundInputs",
    "ScoreStream",
    "ScoreWindow",
    "SegmentSpec",
    "SeriesStream",
    "StepRecord",
    "StepTable",
    "TargetLevel",
    "aci_step",
    "compute_beta",
    "compute_metrics",
    "conditional_coverage",
    "dynamic_eta",
    "dynamic_regret_bound",
    "empirical_dynamic_regret",
    "empirical_quantile",
    "faci_step_averaged",
    "faci_step_randomized",
    "fixed_eta_heuristic",
    "garch_fit",
    "garch_nll",
    "garch_simulate",
    "garch_variance_path",
    "generate_beta_stream",
    "interval_from_quantile",
    "local_coverage",
    "long_term_coverage_bound",
    "make_rng",
    "panel_score",
    "path_length",
    "pinball_gap",
    "pinball_loss",
    "pinball_second_moment",
    "pinball_subgradient",
    "rolling_ols_fit",
    "rolling_volatility_forecasts",
    "run_aci",
    "run_experiment",
    "run_panel",
    "set_membership",
    "synthetic_panel",
    "volatility_scores",
]
