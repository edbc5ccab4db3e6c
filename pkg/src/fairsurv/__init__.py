"""Fairness-aware survival analysis toolkit.

Trains fairness-penalized survival forests on right-censored,
group-annotated data and audits any risk model with censorship-aware
fairness metrics (concordance imparity, fair calibration) plus the
floor/ceiling imparity outcomes under extreme censorship resolutions.
"""

__version__ = "0.1.0"

from .bounds import (
    BoundsReport,
    ConfusionTensor,
    GroupCells,
    bounds_report,
    build_tensor,
    ceiling_ci,
    ci_from_tensor,
    classify_subscenario,
    floor_ci,
)
from .data import (
    Dataset,
    FeatureSpec,
    GroupSpec,
    Individual,
    SchemaConfig,
    SynthConfig,
    generate_synthetic,
    load_csv,
    read_schema_config,
    split_k_fold,
    write_csv,
)
from .errors import (
    ConfigError,
    DegenerateStatisticError,
    FairsurvError,
    ModelFormatError,
    ParseError,
    SchemaError,
)
from .estimators import (
    LogRankResult,
    SurvivalCurve,
    chi_square_sf,
    curve_convert,
    kaplan_meier,
    log_rank,
    nelson_aalen,
)
from .evaluation import EvalReport, brier_score, c_index, evaluate, time_dependent_auc
from .fairness import (
    CalibrationReport,
    ScoredCohort,
    concordance_fraction,
    concordance_imparity,
    fair_calibration,
    fairness_report,
    permissible_pairs,
)
from .forest import ForestConfig, SurvivalForest, train_forest
