"""teamshock: estimate causal effects of an external shock on remote teams
observed through collaboration event logs."""

__version__ = "0.1.0"

from .base import BaseEstimator, NotFittedError, derive_seed, rng_for
from .cohort import (FEATURE_REGISTRY, FeatureExtractor, SelectionCriteria,
                     select_teams)
from .effects import (ConformalInterval, compute_ite, conformal_interval,
                      ks_two_sample)
from .events import (ActivityClass, Event, EventType, TOKEN_TABLE,
                     classify_event, parse_event_line, scan_events)
from .heterogeneity import (bootstrap_regress, cluster_features, ols,
                            spearman_matrix, vif)
from .models import (GradientBoostedTrees, RandomForest, load_model,
                     save_model, seasonal_naive_predict)
from .pipeline import PipelineConfig, run_pipeline
from .synth import ShockSpec, SyntheticSpec, generate_synthetic
from .timeseries import (HoltForecaster, aggregate_monthly,
                         forecast_with_intervals, stl_decompose)

__all__ = [
    "BaseEstimator", "NotFittedError", "derive_seed", "rng_for",
    "FEATURE_REGISTRY", "FeatureExtractor", "SelectionCriteria",
    "select_teams",
    "ConformalInterval", "compute_ite", "conformal_interval",
    "ks_two_sample",
    "ActivityClass", "Event", "EventType", "TOKEN_TABLE", "classify_event",
    "parse_event_line", "scan_events",
    "bootstrap_regress", "cluster_features", "ols", "spearman_matrix", "vif",
    "GradientBoostedTrees", "RandomForest", "load_model", "save_model",
    "seasonal_naive_predict",
    "PipelineConfig", "run_pipeline",
    "ShockSpec", "SyntheticSpec", "generate_synthetic",
    "HoltForecaster", "aggregate_monthly", "forecast_with_intervals",
    "stl_decompose",
    "__version__",
]
