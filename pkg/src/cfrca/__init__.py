"""Counterfactual root cause analysis on multivariate event-count time series."""

from .dcbn import Dcbn, Discretizer, Query, fit_cpts, fit_discretizer, predict_failure_prob, query_prob
from .diagnosis import DiagnosisReport, counterfactual, detect_poif, diagnose, rank_paths, recourse_sweep
from .discovery import discover, fisher_z_test, lag_augment, lilliefors_test, pc_stable
from .errors import EventParseError, NumericError, ValidationError
from .events import CountPanel, count_transform, parse_event_log, relevance_filter, window_to_failure
from .graph import LaggedDag, Node, shd
from .simulator import SimConfig, generate_dataset, ground_truth_graph

__version__ = "0.1.0"

__all__ = [
    "CountPanel",
    "Dcbn",
    "DiagnosisReport",
    "Discretizer",
    "EventParseError",
    "LaggedDag",
    "Node",
    "NumericError",
    "Query",
    "SimConfig",
    "ValidationError",
    "count_transform",
    "counterfactual",
    "detect_poif",
    "diagnose",
    "discover",
    "fisher_z_test",
    "fit_cpts",
    "fit_discretizer",
    "generate_dataset",
    "ground_truth_graph",
    "lag_augment",
    "lilliefors_test",
    "parse_event_log",
    "pc_stable",
    "predict_failure_prob",
    "query_prob",
    "rank_paths",
    "recourse_sweep",
    "relevance_filter",
    "shd",
    "window_to_failure",
]
