"""Histogram-based second-order gradient boosting for tabular classification."""

from .binning import BinnedMatrix, bin_matrix, build_bins
from .config import TrainConfig
from .grow import NodeHistograms, SplitCandidate, build_node_histograms, find_best_split
from .model import (
    BoostedModel,
    feature_importance,
    load_model,
    logistic_grad_hess,
    predict_contributions,
    predict_margin,
    predict_proba,
    save_model,
    train,
)
from .tree import Tree

__all__ = [
    "BinnedMatrix",
    "BoostedModel",
    "NodeHistograms",
    "SplitCandidate",
    "Tree",
    "TrainConfig",
    "bin_matrix",
    "build_bins",
    "build_node_histograms",
    "feature_importance",
    "find_best_split",
    "load_model",
    "logistic_grad_hess",
    "predict_contributions",
    "predict_margin",
    "predict_proba",
    "save_model",
    "train",
]
