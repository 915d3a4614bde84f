"""Adaptive transfer learning classifiers."""

__version__ = "0.1.0"

from .atl import AtlConfig, AtlModel, fit_atl, fit_pooled, split_target
from .core import (
    Constant,
    Dataset,
    DecisionTreeFunction,
    DecisionTreePartition,
    Origin,
    ParameterVector,
    PlugIn,
    SourceCalibrated,
    SplitStep,
    TargetKnn,
    leaf_of,
)
from .diagnostics import rate_bounds, risk
from .distributions import PairSpec, sample, setting1, setting2
from .neighbours import RobustnessGrid, classify, predict
from .trees import TreeSearchStrategy

__all__ = [
    "AtlConfig", "AtlModel", "Constant", "Dataset", "DecisionTreeFunction", "DecisionTreePartition",
    "Origin", "PairSpec", "ParameterVector", "PlugIn", "RobustnessGrid", "SourceCalibrated", "SplitStep",
    "TargetKnn", "TreeSearchStrategy", "classify", "fit_atl", "fit_pooled", "leaf_of", "predict",
    "rate_bounds", "risk", "sample", "setting1", "setting2", "split_target",
]
