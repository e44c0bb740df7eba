from .binning import BinMapper, bin_edges
from .io import load_model, save_model
from .model import GbdtConfig, GbdtModel, Tree, feature_importance, fit, predict, split_gain

__all__ = [
    "BinMapper", "bin_edges", "GbdtConfig", "GbdtModel", "Tree",
    "fit", "predict", "feature_importance", "split_gain", "load_model", "save_model",
]
