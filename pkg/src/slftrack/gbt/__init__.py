from .model import (BoostedModel, Leaf, Split, Tree, TrainParams, TreeNode, dump, dumps, load, loads,
                    predict)
from .trainer import (ColumnIndex, GradHess, SplitCandidate, find_best_split, fit_tree, grad_hess, leaf_weight,
                      split_gain, train)

__all__ = [
    "BoostedModel", "ColumnIndex", "GradHess", "Leaf", "Split", "SplitCandidate", "Tree", "TrainParams",
    "TreeNode", "dump", "dumps", "find_best_split", "fit_tree", "grad_hess", "leaf_weight", "load", "loads",
    "predict", "split_gain", "train",
]
