from .booster import (
    INTERVAL_QUANTILES,
    BinMapper,
    FeatureSchema,
    GradHess,
    IntervalModel,
    QuantileForest,
    Split,
    TrainParams,
    Tree,
    best_split,
    build_histograms,
    grow_tree_leafwise,
    leaf_weight,
    pinball_grad,
    pinball_loss,
    predict,
    train,
    train_interval,
)

__all__ = [
    "INTERVAL_QUANTILES",
    "BinMapper",
    "FeatureSchema",
    "GradHess",
    "IntervalModel",
    "QuantileForest",
    "Split",
    "TrainParams",
    "Tree",
    "best_split",
    "build_histograms",
    "grow_tree_leafwise",
    "leaf_weight",
    "pinball_grad",
    "pinball_loss",
    "predict",
    "train",
    "train_interval",
]
