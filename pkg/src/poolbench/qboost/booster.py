"""Histogram gradient-boosted trees for quantile (pinball) regression."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import ConfigError, DataError
from . import _kernels as K

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
INTERVAL_QUANTILES = (0.025, 0.5, 0.975)


@dataclass(frozen=True)
class TrainParams:
    """Booster hyperparameters.

    ``leaf_output`` selects how leaf values are set once a tree's structure is
    grown: ``"renew"`` moves each leaf to the tau-quantile of its residuals
    (shrunk by H / (H + lambda)), ``"newton"`` keeps the second-order weight
    -G / (H + lambda).

    Categorical splits add ``cat_l2`` to the L2 penalty, order categories by
    G / (H + ``cat_smooth``) for the prefix scan, and treat categories with
    fewer than ``min_data_per_group`` rows at a node as one pooled group that
    always goes right. Nodes with at most ``max_cat_exhaustive`` groups are
    split by full enumeration instead of the prefix scan.
    """

    learning_rate: float = 0.05
    num_leaves: int = 64
    n_rounds: int = 500
    lambda_l2: float = 1.0
    gamma_leaf: float = 0.0
    max_bins: int = 255
    min_samples_leaf: int = 50
    quantile: float = 0.5
    leaf_output: str = "renew"
    max_cat_exhaustive: int = 8
    cat_l2: float = 10.0
    cat_smooth: float = 10.0
    min_data_per_group: int = 100

    def __post_init__(self):
        if not 0.0 < self.quantile < 1.0:
            raise ConfigError(f"quantile must lie strictly inside (0, 1), got {self.quantile}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.num_leaves < 1 or self.n_rounds < 0:
            raise ConfigError("num_leaves >= 1 and n_rounds >= 0 required")
        if self.lambda_l2 < 0 or self.gamma_leaf < 0:
            raise ConfigError("lambda_l2 and gamma_leaf must be non-negative")
        if self.max_bins < 2 or self.min_samples_leaf < 1:
            raise ConfigError("max_bins >= 2 and min_samples_leaf >= 1 required")
        if self.cat_l2 < 0 or self.cat_smooth < 0 or self.min_data_per_group < 1:
            raise ConfigError("cat_l2, cat_smooth >= 0 and min_data_per_group >= 1 required")
        if self.leaf_output not in ("renew", "newton"):
            raise ConfigError(f"unknown leaf_output {self.leaf_output!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train parameter(s): {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class FeatureSchema:
    """Per-column cardinality; 0 marks a numeric column."""

    cardinalities: tuple[int, ...]
    names: tuple[str, ...] | None = None

    @property
    def n_features(self) -> int:
        return len(self.cardinalities)

    def is_categorical(self, f: int) -> bool:
        return self.cardinalities[f] > 0

    @classmethod
    def numeric(cls, n: int) -> "FeatureSchema":
        return cls((0,) * n)

    @classmethod
    def from_design(cls, design) -> "FeatureSchema":
        return cls(tuple(design.cardinalities), tuple(design.columns))


# -- loss ------------------------------------------------------------------

def pinball_loss(y, yhat, tau: float) -> np.ndarray:
    """Elementwise (tau - 1[y < yhat]) * (y - yhat)."""
    diff = np.asarray(y, dtype=np.float64) - np.asarray(yhat, dtype=np.float64)
    return np.where(diff < 0, (tau - 1.0) * diff, tau * diff)


class GradHess(NamedTuple):
    g: np.ndarray
    h: np.ndarray


def pinball_grad(y, yhat, tau: float) -> GradHess:
    """Derivative of the pinball loss w.r.t. the prediction, with unit hessian.

    Ties (y == yhat) take the right derivative 1 - tau.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.broadcast_to(np.asarray(yhat, dtype=np.float64), y.shape)
    g = np.where(y > yhat, -tau, 1.0 - tau)
    return GradHess(g, np.ones_like(g))


# -- binning ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BinMapper:
    """Bin edges per numeric column; categorical codes are their own bins.

    Numeric bin ``b`` covers ``[edges[b], edges[b + 1])``; values below the
    first edge fall into bin 0, values at or above the last into the last bin.
    """

    edges: tuple[np.ndarray, ...]
    nbins: np.ndarray
    cards: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, schema: FeatureSchema, max_bins: int) -> "BinMapper":
        edges, nbins = [], []
        for f, card in enumerate(schema.cardinalities):
            if card > 0:
                edges.append(np.zeros(0))
                nbins.append(card)
                continue
            col = X[:, f]
            uniq = np.unique(col)
            if len(uniq) > max_bins:
                levels = np.arange(max_bins) / max_bins
                uniq = np.unique(np.quantile(col, levels, method="inverted_cdf"))
            edges.append(uniq)
            nbins.append(len(uniq))
        return cls(tuple(edges), np.array(nbins, dtype=np.int64), np.array(schema.cardinalities, dtype=np.int64))

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.int32)
        for f in range(X.shape[1]):
            if self.cards[f] > 0:
                codes = X[:, f]
                if np.any(codes < 0) or np.any(codes >= self.cards[f]) or np.any(codes != np.floor(codes)):
                    raise DataError(f"column {f}: categorical codes must be integers in [0, {self.cards[f]})")
                out[:, f] = codes.astype(np.int32)
            else:
                idx = np.searchsorted(self.edges[f], X[:, f], side="right") - 1
                out[:, f] = np.clip(idx, 0, self.nbins[f] - 1)
        return out

    def padded_edges(self) -> np.ndarray:
        width = int(max(self.nbins.max(), 1))
        pad = np.full((len(self.edges), width), np.inf)
        for f, e in enumerate(self.edges):
            pad[f, : len(e)] = e
        return pad


def _check_X(X, schema: FeatureSchema) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != schema.n_features:
        raise DataError(f"expected {schema.n_features} feature columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature value")
    return X


def build_histograms(binned, rows, gh: GradHess, nbins) -> np.ndarray:
    """(n_features, max_bins, 3) array of per-bin (sum g, sum h, count)."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    nbins = np.asarray(nbins, dtype=np.int64)
    out = np.zeros((binned.shape[1], int(max(nbins.max(), 1)), 3))
    K.build_hist(np.ascontiguousarray(binned, dtype=np.int32), rows, 0, len(rows), gh.g, gh.h, out)
    return out


class Split(NamedTuple):
    feature: int
    bin: int
    gain: float
    left_categories: tuple[int, ...] | None


def best_split(
    hist: np.ndarray,
    nbins,
    cards,
    lambda_l2: float,
    gamma_leaf: float,
    min_samples_leaf: int,
    max_cat_exhaustive: int = 8,
    cat_l2: float = 0.0,
    cat_smooth: float = 0.0,
    min_data_per_group: int = 1,
) -> Split | None:
    """Highest-gain split of one node, or None when no split has positive gain.

    Gains within 1e-12 * (H + 1) of zero count as zero (rounding noise).

    Numeric features send bins ``<= bin`` left. Categorical features with few
    present categories are split by enumerating every bipartition, others by
    scanning prefixes of categories ordered by sum(g) / (sum(h) + cat_smooth).
    """
    cards = np.asarray(cards, dtype=np.int64)
    mask = np.zeros(int(max(cards.max(), 1)), dtype=np.int8)
    gain, f, b = K.best_split(
        hist, np.asarray(nbins, dtype=np.int64), cards, float(lambda_l2), float(gamma_leaf),
        float(min_samples_leaf), int(max_cat_exhaustive), float(cat_l2), float(cat_smooth),
        float(min_data_per_group), mask,
    )
    if f < 0:
        return None
    left = tuple(int(c) for c in np.flatnonzero(mask == 1)) if cards[f] > 0 else None
    return Split(int(f), int(b), float(gain), left)


def leaf_weight(G, H, lambda_l2):
    """Second-order optimal leaf value -G / (H + lambda)."""
    return -np.asarray(G) / (np.asarray(H) + lambda_l2)


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    is_categorical: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    category_mask: np.ndarray
    gain: np.ndarray
    leaf_value: np.ndarray
    leaf_count: np.ndarray

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_value)

    def predict(self, X: np.ndarray, scale: float = 1.0, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = np.zeros(X.shape[0])
        K.predict_tree(
            X, self.feature, self.is_categorical, self.threshold, self.left, self.right,
            self.default_left, self.category_mask, self.leaf_value, float(scale), out,
        )
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "is_categorical": self.is_categorical.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "default_left": self.default_left.tolist(),
            # categorical nodes only: sparse {node: [[code, side], ...]}
            "categories": {
                str(i): [[int(c), int(self.category_mask[i, c])] for c in np.flatnonzero(self.category_mask[i])]
                for i in np.flatnonzero(self.is_categorical)
            },
            "mask_width": int(self.category_mask.shape[1]),
            "gain": self.gain.tolist(),
            "leaf_value": self.leaf_value.tolist(),
            "leaf_count": self.leaf_count.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        n_nodes = len(d["feature"])
        mask = np.zeros((n_nodes, d["mask_width"]), dtype=np.int8)
        for node, pairs in d["categories"].items():
            for c, side in pairs:
                mask[int(node), c] = side
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            is_categorical=np.array(d["is_categorical"], dtype=np.bool_),
            threshold=np.array(d["threshold"], dtype=np.float64),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            default_left=np.array(d["default_left"], dtype=np.bool_),
            category_mask=mask,
            gain=np.array(d["gain"], dtype=np.float64),
            leaf_value=np.array(d["leaf_value"], dtype=np.float64),
            leaf_count=np.array(d["leaf_count"], dtype=np.int64),
        )


class GrownTree(NamedTuple):
    tree: Tree
    leaf_of_row: np.ndarray
    leaf_G: np.ndarray
    leaf_H: np.ndarray


def grow_tree_leafwise(binned, gh: GradHess, params: TrainParams, mapper: BinMapper) -> GrownTree:
    """Grow one tree by always splitting the leaf with the largest gain.

    Leaf values are the second-order weights -G / (H + lambda).
    """
    out = K.grow_tree(
        np.ascontiguousarray(binned, dtype=np.int32),
        np.ascontiguousarray(gh.g, dtype=np.float64),
        np.ascontiguousarray(gh.h, dtype=np.float64),
        mapper.nbins,
        mapper.cards,
        mapper.padded_edges(),
        int(params.num_leaves),
        float(params.lambda_l2),
        float(params.gamma_leaf),
        float(params.min_samples_leaf),
        int(params.max_cat_exhaustive),
        float(params.cat_l2),
        float(params.cat_smooth),
        float(params.min_data_per_group),
    )
    feat, thr, left, right, dleft, mask, gain, G, H, C, leaf_of_row = out
    tree = Tree(
        feature=feat,
        is_categorical=mapper.cards[feat] > 0 if len(feat) else np.zeros(0, dtype=np.bool_),
        threshold=thr,
        left=left,
        right=right,
        default_left=dleft,
        category_mask=mask,
        gain=gain,
        leaf_value=leaf_weight(G, H, params.lambda_l2),
        leaf_count=C,
    )
    return GrownTree(tree, leaf_of_row, G, H)


@dataclass(eq=False)
class QuantileForest:
    """Boosted ensemble: prediction = base_score + learning_rate * sum(trees)."""

    trees: list[Tree]
    base_score: float
    params: TrainParams
    schema: FeatureSchema
    train_loss: list[float] = field(default_factory=list)

    @property
    def quantile(self) -> float:
        return self.params.quantile

    def predict(self, X) -> np.ndarray:
        X = _check_X(X, self.schema)
        out = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            t.predict(X, self.params.learning_rate, out)
        return out

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "params": asdict(self.params),
            "schema": {
                "cardinalities": list(self.schema.cardinalities),
                "names": list(self.schema.names) if self.schema.names else None,
            },
            "base_score": self.base_score,
            "train_loss": self.train_loss,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileForest":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model format version {d.get('format_version')!r}")
        sch = d["schema"]
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            base_score=float(d["base_score"]),
            params=TrainParams(**d["params"]),
            schema=FeatureSchema(tuple(sch["cardinalities"]), tuple(sch["names"]) if sch["names"] else None),
            train_loss=list(d.get("train_loss", [])),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path) -> "QuantileForest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict(forest: QuantileForest, X) -> np.ndarray:
    return forest.predict(X)


def train(X, y, params: TrainParams, schema: FeatureSchema | None = None) -> QuantileForest:
    """Fit a quantile forest at level ``params.quantile``.

    Starts from the empirical tau-quantile of ``y``; each round grows a tree on
    the pinball gradients at the current predictions and adds
    ``learning_rate`` times its output.
    """
    y = np.asarray(y, dtype=np.float64)
    if schema is None:
        schema = FeatureSchema.numeric(np.asarray(X).shape[1])
    X = _check_X(X, schema)
    if len(y) != X.shape[0]:
        raise DataError("feature and target row counts differ")
    if len(y) == 0:
        raise DataError("empty design matrix")
    if not np.all(np.isfinite(y)):
        raise DataError("non-finite target value")
    if len(y) < 2 * params.min_samples_leaf:
        raise DataError(f"{len(y)} rows; need at least 2 * min_samples_leaf = {2 * params.min_samples_leaf}")

    tau = params.quantile
    mapper = BinMapper.fit(X, schema, params.max_bins)
    binned = mapper.transform(X)
    base = float(np.quantile(y, tau))
    pred = np.full(len(y), base)
    trees: list[Tree] = []
    losses = [float(pinball_loss(y, pred, tau).mean())]
    for _ in range(params.n_rounds):
        gh = pinball_grad(y, pred, tau)
        grown = grow_tree_leafwise(binned, gh, params, mapper)
        tree = grown.tree
        if params.leaf_output == "renew":
            shift = K.leaf_quantiles(y - pred, grown.leaf_of_row, tree.n_leaves, tau)
            tree.leaf_value = shift * grown.leaf_H / (grown.leaf_H + params.lambda_l2)
        pred = pred + params.learning_rate * tree.leaf_value[grown.leaf_of_row]
        trees.append(tree)
        losses.append(float(pinball_loss(y, pred, tau).mean()))
    return QuantileForest(trees, base, params, schema, losses)


@dataclass(eq=False)
class IntervalModel:
    lower: QuantileForest
    median: QuantileForest
    upper: QuantileForest

    @property
    def quantiles(self) -> tuple[float, float, float]:
        return (self.lower.quantile, self.median.quantile, self.upper.quantile)

    def predict(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.lower.predict(X), self.median.predict(X), self.upper.predict(X)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in ("lower", "median", "upper"):
            getattr(self, name).save(d / f"{name}.json")

    @classmethod
    def load(cls, directory) -> "IntervalModel":
        d = Path(directory)
        return cls(*(QuantileForest.load(d / f"{n}.json") for n in ("lower", "median", "upper")))


def train_interval(
    X,
    y,
    params: TrainParams = TrainParams(),
    schema: FeatureSchema | None = None,
    quantiles: Sequence[float] = INTERVAL_QUANTILES,
) -> IntervalModel:
    """Independently trained lower / median / upper quantile forests."""
    lo, mid, hi = quantiles
    if not lo < mid < hi:
        raise ConfigError(f"interval quantiles must be increasing, got {quantiles}")
    return IntervalModel(*(train(X, y, replace(params, quantile=q), schema) for q in (lo, mid, hi)))
