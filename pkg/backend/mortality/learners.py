"""
Gradient-boosted trees, random forest and k-nearest-neighbors classifiers.

Every learner consumes an imputed EncodedMatrix (KNN: imputed and
standardized) and emits one score in [0, 1] per row.
"""

# Standard library imports
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit

# Local application imports
from .dataset import EncodedMatrix
from .errors import DataError, ModelError
from .trees import CartParams, DecisionTree, SplitCriterion, grow_tree

logger = logging.getLogger(__name__)

NEWTON_GUARD = 1e-12
SCORE_EPS = 1e-15
KNN_CHUNK_ROWS = 512


class GradientBoostingParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_trees: int = Field(default=100, ge=0)
    learning_rate: float = Field(default=0.1, gt=0.0, le=1.0)
    max_depth: int = Field(default=3, ge=1)
    min_samples_leaf: int = Field(default=20, ge=1)


class RandomForestParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_trees: int = Field(default=300, ge=1)
    max_depth: Optional[int] = Field(default=None, ge=1)
    min_samples_leaf: int = Field(default=5, ge=1)
    n_candidate_features: Optional[int] = Field(default=None, ge=1, description="None means floor(sqrt(d))")
    bootstrap: bool = True
    n_jobs: int = Field(default=1, ge=1, description="Worker threads; results do not depend on it")


class KnnParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(default=5, ge=1)


@dataclass(frozen=True)
class GradientBoostedEnsemble:
    init_score: float
    learning_rate: float
    trees: Tuple[DecisionTree, ...]
    columns: Tuple[str, ...]
    feature_of_column: Tuple[str, ...]
    params: GradientBoostingParams
    seed: int
    train_loss: Tuple[float, ...] = ()


@dataclass(frozen=True)
class RandomForestEnsemble:
    trees: Tuple[DecisionTree, ...]
    columns: Tuple[str, ...]
    feature_of_column: Tuple[str, ...]
    params: RandomForestParams
    n_candidate_features: int
    seed: int


@dataclass(frozen=True)
class KnnModel:
    k: int
    train_values: np.ndarray
    train_labels: np.ndarray
    columns: Tuple[str, ...]


TreeEnsemble = Union[GradientBoostedEnsemble, RandomForestEnsemble]


def _check_training_inputs(m: EncodedMatrix, labels: Optional[Sequence[int]]) -> np.ndarray:
    if m.mask.any():
        raise ModelError("Learners need an imputed matrix")
    y = np.asarray(m.labels if labels is None else labels)
    if y.ndim != 1 or y.size != m.n_rows:
        raise ModelError(f"Expected {m.n_rows} labels, got {y.size}")
    if not np.isin(y, (0, 1)).all():
        raise DataError("Labels must be 0 or 1")
    if y.min() == y.max():
        raise DataError(f"Training labels contain a single class ({int(y[0])})")
    return y.astype(np.int64)


def _check_layout(m: EncodedMatrix, columns: Tuple[str, ...]):
    if tuple(m.columns) != tuple(columns):
        raise ModelError(
            f"Column layout mismatch: matrix has {len(m.columns)} columns, model expects {len(columns)}"
        )
    if m.mask.any():
        raise ModelError("Scoring needs an imputed matrix")


def log_loss(y: np.ndarray, raw: np.ndarray) -> float:
    """Mean binary log-loss of raw (log-odds) scores"""
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


# ---------------------------------------------------------------------------
# Gradient boosting
# ---------------------------------------------------------------------------

def fit_gradient_boosting(m: EncodedMatrix, labels: Optional[Sequence[int]] = None,
                          params: Optional[GradientBoostingParams] = None,
                          seed: int = 0) -> GradientBoostedEnsemble:
    """
    Stagewise log-loss boosting with regression trees and Newton leaf values.

    Each stage fits a squared-error tree to the residuals y - sigmoid(F), then
    replaces every leaf value by sum(residual) / (sum(p(1-p)) + guard) over
    the training rows in that leaf.
    """
    params = params or GradientBoostingParams()
    y = _check_training_inputs(m, labels)
    X = m.values

    base_rate = float(y.mean())
    init_score = float(np.log(base_rate / (1.0 - base_rate)))
    raw = np.full(m.n_rows, init_score)
    losses = [log_loss(y, raw)]

    cart = CartParams(
        max_depth=params.max_depth,
        min_samples_leaf=params.min_samples_leaf,
        criterion=SplitCriterion.SQUARED_ERROR,
    )

    trees: List[DecisionTree] = []
    for stage in range(params.n_trees):
        p = expit(raw)
        residual = y - p
        tree, leaf_of_row = grow_tree(X, residual, cart)

        numerator = np.bincount(leaf_of_row, weights=residual, minlength=tree.n_nodes)
        denominator = np.bincount(leaf_of_row, weights=p * (1.0 - p), minlength=tree.n_nodes)
        newton = np.where(tree.is_leaf(), numerator / (denominator + NEWTON_GUARD), 0.0)
        tree = DecisionTree(
            feature=tree.feature,
            threshold=tree.threshold,
            left=tree.left,
            right=tree.right,
            value=newton,
            n_samples=tree.n_samples,
            impurity_decrease=tree.impurity_decrease,
            n_features=tree.n_features,
        )
        trees.append(tree)
        raw = raw + params.learning_rate * newton[leaf_of_row]
        losses.append(log_loss(y, raw))

    logger.debug(f"Boosting finished: {params.n_trees} stages, training log-loss {losses[0]:.5f} -> {losses[-1]:.5f}")
    return GradientBoostedEnsemble(
        init_score=init_score,
        learning_rate=params.learning_rate,
        trees=tuple(trees),
        columns=tuple(m.columns),
        feature_of_column=m.feature_of_column,
        params=params,
        seed=seed,
        train_loss=tuple(losses),
    )


def gb_raw_score(model: GradientBoostedEnsemble, m: EncodedMatrix) -> np.ndarray:
    _check_layout(m, model.columns)
    raw = np.full(m.n_rows, model.init_score)
    for tree in model.trees:
        raw = raw + model.learning_rate * tree.predict(m.values)
    return raw


def gb_predict_proba(model: GradientBoostedEnsemble, m: EncodedMatrix) -> np.ndarray:
    """sigmoid of the additive raw score, kept strictly inside (0, 1)"""
    return np.clip(expit(gb_raw_score(model, m)), SCORE_EPS, 1.0 - SCORE_EPS)


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

def _grow_forest_tree(X: np.ndarray, y: np.ndarray, cart: CartParams, bootstrap: bool,
                      seed_sequence: np.random.SeedSequence) -> DecisionTree:
    rng = np.random.default_rng(seed_sequence)
    if bootstrap:
        sample = rng.integers(0, X.shape[0], size=X.shape[0])
        X, y = X[sample], y[sample]
    tree, _ = grow_tree(X, y, cart, rng)
    return tree


def fit_random_forest(m: EncodedMatrix, labels: Optional[Sequence[int]] = None,
                      params: Optional[RandomForestParams] = None,
                      seed: int = 0) -> RandomForestEnsemble:
    """Bagged Gini trees; tree t draws from the t-th child of SeedSequence(seed)"""
    params = params or RandomForestParams()
    y = _check_training_inputs(m, labels).astype(np.float64)
    d = m.n_columns

    n_candidates = params.n_candidate_features or max(1, int(np.floor(np.sqrt(d))))
    n_candidates = min(n_candidates, d)
    cart = CartParams(
        max_depth=params.max_depth,
        min_samples_leaf=params.min_samples_leaf,
        n_candidate_features="all" if n_candidates == d else n_candidates,
        criterion=SplitCriterion.GINI,
    )
    children = np.random.SeedSequence(seed).spawn(params.n_trees)

    def grow(child: np.random.SeedSequence) -> DecisionTree:
        return _grow_forest_tree(m.values, y, cart, params.bootstrap, child)

    if params.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=params.n_jobs) as pool:
            trees = list(pool.map(grow, children))
    else:
        trees = [grow(child) for child in children]

    return RandomForestEnsemble(
        trees=tuple(trees),
        columns=tuple(m.columns),
        feature_of_column=m.feature_of_column,
        params=params,
        n_candidate_features=n_candidates,
        seed=seed,
    )


def rf_predict_proba(model: RandomForestEnsemble, m: EncodedMatrix) -> np.ndarray:
    _check_layout(m, model.columns)
    total = np.zeros(m.n_rows)
    for tree in model.trees:
        total = total + tree.predict(m.values)
    return total / len(model.trees)


# ---------------------------------------------------------------------------
# k-nearest neighbors
# ---------------------------------------------------------------------------

def fit_knn(m: EncodedMatrix, labels: Optional[Sequence[int]] = None,
            params: Optional[KnnParams] = None) -> KnnModel:
    params = params or KnnParams()
    if m.mask.any():
        raise ModelError("Learners need an imputed matrix")
    y = np.asarray(m.labels if labels is None else labels)
    if y.size != m.n_rows:
        raise ModelError(f"Expected {m.n_rows} labels, got {y.size}")
    if params.k > m.n_rows:
        raise ModelError(f"k={params.k} exceeds the {m.n_rows} training rows")
    return KnnModel(
        k=params.k,
        train_values=m.values.copy(),
        train_labels=y.astype(np.int64),
        columns=tuple(m.columns),
    )


def nearest_neighbors(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    """
    Indices of the k nearest training rows per query, nearest first.

    Ties at equal distance go to the lower training-row index. Distances are
    first approximated by the expanded dot-product form to shortlist
    candidates, then recomputed exactly for the shortlist.
    """
    train = model.train_values
    k = model.k
    train_sq = np.einsum("ij,ij->i", train, train)
    result = np.empty((queries.shape[0], k), dtype=np.int64)

    for start in range(0, queries.shape[0], KNN_CHUNK_ROWS):
        block = queries[start:start + KNN_CHUNK_ROWS]
        block_sq = np.einsum("ij,ij->i", block, block)
        approx = np.maximum(block_sq[:, None] + train_sq[None, :] - 2.0 * block @ train.T, 0.0)
        kth = np.partition(approx, k - 1, axis=1)[:, k - 1]
        # slack covers cancellation error of the expanded form
        slack = 1e-9 * (1.0 + kth) + 1e-9 * (block_sq + train_sq.max())

        for offset in range(block.shape[0]):
            candidates = np.flatnonzero(approx[offset] <= kth[offset] + slack[offset])
            diff = train[candidates] - block[offset]
            exact = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((candidates, exact))[:k]
            result[start + offset] = candidates[order]

    return result


def knn_predict_proba(model: KnnModel, m: EncodedMatrix) -> np.ndarray:
    _check_layout(m, model.columns)
    neighbors = nearest_neighbors(model, m.values)
    return model.train_labels[neighbors].sum(axis=1) / model.k


# ---------------------------------------------------------------------------
# Importance
# ---------------------------------------------------------------------------

def gini_importance(model: TreeEnsemble) -> List[Tuple[str, float]]:
    """
    Impurity decrease summed over every split, folded back to the original
    feature (one-hot columns count for their categorical parent) and
    normalized to sum 1. Sorted descending; equal values keep schema order.
    """
    if not isinstance(model, (GradientBoostedEnsemble, RandomForestEnsemble)):
        raise ModelError(f"Impurity importance is undefined for {type(model).__name__}")

    per_column = np.zeros(len(model.columns))
    for tree in model.trees:
        internal = ~tree.is_leaf()
        np.add.at(per_column, tree.feature[internal], tree.impurity_decrease[internal])

    features: Dict[str, float] = {}
    for column, feature in enumerate(model.feature_of_column):
        features[feature] = features.get(feature, 0.0) + float(per_column[column])
    for feature in dict.fromkeys(model.feature_of_column):
        features.setdefault(feature, 0.0)

    total = sum(features.values())
    if total > 0:
        normalized = {name: value / total for name, value in features.items()}
    else:
        normalized = {name: 1.0 / len(features) for name in features}

    return sorted(normalized.items(), key=lambda item: -item[1])
