"""
CART trees stored as flat node arrays.

A node with feature == -1 is a leaf. Routing rule: x[feature] <= threshold
goes left. Nodes are numbered in preorder, so children always have larger
ids than their parent.
"""

# Standard library imports
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

# Local application imports
from .dataset import EncodedMatrix
from .errors import ModelError

LEAF = -1


class SplitCriterion(str, Enum):
    GINI = "gini"
    SQUARED_ERROR = "squared_error"


class CartParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_depth: Optional[int] = Field(default=None, ge=1, description="None grows until leaves are pure or too small")
    min_samples_leaf: int = Field(default=1, ge=1)
    n_candidate_features: Union[Literal["all"], int] = "all"
    criterion: SplitCriterion = SplitCriterion.SQUARED_ERROR

    def candidate_count(self, n_features: int) -> int:
        if self.n_candidate_features == "all":
            return n_features
        if self.n_candidate_features < 1:
            raise ModelError(f"n_candidate_features must be >= 1, got {self.n_candidate_features}")
        return min(self.n_candidate_features, n_features)


@dataclass(frozen=True)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity_decrease: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row of X"""
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(f"Tree expects {self.n_features} columns, got {X.shape[-1]}")
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.arange(X.shape[0])
        while active.size:
            current = node[active]
            internal = self.feature[current] != LEAF
            active = active[internal]
            if not active.size:
                break
            current = current[internal]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def check_structure(self):
        """Raise ModelError unless every node has exactly one parent and children follow their parent"""
        n = self.n_nodes
        parents = np.zeros(n, dtype=np.int64)
        for node in range(n):
            if self.feature[node] == LEAF:
                if self.left[node] != LEAF or self.right[node] != LEAF:
                    raise ModelError(f"Leaf {node} has children")
                continue
            for child in (self.left[node], self.right[node]):
                if not node < child < n:
                    raise ModelError(f"Node {node} has invalid child {child}")
                parents[child] += 1
        if parents[0] != 0 or np.any(parents[1:] != 1):
            raise ModelError("Tree nodes are not reachable exactly once from the root")

    def to_state(self) -> Dict[str, Any]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "impurity_decrease": self.impurity_decrease.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_state(cls, state: Dict[str, Any]) -> "DecisionTree":
        tree = cls(
            feature=np.asarray(state["feature"], dtype=np.int64),
            threshold=np.asarray(state["threshold"], dtype=np.float64),
            left=np.asarray(state["left"], dtype=np.int64),
            right=np.asarray(state["right"], dtype=np.int64),
            value=np.asarray(state["value"], dtype=np.float64),
            n_samples=np.asarray(state["n_samples"], dtype=np.int64),
            impurity_decrease=np.asarray(state["impurity_decrease"], dtype=np.float64),
            n_features=int(state["n_features"]),
        )
        tree.check_structure()
        return tree


def _best_split(X: np.ndarray, y: np.ndarray, candidates: np.ndarray,
                min_leaf: int) -> Optional[Tuple[int, float, float]]:
    """
    Exact best split over the candidate columns.

    Returns (column, threshold, squared-error decrease) or None. Equal gains
    resolve to the lowest column, then the lowest threshold.
    """
    n = y.size
    lo, hi = min_leaf, n - min_leaf
    if lo > hi:
        return None

    Xc = X[:, candidates]
    order = np.argsort(Xc, axis=0, kind="stable")
    xs = np.take_along_axis(Xc, order, axis=0)
    csum = np.cumsum(y[order], axis=0)
    total = csum[-1]

    n_left = np.arange(lo, hi + 1)
    s_left = csum[n_left - 1]
    s_right = total - s_left
    n_left_f = n_left[:, None].astype(np.float64)
    n_right_f = (n - n_left)[:, None].astype(np.float64)

    proxy = s_left * s_left / n_left_f + s_right * s_right / n_right_f
    distinct = xs[n_left] > xs[n_left - 1]
    proxy = np.where(distinct, proxy, -np.inf)

    # column-major flattening: first maximum is the lowest column, then lowest position
    flat = int(np.argmax(proxy.T.ravel()))
    column_slot, position = divmod(flat, proxy.shape[0])
    best = proxy[position, column_slot]
    if not np.isfinite(best):
        return None

    # an impure node with a valid split is split even at zero gain (XOR-like layouts)
    gain = max(float(best - total[column_slot] * total[column_slot] / n), 0.0)

    below = xs[n_left[position] - 1, column_slot]
    above = xs[n_left[position], column_slot]
    threshold = (below + above) / 2
    if not below <= threshold < above:
        threshold = below
    return int(candidates[column_slot]), float(threshold), gain


def grow_tree(X: np.ndarray, y: np.ndarray, params: CartParams,
              rng: Optional[np.random.Generator] = None) -> Tuple[DecisionTree, np.ndarray]:
    """
    Grow a tree on (X, y) with an explicit stack.

    Returns the tree and the leaf id of every training sample. rng is only
    consulted when fewer than all features are candidates at each split.
    """
    n, d = X.shape
    if n == 0:
        raise ModelError("Cannot grow a tree on zero samples")
    y = np.asarray(y, dtype=np.float64)
    k = params.candidate_count(d)
    if k < d and rng is None:
        raise ModelError("Feature subsampling needs a random generator")
    # for 0/1 targets the weighted Gini decrease is twice the squared-error decrease
    scale = 2.0 if params.criterion is SplitCriterion.GINI else 1.0

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []
    n_samples: List[int] = []
    decrease: List[float] = []
    leaf_of_sample = np.empty(n, dtype=np.int64)

    stack: List[Tuple[np.ndarray, int, int, bool]] = [(np.arange(n), 0, LEAF, True)]
    while stack:
        positions, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent != LEAF:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node

        ys = y[positions]
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(ys.mean()))
        n_samples.append(int(positions.size))
        decrease.append(0.0)

        split = None
        can_split = (
            (params.max_depth is None or depth < params.max_depth)
            and positions.size >= 2 * params.min_samples_leaf
            and not np.all(ys == ys[0])
        )
        if can_split:
            if k < d:
                candidates = np.sort(rng.choice(d, size=k, replace=False))
            else:
                candidates = np.arange(d)
            split = _best_split(X[positions], ys, candidates, params.min_samples_leaf)

        if split is None:
            leaf_of_sample[positions] = node
            continue

        column, cut, gain = split
        feature[node] = column
        threshold[node] = cut
        decrease[node] = scale * gain
        goes_left = X[positions, column] <= cut
        stack.append((positions[~goes_left], depth + 1, node, False))
        stack.append((positions[goes_left], depth + 1, node, True))

    tree = DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        n_samples=np.asarray(n_samples, dtype=np.int64),
        impurity_decrease=np.asarray(decrease, dtype=np.float64),
        n_features=d,
    )
    return tree, leaf_of_sample


def fit_cart(m: EncodedMatrix, rows: Sequence[int], targets: Sequence[float],
             params: CartParams, seed: int = 0) -> DecisionTree:
    """
    Fit a single CART tree on the given rows of an imputed matrix.

    Args:
        m: imputed matrix
        rows: training row indices into m
        targets: one target per row of m
        params: growth limits and split criterion
        seed: used only for per-split feature subsampling

    Returns:
        The fitted tree
    """
    if m.mask.any():
        raise ModelError("Trees need an imputed matrix")
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ModelError("Cannot fit a tree on zero rows")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size != m.n_rows:
        raise ModelError(f"Expected {m.n_rows} targets, got {targets.size}")
    tree, _ = grow_tree(m.values[rows], targets[rows], params, np.random.default_rng(seed))
    return tree
