"""
Binary decision trees with exhaustive split search.

Two criteria share one growth engine:

- ``gini``: weighted Gini impurity decrease, leaves hold the weighted class
  probability vector ``(P(0), P(1))``; the random-forest and AdaBoost base learner.
- ``second_order``: gradient/Hessian gain
  ``½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]``, leaves hold the scalar
  ``−sign(G)·max(|G|−α, 0)/(H+λ)``; the boosting base learner.

Routing is ``value < threshold → left``. Thresholds sit at midpoints between
adjacent distinct values. Ties between equal-gain candidates go to the lowest
feature index, then the lowest threshold.
"""

import heapq
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import FitError, PredictionError

GINI = "gini"
SECOND_ORDER = "second_order"
LEVEL_WISE = "level_wise"
LEAF_WISE = "leaf_wise"
MAX_FEATURES_ALL = "all"
MAX_FEATURES_SQRT = "sqrt"

# Relative slack below which a gain counts as no improvement
_GAIN_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TreeParams:
    """Growth parameters shared by every tree-based family."""
    max_depth: int = 6
    min_child_weight: float = 0.0
    reg_lambda: float = 0.0
    reg_alpha: float = 0.0
    growth: str = LEVEL_WISE
    max_leaves: int = 31
    criterion: str = GINI
    max_features: str = MAX_FEATURES_ALL
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.max_depth, (int, np.integer)) or self.max_depth < 0:
            raise FitError(f"max_depth must be a nonnegative integer, got {self.max_depth!r}")
        if self.min_child_weight < 0:
            raise FitError("min_child_weight must be nonnegative")
        if self.reg_lambda < 0 or self.reg_alpha < 0:
            raise FitError("reg_lambda and reg_alpha must be nonnegative")
        if self.growth not in (LEVEL_WISE, LEAF_WISE):
            raise FitError(f"Unknown growth policy '{self.growth}'")
        if self.max_leaves < 1:
            raise FitError("max_leaves must be positive")
        if self.criterion not in (GINI, SECOND_ORDER):
            raise FitError(f"Unknown criterion '{self.criterion}'")
        if self.max_features not in (MAX_FEATURES_ALL, MAX_FEATURES_SQRT):
            raise FitError(f"Unknown max_features '{self.max_features}'")


@dataclass(frozen=True)
class TreeNode:
    """
    One tree node. Internal nodes carry feature_index/threshold/left/right,
    leaves carry leaf_value. cover is the training weight (or Hessian) sum.
    """
    cover: float
    feature_index: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None
    leaf_value: Optional[Tuple[float, ...]] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            value = self.leaf_value[0] if len(self.leaf_value) == 1 else list(self.leaf_value)
            return {"feature": None, "threshold": None, "left": None, "right": None,
                    "leaf_value": value, "cover": self.cover}
        return {"feature": self.feature_index, "threshold": self.threshold,
                "left": self.left, "right": self.right, "leaf_value": None, "cover": self.cover}

    @classmethod
    def from_dict(cls, raw: dict) -> "TreeNode":
        if raw.get("left") is None:
            value = raw["leaf_value"]
            value = tuple(float(v) for v in value) if isinstance(value, list) else (float(value),)
            return cls(cover=float(raw["cover"]), leaf_value=value)
        return cls(cover=float(raw["cover"]), feature_index=int(raw["feature"]),
                   threshold=float(raw["threshold"]), left=int(raw["left"]), right=int(raw["right"]))


@dataclass(frozen=True, eq=False)
class Tree:
    """An immutable fitted tree; node 0 is the root unless stated otherwise."""
    nodes: Tuple[TreeNode, ...]
    n_features: int
    root: int = 0

    def __post_init__(self):
        self._validate()

    def _validate(self):
        n = len(self.nodes)
        if n == 0 or not 0 <= self.root < n:
            raise FitError("Tree must contain its root node")
        seen = set()
        stack = [self.root]
        while stack:
            index = stack.pop()
            if index in seen:
                raise FitError(f"Tree is not acyclic at node {index}")
            seen.add(index)
            node = self.nodes[index]
            if not node.cover > 0:
                raise FitError(f"Node {index} has non-positive cover")
            if node.is_leaf:
                if node.leaf_value is None or not all(math.isfinite(v) for v in node.leaf_value):
                    raise FitError(f"Leaf {index} has a missing or non-finite value")
                continue
            if node.right is None or not (0 <= node.left < n and 0 <= node.right < n):
                raise FitError(f"Internal node {index} needs two valid children")
            if not math.isfinite(node.threshold) or not 0 <= node.feature_index < self.n_features:
                raise FitError(f"Internal node {index} has an invalid split")
            child_cover = self.nodes[node.left].cover + self.nodes[node.right].cover
            if not math.isclose(node.cover, child_cover, rel_tol=1e-9, abs_tol=1e-12):
                raise FitError(f"Cover of node {index} differs from the sum of its children")
            stack.extend((node.left, node.right))
        if len(seen) != n:
            raise FitError("Every node must be reachable from the root")

    @cached_property
    def arrays(self) -> dict:
        """Flat numpy views used by vectorised prediction and TreeSHAP."""
        n = len(self.nodes)
        width = len(next(node.leaf_value for node in self.nodes if node.is_leaf))
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        value = np.zeros((n, width))
        cover = np.zeros(n)
        for i, node in enumerate(self.nodes):
            cover[i] = node.cover
            if node.is_leaf:
                value[i] = node.leaf_value
            else:
                feature[i], threshold[i], left[i], right[i] = node.feature_index, node.threshold, node.left, node.right
        return {"feature": feature, "threshold": threshold, "left": left,
                "right": right, "value": value, "cover": cover}

    @property
    def leaf_count(self) -> int:
        return sum(1 for node in self.nodes if node.is_leaf)

    def depth(self) -> int:
        """Length of the longest root-to-leaf path."""
        def walk(index: int) -> int:
            node = self.nodes[index]
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def used_features(self) -> set:
        return {node.feature_index for node in self.nodes if not node.is_leaf}

    def to_list(self) -> List[dict]:
        return [node.to_dict() for node in self.nodes]

    @classmethod
    def from_list(cls, raw: Sequence[dict], n_features: int) -> "Tree":
        return cls(nodes=tuple(TreeNode.from_dict(entry) for entry in raw), n_features=n_features)


def predict_tree(t: Tree, x) -> np.ndarray:
    """Route one feature vector to its leaf and return the leaf payload."""
    x = np.asarray(x, dtype=float)
    if x.shape != (t.n_features,):
        raise PredictionError(f"Expected a vector of width {t.n_features}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise PredictionError("Feature vector contains non-finite values")
    node = t.nodes[t.root]
    while not node.is_leaf:
        node = t.nodes[node.left if x[node.feature_index] < node.threshold else node.right]
    return np.array(node.leaf_value)


def apply_tree(t: Tree, X: np.ndarray) -> np.ndarray:
    """Leaf index reached by every row of X (vectorised routing)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != t.n_features:
        raise PredictionError(f"Expected a matrix of width {t.n_features}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise PredictionError("Feature matrix contains non-finite values")
    a = t.arrays
    index = np.full(X.shape[0], t.root, dtype=np.int64)
    active = a["left"][index] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        nodes = index[rows]
        go_left = X[rows, a["feature"][nodes]] < a["threshold"][nodes]
        index[rows] = np.where(go_left, a["left"][nodes], a["right"][nodes])
        active[rows] = a["left"][index[rows]] >= 0
    return index


def predict_tree_matrix(t: Tree, X: np.ndarray) -> np.ndarray:
    """Leaf payloads for every row, shape (rows, payload width)."""
    return t.arrays["value"][apply_tree(t, X)]


@dataclass
class _Candidate:
    gain: float
    feature: int
    threshold: float
    left_rows: np.ndarray
    right_rows: np.ndarray


@dataclass
class _Pending:
    """A node awaiting expansion during growth."""
    node_id: int
    rows: np.ndarray
    depth: int
    split: Optional[_Candidate] = field(default=None)


class _Grower:
    """Shared growth engine; subclasses supply split search and leaf values."""

    def __init__(self, X: np.ndarray, params: TreeParams, features: Optional[Sequence[int]]):
        self.X = X
        self.params = params
        self.features = np.arange(X.shape[1]) if features is None else np.array(sorted(features), dtype=np.int64)
        self.nodes: List[Optional[TreeNode]] = []

    # -- hooks -----------------------------------------------------------
    def cover(self, rows: np.ndarray) -> float:
        raise NotImplementedError

    def leaf_value(self, rows: np.ndarray) -> Tuple[float, ...]:
        raise NotImplementedError

    def is_pure(self, rows: np.ndarray) -> bool:
        return False

    def score_feature(self, rows: np.ndarray, column: np.ndarray) -> Optional[Tuple[float, int]]:
        """Best (gain, split position) within one sorted column, or None."""
        raise NotImplementedError

    # -- engine ----------------------------------------------------------
    def candidate_features(self, node_id: int) -> np.ndarray:
        if self.params.max_features == MAX_FEATURES_SQRT:
            k = int(math.ceil(math.sqrt(self.features.size)))
            rng = np.random.default_rng([self.params.seed, node_id])
            return np.sort(rng.choice(self.features, size=k, replace=False))
        return self.features

    def best_split(self, node_id: int, rows: np.ndarray) -> Optional[_Candidate]:
        if rows.size < 2 or self.is_pure(rows):
            return None
        best = None
        for j in self.candidate_features(node_id):
            order = np.argsort(self.X[rows, j], kind="stable")
            sorted_rows = rows[order]
            column = self.X[sorted_rows, j]
            scored = self.score_feature(sorted_rows, column)
            if scored is None:
                continue
            gain, position = scored
            if best is None or gain > best.gain:
                threshold = (column[position] + column[position + 1]) / 2.0
                best = _Candidate(gain=gain, feature=int(j), threshold=float(threshold),
                                  left_rows=sorted_rows[:position + 1],
                                  right_rows=sorted_rows[position + 1:])
        return best

    def _new_node(self) -> int:
        self.nodes.append(None)
        return len(self.nodes) - 1

    def _make_leaf(self, pending: _Pending):
        self.nodes[pending.node_id] = TreeNode(cover=self.cover(pending.rows),
                                               leaf_value=self.leaf_value(pending.rows))

    def _make_split(self, pending: _Pending) -> Tuple[_Pending, _Pending]:
        split = pending.split
        left = _Pending(self._new_node(), np.sort(split.left_rows), pending.depth + 1)
        right = _Pending(self._new_node(), np.sort(split.right_rows), pending.depth + 1)
        self.nodes[pending.node_id] = TreeNode(cover=self.cover(pending.rows), feature_index=split.feature,
                                               threshold=split.threshold, left=left.node_id, right=right.node_id)
        return left, right

    def _with_split(self, pending: _Pending) -> _Pending:
        if pending.depth < self.params.max_depth:
            pending.split = self.best_split(pending.node_id, pending.rows)
        return pending

    def grow_level_wise(self, rows: np.ndarray):
        frontier = [self._with_split(_Pending(self._new_node(), rows, 0))]
        while frontier:
            next_frontier = []
            for pending in frontier:
                if pending.split is None:
                    self._make_leaf(pending)
                    continue
                next_frontier.extend(self._with_split(child) for child in self._make_split(pending))
            frontier = next_frontier

    def grow_leaf_wise(self, rows: np.ndarray):
        root = self._with_split(_Pending(self._new_node(), rows, 0))
        leaves = 1
        # max-heap on gain; node id breaks ties so the order is deterministic
        heap = []
        open_leaves = {root.node_id: root}
        if root.split is not None:
            heapq.heappush(heap, (-root.split.gain, root.node_id))
        while heap and leaves < self.params.max_leaves:
            _, node_id = heapq.heappop(heap)
            pending = open_leaves.pop(node_id)
            for child in self._make_split(pending):
                self._with_split(child)
                open_leaves[child.node_id] = child
                if child.split is not None:
                    heapq.heappush(heap, (-child.split.gain, child.node_id))
            leaves += 1
        for pending in open_leaves.values():
            self._make_leaf(pending)

    def build(self, rows: np.ndarray) -> Tree:
        if self.params.growth == LEAF_WISE:
            self.grow_leaf_wise(rows)
        else:
            self.grow_level_wise(rows)
        return Tree(nodes=tuple(self.nodes), n_features=self.X.shape[1])


def _positive(gain: float, scale: float) -> bool:
    return gain > _GAIN_TOLERANCE * max(1.0, abs(scale))


class _GiniGrower(_Grower):

    def __init__(self, X, y, w, params, features):
        super().__init__(X, params, features)
        self.y = y
        self.w = w

    def cover(self, rows):
        return float(np.sum(self.w[rows]))

    def leaf_value(self, rows):
        total = np.sum(self.w[rows])
        positive = np.sum(self.w[rows] * self.y[rows])
        return (float((total - positive) / total), float(positive / total))

    def is_pure(self, rows):
        labels = self.y[rows]
        return bool(np.all(labels == labels[0]))

    def score_feature(self, rows, column):
        w = self.w[rows]
        wy = w * self.y[rows]
        cum_w = np.cumsum(w)[:-1]
        cum_pos = np.cumsum(wy)[:-1]
        total_w = float(np.sum(w))
        total_pos = float(np.sum(wy))
        valid = column[:-1] < column[1:]
        if not valid.any():
            return None

        def weighted_gini(weight, positive):
            p = positive / weight
            return weight * (1.0 - p ** 2 - (1.0 - p) ** 2)

        right_w = total_w - cum_w
        with np.errstate(divide="ignore", invalid="ignore"):
            children = weighted_gini(cum_w, cum_pos) + weighted_gini(right_w, total_pos - cum_pos)
        parent = weighted_gini(total_w, total_pos)
        gains = np.where(valid & (cum_w >= self.params.min_child_weight) & (right_w >= self.params.min_child_weight),
                         parent - children, -np.inf)
        position = int(np.argmax(gains))
        gain = float(gains[position])
        if not _positive(gain, parent):
            return None
        return gain, position


class _SecondOrderGrower(_Grower):

    def __init__(self, X, g, h, params, features):
        super().__init__(X, params, features)
        self.g = g
        self.h = h

    def cover(self, rows):
        return float(np.sum(self.h[rows]))

    def leaf_value(self, rows):
        G = float(np.sum(self.g[rows]))
        H = float(np.sum(self.h[rows]))
        return (soft_threshold_leaf(G, H, self.params.reg_lambda, self.params.reg_alpha),)

    def score_feature(self, rows, column):
        lam = self.params.reg_lambda
        mcw = self.params.min_child_weight
        g = self.g[rows]
        h = self.h[rows]
        G = float(np.sum(g))
        H = float(np.sum(h))
        GL = np.cumsum(g)[:-1]
        HL = np.cumsum(h)[:-1]
        GR = G - GL
        HR = H - HL
        valid = (column[:-1] < column[1:]) & (HL >= mcw) & (HR >= mcw) & (HL + lam > 0) & (HR + lam > 0)
        if not valid.any() or H + lam <= 0:
            return None
        parent = G ** 2 / (H + lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = 0.5 * (GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - parent)
        gains = np.where(valid, gains, -np.inf)
        position = int(np.argmax(gains))
        gain = float(gains[position])
        if not _positive(gain, parent):
            return None
        return gain, position


def soft_threshold_leaf(G: float, H: float, reg_lambda: float, reg_alpha: float) -> float:
    """Leaf weight −sign(G)·max(|G|−α, 0)/(H+λ); 0 when the denominator vanishes."""
    denominator = H + reg_lambda
    if denominator <= 0:
        return 0.0
    return -math.copysign(max(abs(G) - reg_alpha, 0.0), G) / denominator


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise FitError("Training matrix must be two-dimensional with at least one row")
    if not np.all(np.isfinite(X)):
        raise FitError("Training matrix contains non-finite values")
    return X


def fit_classification_tree(X, y, w, p: TreeParams, features: Optional[Sequence[int]] = None) -> Tree:
    """
    Fit a Gini classification tree on weighted rows.

    Rows with zero weight are dropped before growth so every node keeps a
    positive cover. ``features`` restricts the candidate columns.
    """
    if p.criterion != GINI:
        raise FitError(f"Classification trees need criterion '{GINI}', got '{p.criterion}'")
    X = _check_matrix(X)
    y = np.asarray(y, dtype=float)
    w = np.ones(X.shape[0]) if w is None else np.asarray(w, dtype=float)
    if y.shape != (X.shape[0],) or w.shape != (X.shape[0],):
        raise FitError("Labels and weights must have one entry per row")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise FitError("Instance weights must be finite and nonnegative")
    rows = np.flatnonzero(w > 0)
    if rows.size == 0:
        raise FitError("Instance weights are all zero")
    if p.growth != LEVEL_WISE:
        p = replace(p, growth=LEVEL_WISE)
    return _GiniGrower(X, y, w, p, features).build(rows)


def fit_regression_tree(X, g, h, p: TreeParams, features: Optional[Sequence[int]] = None,
                        rows: Optional[Sequence[int]] = None) -> Tree:
    """
    Fit a second-order regression tree on gradients and Hessians.

    ``rows`` restricts training to a row subsample; ``features`` restricts the
    candidate columns (column subsampling).
    """
    if p.criterion != SECOND_ORDER:
        raise FitError(f"Regression trees need criterion '{SECOND_ORDER}', got '{p.criterion}'")
    X = _check_matrix(X)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if g.shape != (X.shape[0],) or h.shape != (X.shape[0],):
        raise FitError(f"Gradient and Hessian vectors must have length {X.shape[0]}, "
                       f"got {g.shape} and {h.shape}")
    if np.any(h < 0) or not np.all(np.isfinite(h)) or not np.all(np.isfinite(g)):
        raise FitError("Hessians must be finite and nonnegative; gradients finite")
    rows = np.arange(X.shape[0]) if rows is None else np.sort(np.asarray(rows, dtype=np.int64))
    if rows.size == 0:
        raise FitError("Regression tree needs at least one row")
    if not np.sum(h[rows]) > 0:
        raise FitError("Hessian sum must be positive")
    return _SecondOrderGrower(X, g, h, p, features).build(rows)
