"""
Tree ensembles behind one prediction interface.

Families:
- random_forest: bootstrap Gini trees, probability = mean of tree probability vectors
- gradient_boosting / xgb / lgbm: logistic-loss boosting of second-order regression
  trees in margin space (h ≡ 1 for gradient_boosting, leaf-wise growth for lgbm)
- adaboost: SAMME with depth-1 Gini stumps
- logistic: wraps a LogisticModel from ``linear`` so every family shares Model

Boosted leaf values are stored unshrunk; the learning rate is applied when
margins are accumulated.
"""

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit

from .artifacts import write_json
from .errors import DataIOError, DegenerateModelError, FitError, PredictionError, SchemaError
from .linear import LogisticModel, decision_function, predict_proba_logistic
from .logging_utils import get_model_logger
from .tree import (
    GINI,
    LEAF_WISE,
    LEVEL_WISE,
    MAX_FEATURES_ALL,
    SECOND_ORDER,
    Tree,
    TreeParams,
    apply_tree,
    fit_classification_tree,
    fit_regression_tree,
    predict_tree_matrix,
)

logger = get_model_logger(__name__)

RANDOM_FOREST = "random_forest"
GRADIENT_BOOSTING = "gradient_boosting"
XGB = "xgb"
LGBM = "lgbm"
ADABOOST = "adaboost"
LOGISTIC = "logistic"

FAMILIES = (RANDOM_FOREST, GRADIENT_BOOSTING, XGB, LGBM, ADABOOST, LOGISTIC)
BOOSTED_FAMILIES = (GRADIENT_BOOSTING, XGB, LGBM)
TREE_FAMILIES = (RANDOM_FOREST, GRADIENT_BOOSTING, XGB, LGBM, ADABOOST)

# Hessians are clamped from below so every node keeps a positive cover
_MIN_HESSIAN = 1e-16


@dataclass(frozen=True)
class BoostParams:
    """Boosting schedule plus the per-round tree parameters."""
    n_estimators: int = 100
    learning_rate: float = 0.3
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    tree: TreeParams = field(default_factory=lambda: TreeParams(criterion=SECOND_ORDER))
    seed: int = 0

    def __post_init__(self):
        if int(self.n_estimators) < 1:
            raise FitError("n_estimators must be at least 1")
        if self.learning_rate < 0:
            raise FitError("learning_rate must be nonnegative")
        if not 0.0 < self.subsample <= 1.0 or not 0.0 < self.colsample_bytree <= 1.0:
            raise FitError("subsample and colsample_bytree must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class Model:
    """A fitted classifier of any family."""
    family: str
    trees: Tuple[Tree, ...]
    tree_weights: Tuple[float, ...]
    learning_rate: float
    base_margin: float
    schema_fingerprint: str
    n_features: int
    params: Dict[str, Any] = field(default_factory=dict)
    logistic: Optional[LogisticModel] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise FitError(f"Unknown model family '{self.family}'")
        if len(self.tree_weights) != len(self.trees):
            raise FitError("tree_weights must have one entry per tree")
        if self.family == LOGISTIC and self.logistic is None:
            raise FitError("Logistic models need their fitted LogisticModel")
        if self.family != LOGISTIC and not self.trees:
            raise FitError(f"A {self.family} model needs at least one tree")

    @property
    def is_tree_family(self) -> bool:
        return self.family in TREE_FAMILIES

    @property
    def output_space(self) -> str:
        """'probability' for forests (no margin exists), 'margin' otherwise."""
        return "probability" if self.family == RANDOM_FOREST else "margin"

    def tree_scale(self, index: int) -> float:
        """Factor applied to tree ``index``'s scalar output when summing the ensemble output."""
        if self.family == RANDOM_FOREST:
            return 1.0 / len(self.trees)
        if self.family == ADABOOST:
            return self.tree_weights[index] / sum(self.tree_weights)
        return self.tree_weights[index] * self.learning_rate

    def leaf_scalars(self, t: Tree) -> np.ndarray:
        """
        Per-node scalar outputs of one tree: margin increments for boosting,
        ±1 votes for AdaBoost stumps, P(1) for forest trees.
        """
        values = t.arrays["value"]
        if self.family in BOOSTED_FAMILIES:
            return values[:, 0]
        if self.family == ADABOOST:
            return np.where(values[:, 1] > values[:, 0], 1.0, -1.0)
        return values[:, 1]

    def to_dict(self) -> dict:
        payload = {
            "family": self.family,
            "params": self.params,
            "base_margin": self.base_margin,
            "learning_rate": self.learning_rate,
            "tree_weights": list(self.tree_weights),
            "trees": [t.to_list() for t in self.trees],
            "schema_fingerprint": self.schema_fingerprint,
            "n_features": self.n_features,
        }
        if self.logistic is not None:
            payload["logistic"] = self.logistic.to_dict()
        return payload

    @classmethod
    def from_dict(cls, raw: dict) -> "Model":
        try:
            n_features = int(raw["n_features"])
            return cls(
                family=raw["family"],
                trees=tuple(Tree.from_list(nodes, n_features) for nodes in raw["trees"]),
                tree_weights=tuple(float(w) for w in raw["tree_weights"]),
                learning_rate=float(raw["learning_rate"]),
                base_margin=float(raw["base_margin"]),
                schema_fingerprint=raw["schema_fingerprint"],
                n_features=n_features,
                params=dict(raw.get("params", {})),
                logistic=LogisticModel.from_dict(raw["logistic"]) if raw.get("logistic") else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataIOError(f"Malformed model file: {e}")


def _matrix(m: Model, X) -> Tuple[np.ndarray, bool]:
    """Coerce prediction input, checking the schema fingerprint of Datasets."""
    if hasattr(X, "schema") and hasattr(X, "features"):
        if X.schema.fingerprint != m.schema_fingerprint:
            raise SchemaError("Dataset schema does not match the schema the model was trained on")
        X = X.features
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != m.n_features:
        raise PredictionError(f"Expected width {m.n_features}, got {X.shape[1]}")
    return X, single


def margin(m: Model, X) -> np.ndarray:
    """
    Additive ensemble output before the link function.

    Boosted families: base_margin + Σ learning_rate·weight·leaf. AdaBoost: the
    stage-weight-normalised vote margin. Random forest: the mean P(1).
    """
    X, single = _matrix(m, X)
    if m.family == LOGISTIC:
        z = decision_function(m.logistic, X)
        return z[0] if single else z
    total = np.full(X.shape[0], m.base_margin)
    for i, t in enumerate(m.trees):
        scalars = m.leaf_scalars(t)
        total += m.tree_scale(i) * scalars[apply_tree(t, X)]
    return total[0] if single else total


def predict_proba(m: Model, X) -> np.ndarray:
    """(P(0), P(1)) for one vector, or one pair per row of a matrix / Dataset."""
    if m.family == LOGISTIC:
        X, single = _matrix(m, X)
        proba = predict_proba_logistic(m.logistic, X)
        return proba[0] if single else proba
    X, single = _matrix(m, X)
    if m.family == RANDOM_FOREST:
        proba = np.mean([predict_tree_matrix(t, X) for t in m.trees], axis=0)
    else:
        p1 = expit(margin(m, X))
        proba = np.column_stack([1.0 - p1, p1])
    return proba[0] if single else proba


def predict(m: Model, X) -> np.ndarray:
    """Hard labels: positive when P(1) ≥ 0.5."""
    proba = predict_proba(m, X)
    return (proba[..., 1] >= 0.5).astype(np.int64)


def _fit_forest_tree(X, y, n, tree_params: TreeParams, seed: int, index: int, bootstrap: bool) -> Tree:
    rng = np.random.default_rng([seed, index])
    if bootstrap:
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
    else:
        weights = np.ones(n)
    params = replace(tree_params, seed=int(rng.integers(0, 2 ** 31 - 1)))
    return fit_classification_tree(X, y, weights, params)


def fit_random_forest(d, n_estimators: int, tree: TreeParams, seed: int,
                      bootstrap: bool = True, n_jobs: int = 1) -> Model:
    """
    Fit a random forest of Gini trees on bootstrap samples.

    Each tree draws from its own generator seeded by (seed, tree index), so the
    forest does not depend on n_jobs. ``bootstrap=False`` trains every tree on
    the identity sample.
    """
    if int(n_estimators) < 1:
        raise FitError("n_estimators must be at least 1")
    if tree.criterion != GINI:
        tree = replace(tree, criterion=GINI)
    X, y = d.features, d.labels
    n = X.shape[0]
    trees = Parallel(n_jobs=n_jobs)(
        delayed(_fit_forest_tree)(X, y, n, tree, seed, index, bootstrap) for index in range(int(n_estimators))
    )
    logger.model(f"Random forest: {len(trees)} trees, max_depth {tree.max_depth}, "
                 f"max_features {tree.max_features}")
    return Model(
        family=RANDOM_FOREST,
        trees=tuple(trees),
        tree_weights=tuple(1.0 for _ in trees),
        learning_rate=1.0,
        base_margin=0.0,
        schema_fingerprint=d.schema.fingerprint,
        n_features=d.schema.width,
    )


def log_loss(y: np.ndarray, margins: np.ndarray) -> float:
    """Mean logistic loss of margins against {0,1} labels."""
    signs = np.where(y == 1, 1.0, -1.0)
    return float(np.mean(np.logaddexp(0.0, -signs * margins)))


def fit_boosted(d, p: BoostParams, variant: str, callback=None) -> Model:
    """
    Logistic-loss boosting in margin space.

    Per round: p = σ(m), g = p − y, h = p(1 − p) (h ≡ 1 for gradient_boosting),
    optional row subsample without replacement and column subsample, one
    second-order regression tree, then m += learning_rate · tree(x).
    ``callback(round, margins)`` is invoked after every round when given.
    """
    if variant not in BOOSTED_FAMILIES:
        raise FitError(f"Unknown boosting variant '{variant}'")
    X = d.features
    y = d.labels.astype(float)
    n, width = X.shape
    growth = LEAF_WISE if variant == LGBM else LEVEL_WISE
    tree_params = replace(p.tree, criterion=SECOND_ORDER, growth=growth, max_features=MAX_FEATURES_ALL)
    rng = np.random.default_rng(p.seed)

    base_margin = 0.0
    margins = np.full(n, base_margin)
    trees = []
    n_rows = max(1, int(round(p.subsample * n)))
    n_cols = max(1, int(round(p.colsample_bytree * width)))
    for round_index in range(int(p.n_estimators)):
        prob = expit(margins)
        g = prob - y
        if variant == GRADIENT_BOOSTING:
            h = np.ones(n)
        else:
            h = np.maximum(prob * (1.0 - prob), _MIN_HESSIAN)
        rows = np.sort(rng.choice(n, size=n_rows, replace=False)) if n_rows < n else None
        columns = np.sort(rng.choice(width, size=n_cols, replace=False)) if n_cols < width else None
        t = fit_regression_tree(X, g, h, tree_params, features=columns, rows=rows)
        trees.append(t)
        margins = margins + p.learning_rate * predict_tree_matrix(t, X)[:, 0]
        if callback is not None:
            callback(round_index, margins)
        if (round_index + 1) % 50 == 0 or round_index + 1 == p.n_estimators:
            logger.model(f"{variant}: round {round_index + 1}/{p.n_estimators}, "
                         f"train log-loss {log_loss(d.labels, margins):.6f}")

    return Model(
        family=variant,
        trees=tuple(trees),
        tree_weights=tuple(1.0 for _ in trees),
        learning_rate=float(p.learning_rate),
        base_margin=base_margin,
        schema_fingerprint=d.schema.fingerprint,
        n_features=width,
    )


@dataclass(frozen=True)
class SammeRound:
    """Outcome of one SAMME round."""
    stump: Tree
    error: float
    alpha: float
    weights: np.ndarray
    accepted: bool
    stop: bool


def samme_round(X: np.ndarray, y: np.ndarray, w: np.ndarray, learning_rate: float, seed: int = 0) -> SammeRound:
    """
    One SAMME step on a normalised weight vector.

    Rejected when ε ≥ 0.5. With ε = 0 the stump is accepted with stage weight
    1 and fitting stops. Otherwise α = learning_rate·ln((1 − ε)/ε) and the
    misclassified weights are multiplied by e^α, then renormalised.
    """
    stump_params = TreeParams(max_depth=1, criterion=GINI, max_features=MAX_FEATURES_ALL, seed=seed)
    stump = fit_classification_tree(X, y, w, stump_params)
    values = predict_tree_matrix(stump, X)
    predicted = (values[:, 1] > values[:, 0]).astype(np.int64)
    wrong = predicted != y
    error = float(np.sum(w[wrong]) / np.sum(w))
    if error >= 0.5:
        return SammeRound(stump=stump, error=error, alpha=0.0, weights=w, accepted=False, stop=True)
    if error <= 0.0:
        return SammeRound(stump=stump, error=0.0, alpha=1.0, weights=w, accepted=True, stop=True)
    # binary case: the ln(K − 1) term of SAMME vanishes
    alpha = learning_rate * math.log((1.0 - error) / error)
    updated = np.where(wrong, w * math.exp(alpha), w)
    updated = updated / np.sum(updated)
    return SammeRound(stump=stump, error=error, alpha=alpha, weights=updated, accepted=True, stop=False)


def fit_adaboost(d, n_estimators: int = 50, learning_rate: float = 1.0, seed: int = 0) -> Model:
    """SAMME AdaBoost with depth-1 Gini stumps."""
    if int(n_estimators) < 1:
        raise FitError("n_estimators must be at least 1")
    if not learning_rate > 0:
        raise FitError("learning_rate must be positive")
    X = d.features
    y = d.labels
    w = np.full(X.shape[0], 1.0 / X.shape[0])
    stumps = []
    alphas = []
    for round_index in range(int(n_estimators)):
        outcome = samme_round(X, y, w, learning_rate, seed)
        if outcome.accepted:
            stumps.append(outcome.stump)
            alphas.append(outcome.alpha)
            w = outcome.weights
        if outcome.stop:
            logger.model(f"AdaBoost stopped at round {round_index + 1} (weighted error {outcome.error:.4f})")
            break
    if not stumps:
        raise DegenerateModelError("AdaBoost: the first stump has weighted error ≥ 0.5")
    if alphas and sum(alphas) <= 0:
        raise DegenerateModelError("AdaBoost: stage weights sum to zero")
    logger.model(f"AdaBoost: {len(stumps)} stumps, learning rate {learning_rate}")
    return Model(
        family=ADABOOST,
        trees=tuple(stumps),
        tree_weights=tuple(alphas),
        learning_rate=float(learning_rate),
        base_margin=0.0,
        schema_fingerprint=d.schema.fingerprint,
        n_features=X.shape[1],
    )


def wrap_logistic(d, logistic: LogisticModel) -> Model:
    """Wrap a fitted LogisticModel into the common Model type."""
    return Model(
        family=LOGISTIC,
        trees=(),
        tree_weights=(),
        learning_rate=1.0,
        base_margin=0.0,
        schema_fingerprint=d.schema.fingerprint,
        n_features=d.schema.width,
        logistic=logistic,
    )


def save_model(m: Model, path, extra: Optional[Dict[str, Any]] = None,
               write: Callable[[Any, Dict[str, Any]], None] = write_json):
    """
    Write a model file; ``extra`` adds provenance keys (seed, dataset checksum, ...).

    ``write`` receives the path and payload; pass ``Bundle.add_json`` to stage
    the file with the rest of a command's artifacts.
    """
    payload = m.to_dict()
    if extra:
        payload.update(extra)
    write(path, payload)


def load_model(path) -> Tuple[Model, Dict[str, Any]]:
    """Read a model file, returning the model and its provenance keys."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise DataIOError(f"Model file not found: {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise DataIOError(f"Cannot read model file {path}: {e}")
    model = Model.from_dict(raw)
    provenance = {key: value for key, value in raw.items() if key not in model.to_dict()}
    return model, provenance
