"""
Explanations for fitted models.

- tree_shap: exact path-dependent Shapley values of tree ensembles in the
  model's output space (margin for boosted families and AdaBoost, averaged
  positive-class probability for random forests)
- shap_by_enumeration: exhaustive coalition oracle with the same
  cover-weighted value function, for checking tree_shap on small trees
- lime_explain: weighted ridge surrogate fitted on perturbations around one instance
- permutation_importance: score drop when one column is shuffled
- concordance: agreement between SHAP and permutation rankings
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg
from scipy.stats import spearmanr

from .data import CONTINUOUS, Dataset, FeatureStats
from .ensemble import Model, margin, predict, predict_proba
from .errors import ConfigError, InputError, KernelWidthError, PredictionError, UnsupportedFamilyError
from .metrics import compute_metrics, roc_and_auc
from .tree import Tree

logger = logging.getLogger(__name__)

WATERFALL_TOP = 9
OTHERS = "others"


@dataclass(frozen=True, eq=False)
class Attribution:
    """Baseline plus per-feature contributions of one instance; baseline + Σ = output."""
    baseline: float
    contributions: np.ndarray
    output: float

    @property
    def residual(self) -> float:
        return float(self.baseline + np.sum(self.contributions) - self.output)


class _Path:
    """
    The unique-feature path of the path-dependent recursion: per element the
    feature, the fraction of "zero" (feature absent) and "one" (feature
    present) paths flowing through, and the permutation weight.
    """

    __slots__ = ("features", "zeros", "ones", "weights")

    def __init__(self, features=None, zeros=None, ones=None, weights=None):
        self.features = features or []
        self.zeros = zeros or []
        self.ones = ones or []
        self.weights = weights or []

    def copy(self) -> "_Path":
        return _Path(list(self.features), list(self.zeros), list(self.ones), list(self.weights))

    @property
    def depth(self) -> int:
        return len(self.features) - 1

    def extend(self, zero: float, one: float, feature: int):
        depth = len(self.features)
        self.features.append(feature)
        self.zeros.append(zero)
        self.ones.append(one)
        self.weights.append(1.0 if depth == 0 else 0.0)
        w = self.weights
        for i in range(depth - 1, -1, -1):
            w[i + 1] += one * w[i] * (i + 1) / (depth + 1)
            w[i] = zero * w[i] * (depth - i) / (depth + 1)

    def unwind(self, index: int):
        depth = self.depth
        one = self.ones[index]
        zero = self.zeros[index]
        w = self.weights
        next_one = w[depth]
        for i in range(depth - 1, -1, -1):
            if one != 0:
                previous = w[i]
                w[i] = next_one * (depth + 1) / ((i + 1) * one)
                next_one = previous - w[i] * zero * (depth - i) / (depth + 1)
            else:
                w[i] = w[i] * (depth + 1) / (zero * (depth - i))
        for i in range(index, depth):
            self.features[i] = self.features[i + 1]
            self.zeros[i] = self.zeros[i + 1]
            self.ones[i] = self.ones[i + 1]
        for values in (self.features, self.zeros, self.ones, self.weights):
            values.pop()

    def unwound_sum(self, index: int) -> float:
        depth = self.depth
        one = self.ones[index]
        zero = self.zeros[index]
        w = self.weights
        next_one = w[depth]
        total = 0.0
        for i in range(depth - 1, -1, -1):
            if one != 0:
                tmp = next_one * (depth + 1) / ((i + 1) * one)
                total += tmp
                next_one = w[i] - tmp * zero * (depth - i) / (depth + 1)
            else:
                total += (w[i] / zero) / ((depth - i) / (depth + 1))
        return total


def expected_value(t: Tree, values: np.ndarray) -> float:
    """Cover-weighted mean of the leaf values: the tree's output with every feature absent."""
    a = t.arrays
    leaves = a["left"] < 0
    return float(np.sum(a["cover"][leaves] * values[leaves]) / a["cover"][t.root])


def tree_shap_single(t: Tree, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Path-dependent Shapley values of one tree whose node outputs are ``values``."""
    a = t.arrays
    feature, threshold, left, right, cover = a["feature"], a["threshold"], a["left"], a["right"], a["cover"]
    phi = np.zeros(t.n_features)

    def recurse(node: int, path: _Path, zero: float, one: float, split_feature: int):
        path = path.copy()
        path.extend(zero, one, split_feature)
        if left[node] < 0:
            for i in range(1, path.depth + 1):
                w = path.unwound_sum(i)
                phi[path.features[i]] += w * (path.ones[i] - path.zeros[i]) * values[node]
            return

        j = feature[node]
        hot, cold = (left[node], right[node]) if x[j] < threshold[node] else (right[node], left[node])
        incoming_zero = 1.0
        incoming_one = 1.0
        # a feature seen higher up the path is unwound and re-extended here
        for k in range(1, path.depth + 1):
            if path.features[k] == j:
                incoming_zero = path.zeros[k]
                incoming_one = path.ones[k]
                path.unwind(k)
                break
        recurse(hot, path, incoming_zero * cover[hot] / cover[node], incoming_one, j)
        recurse(cold, path, incoming_zero * cover[cold] / cover[node], 0.0, j)

    recurse(t.root, _Path(), 1.0, 1.0, -1)
    return phi


def _check_explainable(m: Model):
    if not m.is_tree_family:
        raise UnsupportedFamilyError(f"TreeSHAP needs a tree-based model, got '{m.family}' (use lime or pfi)")


def _vector(m: Model, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (m.n_features,):
        raise PredictionError(f"Expected a vector of width {m.n_features}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise PredictionError("Feature vector contains non-finite values")
    return x


def tree_shap(m: Model, x) -> Attribution:
    """
    Exact path-dependent Shapley attribution of a tree ensemble at ``x``.

    Per-tree values are scaled by the same factor the ensemble applies to that
    tree's output (learning rate, AdaBoost stage weight share, 1/T for forests)
    and summed.
    """
    _check_explainable(m)
    x = _vector(m, x)
    contributions = np.zeros(m.n_features)
    baseline = m.base_margin
    for index, t in enumerate(m.trees):
        scale = m.tree_scale(index)
        values = m.leaf_scalars(t)
        baseline += scale * expected_value(t, values)
        contributions += scale * tree_shap_single(t, values, x)
    return Attribution(baseline=float(baseline), contributions=contributions, output=float(margin(m, x)))


def conditional_expectation(t: Tree, values: np.ndarray, x: np.ndarray, present: frozenset) -> float:
    """Tree output when only the features in ``present`` are known; absent splits follow cover ratios."""
    a = t.arrays

    def walk(node: int) -> float:
        if a["left"][node] < 0:
            return float(values[node])
        j = a["feature"][node]
        if j in present:
            return walk(a["left"][node] if x[j] < a["threshold"][node] else a["right"][node])
        l, r = a["left"][node], a["right"][node]
        return (a["cover"][l] * walk(l) + a["cover"][r] * walk(r)) / a["cover"][node]

    return walk(t.root)


def shap_by_enumeration(t: Tree, values: np.ndarray, x) -> np.ndarray:
    """Shapley values by enumerating every coalition of the tree's split features."""
    x = np.asarray(x, dtype=float)
    players = sorted(t.used_features())
    n = len(players)
    phi = np.zeros(t.n_features)
    cache: Dict[frozenset, float] = {}

    def v(coalition: frozenset) -> float:
        if coalition not in cache:
            cache[coalition] = conditional_expectation(t, values, x, coalition)
        return cache[coalition]

    for player in players:
        others = [p for p in players if p != player]
        for size in range(n):
            weight = math.factorial(size) * math.factorial(n - size - 1) / math.factorial(n)
            for subset in combinations(others, size):
                coalition = frozenset(subset)
                phi[player] += weight * (v(coalition | {player}) - v(coalition))
    return phi


@dataclass(frozen=True, eq=False)
class ShapSummary:
    """Per-row attributions over a dataset and the per-feature mean |contribution|."""
    feature_names: Tuple[str, ...]
    matrix: np.ndarray
    baseline: float
    outputs: np.ndarray
    row_ids: np.ndarray
    output_space: str

    @property
    def mean_abs(self) -> np.ndarray:
        return np.mean(np.abs(self.matrix), axis=0)

    def ranking(self) -> List[Tuple[str, float]]:
        """Features by mean |contribution| descending, ties by column order."""
        means = self.mean_abs
        order = sorted(range(len(means)), key=lambda j: (-means[j], j))
        return [(self.feature_names[j], float(means[j])) for j in order]

    def to_dict(self) -> dict:
        return {
            "output_space": self.output_space,
            "baseline": self.baseline,
            "rows": int(self.matrix.shape[0]),
            "ranking": [{"feature": name, "mean_abs": value} for name, value in self.ranking()],
        }

    def matrix_frame(self, features: np.ndarray) -> pd.DataFrame:
        """Long-form (row, feature, feature value, contribution) table for beeswarm plots."""
        rows = []
        for i in range(self.matrix.shape[0]):
            for j, name in enumerate(self.feature_names):
                rows.append({"row_id": int(self.row_ids[i]), "feature": name,
                             "feature_value": float(features[i, j]), "shap": float(self.matrix[i, j])})
        return pd.DataFrame(rows, columns=["row_id", "feature", "feature_value", "shap"])


def _shap_rows(m: Model, X: np.ndarray) -> List[Attribution]:
    return [tree_shap(m, x) for x in X]


def shap_summary(m: Model, d: Dataset, n_jobs: int = 1) -> ShapSummary:
    """tree_shap for every row of ``d``; rows are processed in contiguous chunks."""
    _check_explainable(m)
    X = d.features
    chunks = np.array_split(np.arange(X.shape[0]), max(1, min(int(n_jobs), X.shape[0])))
    parts = Parallel(n_jobs=n_jobs)(delayed(_shap_rows)(m, X[chunk]) for chunk in chunks)
    attributions = [a for part in parts for a in part]
    worst = max(abs(a.residual) for a in attributions)
    if worst > 1e-6:
        logger.warning(f"TreeSHAP local accuracy residual {worst:.3e} exceeds 1e-6")
    return ShapSummary(
        feature_names=tuple(d.feature_names),
        matrix=np.array([a.contributions for a in attributions]),
        baseline=attributions[0].baseline,
        outputs=np.array([a.output for a in attributions]),
        row_ids=np.asarray(d.row_ids),
        output_space=m.output_space,
    )


@dataclass(frozen=True)
class WaterfallRow:
    feature: str
    feature_value: Optional[float]
    contribution: float
    cumulative: float


@dataclass(frozen=True)
class Waterfall:
    baseline: float
    output: float
    rows: Tuple[WaterfallRow, ...]

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "output": self.output,
            "rows": [
                {"feature": r.feature, "feature_value": r.feature_value,
                 "contribution": r.contribution, "cumulative": r.cumulative}
                for r in self.rows
            ],
        }


def waterfall_from_attribution(a: Attribution, names: Sequence[str], x: Optional[np.ndarray] = None,
                               top: int = WATERFALL_TOP) -> Waterfall:
    """
    Contributions by |value| descending with running totals from the baseline.

    Zero contributions are dropped; beyond the first ``top`` rows the rest are
    merged into one "others" row. With no nonzero contribution the result is
    a single "others" row at the baseline.
    """
    nonzero = [j for j in range(len(names)) if a.contributions[j] != 0.0]
    order = sorted(nonzero, key=lambda j: (-abs(a.contributions[j]), j))
    rows = []
    running = a.baseline
    for j in order[:top]:
        running += float(a.contributions[j])
        rows.append(WaterfallRow(feature=names[j], feature_value=None if x is None else float(x[j]),
                                 contribution=float(a.contributions[j]), cumulative=float(running)))
    rest = order[top:]
    if rest or not rows:
        bucket = float(sum(a.contributions[j] for j in rest))
        running += bucket
        rows.append(WaterfallRow(feature=OTHERS, feature_value=None, contribution=bucket, cumulative=float(running)))
    return Waterfall(baseline=float(a.baseline), output=float(a.output), rows=tuple(rows))


def shap_waterfall(m: Model, x, names: Optional[Sequence[str]] = None) -> Waterfall:
    """Waterfall of tree_shap at ``x``."""
    a = tree_shap(m, x)
    names = list(names) if names is not None else [f"f{j}" for j in range(m.n_features)]
    return waterfall_from_attribution(a, names, np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    kernel_width: Optional[float] = None
    ridge_penalty: float = 1.0
    top_k: int = 10
    seed: int = 0

    def __post_init__(self):
        if int(self.n_samples) < 2:
            raise ConfigError("LIME n_samples must be at least 2")
        if self.kernel_width is not None and not self.kernel_width > 0:
            raise ConfigError("LIME kernel_width must be positive")
        if not self.ridge_penalty > 0:
            raise ConfigError("LIME ridge_penalty must be positive")
        if int(self.top_k) < 1:
            raise ConfigError("LIME top_k must be positive")

    def width_for(self, n_features: int) -> float:
        return self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(n_features)

    def to_dict(self, n_features: int) -> dict:
        return {"n_samples": int(self.n_samples), "kernel_width": self.width_for(n_features),
                "ridge_penalty": self.ridge_penalty, "top_k": int(self.top_k), "seed": int(self.seed)}


@dataclass(frozen=True, eq=False)
class LimeExplanation:
    instance: np.ndarray
    predicted_class: int
    predicted_probability: float
    feature_weights: Tuple[Tuple[str, float], ...]
    intercept: float
    surrogate_r2: float
    config: LimeConfig
    feature_names: Tuple[str, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "instance": {name: float(v) for name, v in zip(self.feature_names, self.instance)},
            "predicted_class": self.predicted_class,
            "predicted_probability": self.predicted_probability,
            "feature_weights": [{"feature": name, "weight": weight} for name, weight in self.feature_weights],
            "intercept": self.intercept,
            "surrogate_r2": self.surrogate_r2,
            "config": self.config.to_dict(len(self.feature_names)),
        }


def _perturb(x: np.ndarray, stats: FeatureStats, n: int, rng: np.random.Generator) -> np.ndarray:
    """Row 0 is x itself; continuous columns get Gaussian noise, coded columns are resampled."""
    samples = np.tile(x, (n, 1))
    for j in range(stats.width):
        if stats.kinds[j] == CONTINUOUS:
            samples[1:, j] = x[j] + rng.normal(0.0, stats.stds[j], size=n - 1)
        else:
            frequencies = stats.frequencies[j]
            samples[1:, j] = rng.choice(frequencies.size, size=n - 1, p=frequencies)
    return samples


def _interpretable(samples: np.ndarray, x: np.ndarray, stats: FeatureStats) -> Tuple[np.ndarray, np.ndarray]:
    """
    Surrogate design matrix and distance coordinates.

    Continuous columns are standardised with the training statistics; coded
    columns become 1 when the sample keeps x's category and 0 otherwise.
    """
    scales = np.where(stats.stds > 0, stats.stds, 1.0)
    design = np.empty_like(samples)
    offsets = np.empty_like(samples)
    for j in range(stats.width):
        if stats.kinds[j] == CONTINUOUS:
            design[:, j] = (samples[:, j] - stats.means[j]) / scales[j]
            offsets[:, j] = (samples[:, j] - x[j]) / scales[j]
        else:
            same = samples[:, j] == x[j]
            design[:, j] = same.astype(float)
            offsets[:, j] = (~same).astype(float)
    return design, offsets


def weighted_ridge(X: np.ndarray, y: np.ndarray, w: np.ndarray, penalty: float) -> Tuple[np.ndarray, float]:
    """Ridge regression with sample weights; the intercept is not penalised."""
    total = np.sum(w)
    x_mean = w @ X / total
    y_mean = float(w @ y / total)
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ (Xc * w[:, None]) + penalty * np.eye(X.shape[1])
    coef = linalg.solve(gram, Xc.T @ (w * yc), assume_a="pos")
    return coef, y_mean - float(x_mean @ coef)


def weighted_r2(y: np.ndarray, fitted: np.ndarray, w: np.ndarray) -> float:
    mean = np.sum(w * y) / np.sum(w)
    residual = float(np.sum(w * (y - fitted) ** 2))
    spread = float(np.sum(w * (y - mean) ** 2))
    if spread <= 1e-20:
        return 1.0 if residual <= 1e-20 else 0.0
    return 1.0 - residual / spread


def lime_explain(predict_fn: Callable[[np.ndarray], np.ndarray], x, stats: FeatureStats,
                 cfg: LimeConfig = LimeConfig()) -> LimeExplanation:
    """
    Local surrogate explanation of ``predict_fn`` (rows -> probability pairs) at ``x``.

    The explained class is the predicted one (positive when P(1) ≥ 0.5).
    Sample weights are sqrt(exp(-d² / width²)) on the standardised distance
    to x. Raises KernelWidthError when the perturbations all get ~0 weight.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (stats.width,) or not np.all(np.isfinite(x)):
        raise InputError(f"Instance must be a finite vector of width {stats.width}")
    rng = np.random.default_rng(cfg.seed)
    width = cfg.width_for(stats.width)

    samples = _perturb(x, stats, int(cfg.n_samples), rng)
    probabilities = np.asarray(predict_fn(samples), dtype=float)
    if probabilities.shape != (samples.shape[0], 2) or not np.all(np.isfinite(probabilities)):
        raise PredictionError("The prediction callback must return one finite probability pair per row")
    predicted_class = int(probabilities[0, 1] >= 0.5)
    target = probabilities[:, predicted_class]

    design, offsets = _interpretable(samples, x, stats)
    distances = np.sqrt(np.sum(offsets ** 2, axis=1))
    weights = np.sqrt(np.exp(-(distances ** 2) / width ** 2))
    if np.sum(weights[1:]) < 1e-8:
        raise KernelWidthError(f"All perturbation weights are ~0 with kernel width {width:.4g}; use a larger width")

    coef, intercept = weighted_ridge(design, target, weights, cfg.ridge_penalty)
    r2 = weighted_r2(target, design @ coef + intercept, weights)
    order = sorted(range(stats.width), key=lambda j: (-abs(coef[j]), j))[:int(cfg.top_k)]
    logger.debug(f"LIME surrogate R² {r2:.4f} with kernel width {width:.4f}")
    return LimeExplanation(
        instance=x,
        predicted_class=predicted_class,
        predicted_probability=float(probabilities[0, predicted_class]),
        feature_weights=tuple((stats.names[j], float(coef[j])) for j in order),
        intercept=float(intercept),
        surrogate_r2=float(r2),
        config=cfg,
        feature_names=tuple(stats.names),
    )


def _score_accuracy(m, X, y):
    return float(np.mean(predict(m, X) == y))


def _score_f1(m, X, y):
    return compute_metrics(y, predict(m, X)).per_class[1].f1


def _score_precision(m, X, y):
    return compute_metrics(y, predict(m, X)).per_class[1].precision


def _score_recall(m, X, y):
    return compute_metrics(y, predict(m, X)).per_class[1].recall


def _score_auc(m, X, y):
    return roc_and_auc(y, predict_proba(m, X)[:, 1])[1]


SCORERS = {
    "accuracy": _score_accuracy,
    "f1": _score_f1,
    "precision": _score_precision,
    "recall": _score_recall,
    "auc": _score_auc,
}


@dataclass(frozen=True, eq=False)
class PfiReport:
    feature_names: Tuple[str, ...]
    importances: np.ndarray  # (features, repeats)
    baseline_score: float
    metric: str
    n_repeats: int
    seed: int

    @property
    def means(self) -> np.ndarray:
        return self.importances.mean(axis=1)

    @property
    def stds(self) -> np.ndarray:
        return self.importances.std(axis=1)

    def ranking(self) -> List[Tuple[str, float, float]]:
        means, stds = self.means, self.stds
        order = sorted(range(len(means)), key=lambda j: (-means[j], j))
        return [(self.feature_names[j], float(means[j]), float(stds[j])) for j in order]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "baseline_score": self.baseline_score,
            "n_repeats": self.n_repeats,
            "seed": self.seed,
            "ranking": [{"feature": name, "mean": mean, "std": std} for name, mean, std in self.ranking()],
        }


def _permuted_score(m: Model, X: np.ndarray, y: np.ndarray, scorer, column: int, repeat: int, seed: int) -> float:
    rng = np.random.default_rng([seed, column, repeat])
    shuffled = X.copy()
    shuffled[:, column] = X[rng.permutation(X.shape[0]), column]
    return scorer(m, shuffled, y)


def permutation_importance(m: Model, d: Dataset, metric: str = "accuracy", n_repeats: int = 10,
                           seed: int = 42, n_jobs: int = 1) -> PfiReport:
    """
    Mean and standard deviation of (baseline score − shuffled score) per feature.

    Every (feature, repeat) shuffle uses its own generator seeded by
    (seed, feature, repeat), so results do not depend on n_jobs.
    """
    if metric not in SCORERS:
        raise ConfigError(f"Unknown metric '{metric}'. Use one of: {', '.join(SCORERS)}")
    if int(n_repeats) < 1:
        raise ConfigError("n_repeats must be at least 1")
    scorer = SCORERS[metric]
    X = np.array(d.features)
    y = d.labels
    baseline = scorer(m, X, y)
    tasks = [(j, r) for j in range(X.shape[1]) for r in range(int(n_repeats))]
    scores = Parallel(n_jobs=n_jobs)(
        delayed(_permuted_score)(m, X, y, scorer, j, r, seed) for j, r in tasks
    )
    importances = baseline - np.array(scores).reshape(X.shape[1], int(n_repeats))
    return PfiReport(feature_names=tuple(d.feature_names), importances=importances, baseline_score=float(baseline),
                     metric=metric, n_repeats=int(n_repeats), seed=int(seed))


def _ranks(values: np.ndarray) -> np.ndarray:
    """1 = most important; ties by column order."""
    order = sorted(range(len(values)), key=lambda j: (-values[j], j))
    ranks = np.empty(len(values), dtype=np.int64)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def concordance(summary: ShapSummary, pfi: PfiReport, top: int = 3) -> dict:
    """Per-feature ranks under both methods, their Spearman correlation and top-k overlap."""
    if tuple(summary.feature_names) != tuple(pfi.feature_names):
        raise InputError("SHAP summary and permutation report cover different features")
    shap_ranks = _ranks(summary.mean_abs)
    pfi_ranks = _ranks(pfi.means)
    rho = spearmanr(summary.mean_abs, pfi.means).correlation
    shap_top = {name for name, r in zip(summary.feature_names, shap_ranks) if r <= top}
    pfi_top = {name for name, r in zip(pfi.feature_names, pfi_ranks) if r <= top}
    return {
        "features": [
            {"feature": name, "shap_rank": int(sr), "pfi_rank": int(pr)}
            for name, sr, pr in sorted(zip(summary.feature_names, shap_ranks, pfi_ranks), key=lambda t: t[1])
        ],
        "spearman": None if rho is None or not np.isfinite(rho) else float(rho),
        "top": top,
        "top_overlap": sorted(shap_top & pfi_top),
        "same_leader": bool(np.argmin(shap_ranks) == np.argmin(pfi_ranks)),
    }
