"""
Stratified k-fold cross-validation and exhaustive grid search.

Candidates are enumerated as the Cartesian product of the grid axes in their
declared order; the best candidate maximises mean fold accuracy with ties
going to the earliest candidate. The winner is refit on the whole training
split.
"""

import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .ensemble import Model, predict
from .errors import ConfigError, DataIOError, OsteoriskError, SearchError, StratificationError
from .families import DEFAULT_PARAMS, REPORTED_PARAMS, fit_model, merge_params, resolve_family
from .logging_utils import get_model_logger

logger = get_model_logger(__name__)


@dataclass(frozen=True)
class ParamGrid:
    """Named axes of candidate values for one family."""
    family: str
    axes: Tuple[Tuple[str, Tuple[Any, ...]], ...]

    def __post_init__(self):
        family = resolve_family(self.family)
        object.__setattr__(self, "family", family)
        if not self.axes:
            raise ConfigError("A parameter grid needs at least one axis")
        names = [name for name, _ in self.axes]
        if len(set(names)) != len(names):
            raise ConfigError("Grid axis names must be unique")
        unknown = sorted(set(names) - set(DEFAULT_PARAMS[family]))
        if unknown:
            raise ConfigError(f"Unknown parameter(s) for {family}: {', '.join(unknown)}")
        for name, values in self.axes:
            if not values:
                raise ConfigError(f"Grid axis '{name}' has no candidate values")

    def candidates(self) -> List[Dict[str, Any]]:
        """Every assignment, first axis varying slowest."""
        names = [name for name, _ in self.axes]
        return [dict(zip(names, values)) for values in product(*(values for _, values in self.axes))]

    @property
    def size(self) -> int:
        return math.prod(len(values) for _, values in self.axes)

    def to_dict(self) -> dict:
        return {"family": self.family, "axes": {name: list(values) for name, values in self.axes}}


def load_grid(path) -> ParamGrid:
    """Read a grid file: ``{"family": ..., "axes": {param: [values]}}``."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise DataIOError(f"Grid file not found: {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise DataIOError(f"Cannot read grid file {path}: {e}")
    if not isinstance(raw, dict) or "family" not in raw or not isinstance(raw.get("axes"), dict):
        raise ConfigError(f"Grid file {path} must hold {{'family': ..., 'axes': {{...}}}}")
    axes = []
    for name, values in raw["axes"].items():
        if not isinstance(values, list):
            raise ConfigError(f"Grid axis '{name}' must be a list")
        axes.append((name, tuple(values)))
    return ParamGrid(family=raw["family"], axes=tuple(axes))


@dataclass(frozen=True)
class CandidateResult:
    """Cross-validated accuracy of one parameter assignment."""
    params: Dict[str, Any]
    fold_scores: Tuple[float, ...]
    mean: float
    std: float
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "fold_scores": list(self.fold_scores),
            "mean": None if self.failed else self.mean,
            "std": None if self.failed else self.std,
            "error": self.error,
        }


@dataclass(frozen=True, eq=False)
class CVResult:
    """Outcome of a grid search, with the refit winner."""
    family: str
    candidates: Tuple[CandidateResult, ...]
    best_index: int
    folds: int
    seed: int
    model: Optional[Model] = field(default=None, repr=False)

    @property
    def best(self) -> CandidateResult:
        return self.candidates[self.best_index]

    @property
    def best_params(self) -> Dict[str, Any]:
        return self.best.params

    def reported_comparison(self) -> dict:
        """Side-by-side of the search winner and the published winner."""
        reported = REPORTED_PARAMS.get(self.family, {})
        chosen = merge_params(self.family, self.best.params)
        matches = {name: chosen.get(name) == value for name, value in reported.items()}
        return {"reported": reported, "matches": matches, "recovered": all(matches.values())}

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "folds": self.folds,
            "seed": self.seed,
            "scoring": "accuracy",
            "stratified": True,
            "best_index": self.best_index,
            "best_params": self.best_params,
            "best_mean": self.best.mean,
            "candidates": [candidate.to_dict() for candidate in self.candidates],
            "reported_comparison": self.reported_comparison(),
        }


def stratified_kfold(labels: Sequence[int], k: int, seed: int) -> np.ndarray:
    """
    Assign every row to one of k folds, stratified by label.

    Each class is shuffled with one seeded generator (classes ascending) and
    dealt round-robin; the dealing position carries over from one class to
    the next so overall fold sizes also differ by at most one.
    """
    labels = np.asarray(labels)
    if int(k) < 2:
        raise StratificationError(f"k must be at least 2, got {k}")
    rng = np.random.default_rng(seed)
    folds = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        if members.size < k:
            raise StratificationError(f"Class {label} has {members.size} row(s), fewer than k={k}")
        shuffled = rng.permutation(members)
        folds[shuffled] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return folds


def cross_validate(d, family: str, params: Dict[str, Any], folds: np.ndarray, seed: int) -> CandidateResult:
    """Accuracy of ``params`` on every held-out fold."""
    k = int(folds.max()) + 1
    scores = []
    try:
        for fold in range(k):
            held_out = np.flatnonzero(folds == fold)
            training = np.flatnonzero(folds != fold)
            model = fit_model(family, d.subset(training), params, seed=seed, n_jobs=1)
            validation = d.subset(held_out)
            scores.append(float(np.mean(predict(model, validation.features) == validation.labels)))
    except OsteoriskError as e:
        logger.warning(f"Candidate {params} failed: {e}")
        return CandidateResult(params=params, fold_scores=tuple(scores), mean=float("nan"),
                               std=float("nan"), error=f"{type(e).__name__}: {e}")
    scores = np.array(scores)
    logger.model(f"Candidate {params}: mean accuracy {np.mean(scores):.4f} over {k} folds")
    return CandidateResult(params=params, fold_scores=tuple(float(s) for s in scores),
                           mean=float(np.mean(scores)), std=float(np.std(scores)))


def grid_search(d, grid: ParamGrid, k: int = 5, seed: int = 42, n_jobs: int = 1,
                extra_candidates: Sequence[Dict[str, Any]] = ()) -> CVResult:
    """
    Exhaustive stratified k-fold grid search with refit.

    ``extra_candidates`` are appended after the Cartesian product (used to
    make sure the published winner is always evaluated). Failed
    candidates are recorded and excluded; when every candidate fails a
    SearchError is raised.
    """
    folds = stratified_kfold(d.labels, k, seed)
    candidates = grid.candidates()
    for extra in extra_candidates:
        if extra not in candidates:
            candidates.append(dict(extra))
    logger.model(f"Grid search {grid.family}: {len(candidates)} candidates x {k} folds")

    results = Parallel(n_jobs=n_jobs)(
        delayed(cross_validate)(d, grid.family, params, folds, seed) for params in candidates
    )

    best_index = None
    for index, result in enumerate(results):
        if result.failed:
            continue
        if best_index is None or result.mean > results[best_index].mean:
            best_index = index
    if best_index is None:
        raise SearchError(f"All {len(results)} {grid.family} candidates failed")

    winner = results[best_index]
    logger.model(f"Grid search {grid.family}: best {winner.params} "
                 f"(mean accuracy {winner.mean:.4f} ± {winner.std:.4f})")
    model = fit_model(grid.family, d, winner.params, seed=seed, n_jobs=n_jobs)
    return CVResult(family=grid.family, candidates=tuple(results), best_index=best_index,
                    folds=int(k), seed=int(seed), model=model)
