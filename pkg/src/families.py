"""
Model family registry: CLI aliases, per-family parameter names with their
defaults, the published tuned values, and ``fit_model`` which validates a
parameter assignment and dispatches to the right learner.
"""

import logging
from dataclasses import replace
from typing import Any, Dict, Optional

from .ensemble import (
    ADABOOST,
    GRADIENT_BOOSTING,
    LGBM,
    LOGISTIC,
    RANDOM_FOREST,
    XGB,
    BoostParams,
    Model,
    fit_adaboost,
    fit_boosted,
    fit_random_forest,
    wrap_logistic,
)
from .errors import ConfigError, UnsupportedFamilyError
from .linear import fit_logistic_l1
from .tree import GINI, MAX_FEATURES_ALL, MAX_FEATURES_SQRT, SECOND_ORDER, TreeParams

logger = logging.getLogger(__name__)

ALIASES = {
    "rf": RANDOM_FOREST,
    "lr": LOGISTIC,
    "xgb": XGB,
    "ab": ADABOOST,
    "lgbm": LGBM,
    "gb": GRADIENT_BOOSTING,
}

# Display order of the comparison table and the pipeline
FAMILY_ORDER = (XGB, LGBM, ADABOOST, GRADIENT_BOOSTING, RANDOM_FOREST, LOGISTIC)

DEFAULT_PARAMS: Dict[str, Dict[str, Any]] = {
    RANDOM_FOREST: {
        "n_estimators": 100,
        "max_depth": 4,
        "max_features": "sqrt",
        "criterion": "gini",
        "bootstrap": True,
    },
    LOGISTIC: {
        "C": 0.01,
        "penalty": "l1",
        "solver": "liblinear",
        "tol": 1e-6,
        "max_iter": 10000,
    },
    XGB: {
        "n_estimators": 100,
        "learning_rate": 0.3,
        "max_depth": 3,
        "reg_lambda": 0.0,
        "reg_alpha": 1.0,
        "min_child_weight": 1.0,
        "subsample": 1.0,
        "colsample_bytree": 1.0,
    },
    LGBM: {
        "n_estimators": 100,
        "learning_rate": 0.1,
        "max_depth": 10,
        "colsample_bytree": 0.8,
        "num_leaves": 31,
        "reg_lambda": 0.0,
        "reg_alpha": 0.0,
        "min_child_weight": 1e-3,
        "subsample": 1.0,
    },
    GRADIENT_BOOSTING: {
        "n_estimators": 500,
        "learning_rate": 0.1,
        "max_depth": 8,
        "subsample": 1.0,
        "min_child_weight": 1.0,
        "reg_lambda": 0.0,
    },
    ADABOOST: {
        "n_estimators": 50,
        "learning_rate": 1.0,
        "algorithm": "SAMME",
    },
}

# Winning hyperparameters as published, per family
REPORTED_PARAMS: Dict[str, Dict[str, Any]] = {
    RANDOM_FOREST: {"criterion": "gini", "max_depth": 4, "max_features": "sqrt", "n_estimators": 100},
    LOGISTIC: {"C": 0.01, "penalty": "l1", "solver": "liblinear"},
    XGB: {"max_depth": 3, "reg_lambda": 0, "min_child_weight": 1, "reg_alpha": 1},
    LGBM: {"learning_rate": 0.1, "max_depth": 10, "colsample_bytree": 0.8, "n_estimators": 100},
    GRADIENT_BOOSTING: {"learning_rate": 0.1, "max_depth": 8, "n_estimators": 500},
    ADABOOST: {"algorithm": "SAMME", "learning_rate": 1, "n_estimators": 50},
}

# Test-set accuracy (%), precision, recall and F1 as published, per family
REPORTED_METRICS: Dict[str, Dict[str, float]] = {
    RANDOM_FOREST: {"accuracy": 84.00, "precision": 0.88, "recall": 0.84, "f1": 0.84},
    LOGISTIC: {"accuracy": 83.67, "precision": 0.88, "recall": 0.84, "f1": 0.83},
    XGB: {"accuracy": 91.0, "precision": 0.92, "recall": 0.91, "f1": 0.90},
    ADABOOST: {"accuracy": 89.00, "precision": 0.90, "recall": 0.89, "f1": 0.88},
    LGBM: {"accuracy": 90.05, "precision": 0.91, "recall": 0.90, "f1": 0.90},
    GRADIENT_BOOSTING: {"accuracy": 89.0, "precision": 0.89, "recall": 0.89, "f1": 0.89},
}

_INTEGER_PARAMS = {"n_estimators", "max_depth", "num_leaves", "max_iter"}
_POSITIVE_FRACTIONS = {"subsample", "colsample_bytree"}


def resolve_family(name: str) -> str:
    """Map a CLI alias or a full family name onto the family name."""
    key = (name or "").strip().lower()
    if key in ALIASES:
        return ALIASES[key]
    if key in DEFAULT_PARAMS:
        return key
    raise ConfigError(f"Unknown model family '{name}'. Use one of: {', '.join(ALIASES)}")


def merge_params(family: str, overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Defaults of ``family`` updated with ``overrides``, validated."""
    params = dict(DEFAULT_PARAMS[family])
    unknown = sorted(set(overrides or {}) - set(params))
    if unknown:
        raise ConfigError(f"Unknown parameter(s) for {family}: {', '.join(unknown)}")
    params.update(overrides or {})
    return validate_params(family, params)


def validate_params(family: str, params: Dict[str, Any]) -> Dict[str, Any]:
    """Type-check and range-check one complete parameter assignment."""
    checked = dict(params)
    for name, value in params.items():
        if isinstance(value, bool) and name != "bootstrap":
            raise ConfigError(f"{family}.{name} must be a number, got {value!r}")
        if name in _INTEGER_PARAMS:
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            minimum = 0 if name == "max_depth" else 1
            if not isinstance(value, int) or value < minimum:
                raise ConfigError(f"{family}.{name} must be an integer >= {minimum}, got {value!r}")
            checked[name] = value
        elif name in _POSITIVE_FRACTIONS:
            if not isinstance(value, (int, float)) or not 0 < value <= 1:
                raise ConfigError(f"{family}.{name} must lie in (0, 1], got {value!r}")
            checked[name] = float(value)
        elif name in ("learning_rate", "C", "tol", "reg_lambda", "reg_alpha", "min_child_weight"):
            if not isinstance(value, (int, float)) or value < 0:
                raise ConfigError(f"{family}.{name} must be a nonnegative number, got {value!r}")
            if name in ("C", "tol") and value == 0:
                raise ConfigError(f"{family}.{name} must be positive")
            checked[name] = float(value)

    if family == RANDOM_FOREST:
        if checked["criterion"] != GINI:
            raise ConfigError("random_forest supports criterion 'gini' only")
        if checked["max_features"] not in (MAX_FEATURES_SQRT, MAX_FEATURES_ALL):
            raise ConfigError("random_forest max_features must be 'sqrt' or 'all'")
        if not isinstance(checked["bootstrap"], bool):
            raise ConfigError("random_forest bootstrap must be true or false")
    if family == LOGISTIC and checked["penalty"] != "l1":
        raise ConfigError("logistic supports penalty 'l1' only")
    if family == ADABOOST and checked["algorithm"] != "SAMME":
        raise ConfigError("adaboost supports algorithm 'SAMME' only")
    return checked


def boost_params(family: str, params: Dict[str, Any], seed: int) -> BoostParams:
    """Translate a validated boosting assignment into BoostParams."""
    tree = TreeParams(
        max_depth=params["max_depth"],
        min_child_weight=params.get("min_child_weight", 0.0),
        reg_lambda=params.get("reg_lambda", 0.0),
        reg_alpha=params.get("reg_alpha", 0.0),
        max_leaves=params.get("num_leaves", 31),
        criterion=SECOND_ORDER,
        seed=seed,
    )
    return BoostParams(
        n_estimators=params["n_estimators"],
        learning_rate=params["learning_rate"],
        subsample=params.get("subsample", 1.0),
        colsample_bytree=params.get("colsample_bytree", 1.0),
        tree=tree,
        seed=seed,
    )


def fit_model(family: str, d, params: Optional[Dict[str, Any]] = None, seed: int = 42, n_jobs: int = 1) -> Model:
    """
    Fit one model of ``family`` on Dataset ``d``.

    ``params`` may be partial; missing names take the family defaults. The
    validated assignment is stored in ``Model.params``.
    """
    family = resolve_family(family)
    merged = merge_params(family, params)
    logger.debug(f"Fitting {family} with {merged}")

    if family == RANDOM_FOREST:
        tree = TreeParams(max_depth=merged["max_depth"], criterion=GINI,
                          max_features=merged["max_features"], seed=seed)
        model = fit_random_forest(d, merged["n_estimators"], tree, seed,
                                  bootstrap=merged["bootstrap"], n_jobs=n_jobs)
    elif family == LOGISTIC:
        model = wrap_logistic(d, fit_logistic_l1(d, C=merged["C"], tol=merged["tol"], max_iter=merged["max_iter"]))
    elif family == ADABOOST:
        model = fit_adaboost(d, merged["n_estimators"], merged["learning_rate"], seed)
    elif family in (XGB, LGBM, GRADIENT_BOOSTING):
        model = fit_boosted(d, boost_params(family, merged, seed), family)
    else:
        raise UnsupportedFamilyError(f"No learner registered for '{family}'")

    return replace(model, params=merged)
