"""
L1-regularised logistic regression solved by proximal gradient descent.

Objective (liblinear convention, data term scaled by C):

    ‖w‖₁ + C · Σᵢ log(1 + exp(−ỹᵢ (w·x̃ᵢ + b))),   ỹ ∈ {−1, +1}

x̃ are the features standardised with the training mean and population
standard deviation; the intercept b is not penalised. Zero-variance features
get scale 1 and weight exactly 0. Weights are reported in standardised space;
prediction applies the same standardisation.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.special import expit

from .errors import FitError, PredictionError
from .logging_utils import get_model_logger

logger = get_model_logger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 10000


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Fitted sparse logistic model with its internal standardisation."""
    weights: np.ndarray
    intercept: float
    means: np.ndarray
    scales: np.ndarray
    C: float
    converged: bool
    n_iter: int = 0
    objective_history: Tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.intercept):
            raise FitError("Logistic weights and intercept must be finite")
        if not np.all(self.scales > 0):
            raise FitError("Standardisation scales must be positive")

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "C": self.C,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "standardized": True,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LogisticModel":
        return cls(
            weights=np.array(raw["weights"], dtype=float),
            intercept=float(raw["intercept"]),
            means=np.array(raw["means"], dtype=float),
            scales=np.array(raw["scales"], dtype=float),
            C=float(raw["C"]),
            converged=bool(raw["converged"]),
            n_iter=int(raw.get("n_iter", 0)),
        )


def standardize(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column means and scales (population std, 1 for constant columns) and the scaled matrix."""
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales = np.where(scales > 0, scales, 1.0)
    return (X - means) / scales, means, scales


def smooth_loss(w: np.ndarray, b: float, Xs: np.ndarray, ys: np.ndarray, C: float) -> float:
    """C · Σ log(1 + exp(−ỹ z)), computed stably."""
    z = Xs @ w + b
    return float(C * np.sum(np.logaddexp(0.0, -ys * z)))


def smooth_gradient(w: np.ndarray, b: float, Xs: np.ndarray, ys: np.ndarray, C: float) -> Tuple[np.ndarray, float]:
    """Gradient of the smooth term with respect to (w, b)."""
    z = Xs @ w + b
    coefficient = -C * ys * expit(-ys * z)
    return Xs.T @ coefficient, float(np.sum(coefficient))


def objective(w: np.ndarray, b: float, Xs: np.ndarray, ys: np.ndarray, C: float) -> float:
    """Full objective ‖w‖₁ + smooth term."""
    return float(np.sum(np.abs(w))) + smooth_loss(w, b, Xs, ys, C)


def _soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def _fit_standardized(Xs: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int,
                      active: np.ndarray):
    ys = np.where(y == 1, 1.0, -1.0)
    n1 = float(np.sum(y == 1))
    n0 = float(y.size - n1)
    w = np.zeros(Xs.shape[1])
    # start from the intercept-only optimum when both classes are present
    b = float(np.log(n1 / n0)) if n1 > 0 and n0 > 0 else 0.0

    # Lipschitz bound of the smooth term over (w, b): C/4 · (‖X‖₂² + n)
    spectral = np.linalg.norm(Xs, 2) ** 2 if Xs.size else 0.0
    lipschitz = 0.25 * C * (spectral + Xs.shape[0])
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0

    current = objective(w, b, Xs, ys, C)
    history = [current]
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        grad_w, grad_b = smooth_gradient(w, b, Xs, ys, C)
        f_old = smooth_loss(w, b, Xs, ys, C)
        step *= 2.0
        while True:
            w_new = np.where(active, _soft_threshold(w - step * grad_w, step), 0.0)
            b_new = b - step * grad_b
            dw = w_new - w
            db = b_new - b
            bound = f_old + grad_w @ dw + grad_b * db + (dw @ dw + db * db) / (2.0 * step)
            if smooth_loss(w_new, b_new, Xs, ys, C) <= bound or step < 1e-300:
                break
            step *= 0.5
        new_objective = objective(w_new, b_new, Xs, ys, C)
        if new_objective > current:
            # rounding can push a zero-length step above the old value; keep the old
            # iterate and do not count the stall as convergence
            history.append(current)
            continue
        update = max(float(np.max(np.abs(w_new - w))) if w.size else 0.0, abs(b_new - b))
        w, b, current = w_new, b_new, new_objective
        history.append(current)
        if update < tol:
            converged = True
            break
    return w, b, converged, iteration, history


def fit_logistic_l1(d, C: float = 0.01, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> LogisticModel:
    """
    Fit L1-penalised logistic regression on a Dataset.

    Non-convergence within max_iter is not an error: the model is returned
    with ``converged=False`` and a warning is logged.
    """
    if not C > 0:
        raise FitError(f"C must be positive, got {C}")
    if not tol > 0 or int(max_iter) < 1:
        raise FitError("tol must be positive and max_iter at least 1")
    X = np.asarray(d.features, dtype=float)
    y = np.asarray(d.labels, dtype=np.int64)
    Xs, means, scales = standardize(X)
    active = X.std(axis=0) > 0

    w, b, converged, n_iter, history = _fit_standardized(Xs, y, C, tol, int(max_iter), active)
    if converged:
        logger.model(f"L1 logistic converged after {n_iter} iterations "
                     f"({int(np.sum(w != 0))}/{w.size} nonzero weights, objective {history[-1]:.6f})")
    else:
        logger.warning(f"L1 logistic did not converge within {max_iter} iterations")
    return LogisticModel(weights=w, intercept=b, means=means, scales=scales, C=float(C),
                         converged=converged, n_iter=n_iter, objective_history=tuple(history))


def decision_function(m: LogisticModel, X) -> np.ndarray:
    """Standardised dot product plus intercept for every row."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != m.n_features:
        raise PredictionError(f"Expected width {m.n_features}, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise PredictionError("Input contains non-finite values")
    z = ((X - m.means) / m.scales) @ m.weights + m.intercept
    return z[0] if single else z


def predict_proba_logistic(m: LogisticModel, x) -> np.ndarray:
    """Probability pair (P(0), P(1)) for a vector, or one pair per row for a matrix."""
    p1 = expit(decision_function(m, x))
    return np.stack([1.0 - p1, p1], axis=-1)
