#!/usr/bin/env python3
"""
Tests for L1-regularised logistic regression.
"""

import itertools
import math
import sys
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np

# Add the repository root to the path so `src` imports resolve
sys.path.insert(0, str(Path(__file__).parent))

from src.errors import FitError, PredictionError
from src.linear import (
    LogisticModel,
    decision_function,
    fit_logistic_l1,
    predict_proba_logistic,
    smooth_gradient,
    smooth_loss,
    standardize,
)
from synthetic import dataset_from_arrays, load_synthetic


def _model(weights, intercept):
    weights = np.asarray(weights, dtype=float)
    return LogisticModel(weights=weights, intercept=intercept, means=np.zeros(weights.size),
                         scales=np.ones(weights.size), C=1.0, converged=True)


def test_closed_form_probabilities():
    print("=== Testing logistic probabilities ===")
    assert np.allclose(predict_proba_logistic(_model([0.0, 0.0], 0.0), [1.0, -2.0]), (0.5, 0.5))
    proba = predict_proba_logistic(_model([0.0], math.log(3.0)), [5.0])
    assert abs(proba[1] - 0.75) < 1e-12
    batch = predict_proba_logistic(_model([1.0, -1.0], 0.2), np.array([[0.0, 0.0], [1.0, 3.0]]))
    assert batch.shape == (2, 2) and np.allclose(batch.sum(axis=1), 1.0)
    try:
        predict_proba_logistic(_model([1.0], 0.0), [np.inf])
        raise AssertionError("Expected PredictionError for non-finite input")
    except PredictionError:
        pass
    print("✓ Zero weights give 0.5, intercept ln 3 gives 0.75")


def test_gradient_matches_finite_differences():
    print("=== Testing the smooth-term gradient ===")
    rng = np.random.default_rng(10)
    Xs = rng.normal(size=(10, 4))
    ys = np.where(rng.random(10) < 0.5, -1.0, 1.0)
    w = rng.normal(size=4)
    b = 0.3
    C = 0.7
    grad_w, grad_b = smooth_gradient(w, b, Xs, ys, C)
    step = 1e-5
    for j in range(4):
        e = np.zeros(4)
        e[j] = step
        numeric = (smooth_loss(w + e, b, Xs, ys, C) - smooth_loss(w - e, b, Xs, ys, C)) / (2 * step)
        assert abs(numeric - grad_w[j]) <= 1e-5
    numeric_b = (smooth_loss(w, b + step, Xs, ys, C) - smooth_loss(w, b - step, Xs, ys, C)) / (2 * step)
    assert abs(numeric_b - grad_b) <= 1e-5
    print("✓ Analytic gradient within 1e-5 of central differences")


def test_vanishing_penalty_weight():
    print("=== Testing the C → 0 limit ===")
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 3))
    y = np.array([1] * 30 + [0] * 10)
    model = fit_logistic_l1(dataset_from_arrays(X, y), C=1e-9)
    assert np.all(model.weights == 0.0)
    assert abs(model.intercept - math.log(30 / 10)) < 1e-9
    print("✓ All weights zero, intercept ln(n₁/n₀)")


def test_label_symmetric_data():
    print("=== Testing label-symmetric data ===")
    X = np.array([[0.0, 1.0], [0.0, 1.0], [2.0, -1.0], [2.0, -1.0], [5.0, 3.0], [5.0, 3.0]])
    y = np.array([0, 1, 0, 1, 0, 1])
    model = fit_logistic_l1(dataset_from_arrays(X, y), C=1.0)
    assert np.all(model.weights == 0.0)
    assert abs(model.intercept) < 1e-12
    print("✓ Every x with both labels gives zero weights and intercept")


def test_constant_column_and_standardisation():
    print("=== Testing standardisation ===")
    X = np.array([[1.0, 4.0], [3.0, 4.0], [5.0, 4.0], [7.0, 4.0]])
    Xs, means, scales = standardize(X)
    assert np.allclose(means, [4.0, 4.0])
    assert np.allclose(scales, [np.std(X[:, 0]), 1.0])
    assert np.allclose(Xs[:, 1], 0.0)

    rng = np.random.default_rng(6)
    X = np.column_stack([rng.normal(size=60), np.full(60, 2.5)])
    y = (X[:, 0] > 0).astype(int)
    model = fit_logistic_l1(dataset_from_arrays(X, y), C=1.0)
    assert model.weights[1] == 0.0
    assert model.weights[0] > 0.0
    print("✓ Constant columns get scale 1 and weight exactly 0")


def test_synthetic_fit_optimality():
    print("=== Testing the fitted optimum ===")
    with tempfile.TemporaryDirectory() as temp_dir:
        d = load_synthetic(temp_dir, n=200, seed=12)
    model = fit_logistic_l1(d, C=1.0, tol=1e-9, max_iter=20000)
    assert model.converged
    history = np.array(model.objective_history)
    assert np.all(np.diff(history) <= 1e-12)
    assert int(np.argmax(np.abs(model.weights))) == d.schema.feature_index("Age")

    Xs = (d.features - model.means) / model.scales
    ys = np.where(d.labels == 1, 1.0, -1.0)
    grad_w, grad_b = smooth_gradient(model.weights, model.intercept, Xs, ys, model.C)
    assert abs(grad_b) < 1e-3
    for j, w in enumerate(model.weights):
        if w != 0.0:
            assert abs(grad_w[j] + np.sign(w)) < 1e-3
        else:
            assert abs(grad_w[j]) <= 1.0 + 1e-3

    z = decision_function(model, d.features)
    assert z.shape == (d.row_count,)
    restored = LogisticModel.from_dict(model.to_dict())
    assert np.allclose(decision_function(restored, d.features), z)
    print(f"✓ Converged in {model.n_iter} iterations with subgradient optimality")


def test_non_convergence_is_flagged():
    print("=== Testing non-convergence ===")
    with tempfile.TemporaryDirectory() as temp_dir:
        d = load_synthetic(temp_dir, n=100, seed=13)
    model = fit_logistic_l1(d, C=10.0, tol=1e-12, max_iter=2)
    assert not model.converged
    assert model.n_iter == 2
    try:
        fit_logistic_l1(d, C=0.0)
        raise AssertionError("Expected FitError for C = 0")
    except FitError:
        pass
    print("✓ Hitting max_iter returns a flagged model, C must be positive")


def test_rejected_steps_do_not_count_as_convergence():
    print("=== Testing steps that raise the objective ===")
    with tempfile.TemporaryDirectory() as temp_dir:
        d = load_synthetic(temp_dir, n=60, seed=14)
    # every proposal evaluates higher than the starting value
    with patch("src.linear.objective", side_effect=(float(v) for v in itertools.count())):
        model = fit_logistic_l1(d, C=1.0, tol=1e-3, max_iter=5)
    assert not model.converged
    assert model.n_iter == 5
    assert np.all(model.weights == 0.0)
    assert model.objective_history == (0.0,) * 6
    print("✓ A rejected step keeps the old iterate and leaves the fit unconverged")


def main():
    """Run all logistic regression tests."""
    tests = [
        test_closed_form_probabilities,
        test_gradient_matches_finite_differences,
        test_vanishing_penalty_weight,
        test_label_symmetric_data,
        test_constant_column_and_standardisation,
        test_synthetic_fit_optimality,
        test_non_convergence_is_flagged,
        test_rejected_steps_do_not_count_as_convergence,
    ]
    failed = 0
    for test in tests:
        try:
            test()
        except Exception as e:
            failed += 1
            print(f"✗ {test.__name__} failed: {e}")

    if failed == 0:
        print("\n🎉 All logistic regression tests passed!")
        sys.exit(0)
    print(f"\n❌ {failed} logistic regression test(s) failed!")
    sys.exit(1)


if __name__ == '__main__':
    main()
