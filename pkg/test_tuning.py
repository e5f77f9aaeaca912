#!/usr/bin/env python3
"""
Tests for stratified k-fold assignment and the exhaustive grid search.
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np
from hypothesis import given, settings, strategies as st

# Add the repository root to the path so `src` imports resolve
sys.path.insert(0, str(Path(__file__).parent))

from src.ensemble import predict_proba
from src.errors import ConfigError, DataIOError, SearchError, StratificationError
from src.families import REPORTED_PARAMS
from src.tuning import CandidateResult, CVResult, ParamGrid, grid_search, load_grid, stratified_kfold
from synthetic import dataset_from_arrays


def _xor_dataset():
    # unequal cell sizes so the first split has a nonzero gain
    cells = [((0, 0), 0, 30), ((0, 1), 1, 20), ((1, 0), 1, 20), ((1, 1), 0, 10)]
    X = np.array([x for x, _, count in cells for _ in range(count)], dtype=float)
    y = np.array([label for _, label, count in cells for _ in range(count)])
    return dataset_from_arrays(X, y)


def test_ten_rows_five_folds():
    print("=== Testing 5 folds on 10 rows ===")
    labels = np.array([0] * 5 + [1] * 5)
    folds = stratified_kfold(labels, 5, seed=3)
    for fold in range(5):
        members = labels[folds == fold]
        assert sorted(members.tolist()) == [0, 1]
    assert np.array_equal(folds, stratified_kfold(labels, 5, seed=3))

    small = stratified_kfold(np.array([0, 0, 0, 1, 1, 1]), 2, seed=0)
    for fold in range(2):
        assert set(np.array([0, 0, 0, 1, 1, 1])[small == fold]) == {0, 1}

    try:
        stratified_kfold(np.array([0, 0, 0, 1, 1]), 3, seed=0)
        raise AssertionError("Expected StratificationError")
    except StratificationError:
        pass
    print("✓ One row of each class per fold, reproducible, small classes rejected")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=1), min_size=10, max_size=120),
       st.integers(min_value=2, max_value=5),
       st.integers(min_value=0, max_value=10 ** 6))
def test_fold_balance_property(labels, k, seed):
    """Per class and overall, fold sizes differ by at most one."""
    labels = np.array(labels)
    present = [label for label in (0, 1) if np.any(labels == label)]
    if min(int(np.sum(labels == label)) for label in present) < k:
        try:
            stratified_kfold(labels, k, seed)
        except StratificationError:
            return
        raise AssertionError("Expected StratificationError")
    folds = stratified_kfold(labels, k, seed)
    assert set(np.unique(folds)) == set(range(k))
    sizes = np.bincount(folds, minlength=k)
    assert sizes.max() - sizes.min() <= 1
    for label in present:
        per_class = np.bincount(folds[labels == label], minlength=k)
        assert per_class.max() - per_class.min() <= 1


def test_grid_enumeration_and_validation():
    print("=== Testing parameter grids ===")
    grid = ParamGrid(family="xgb", axes=(("max_depth", (1, 2)), ("reg_alpha", (0, 1))))
    assert grid.size == 4
    assert grid.candidates() == [
        {"max_depth": 1, "reg_alpha": 0},
        {"max_depth": 1, "reg_alpha": 1},
        {"max_depth": 2, "reg_alpha": 0},
        {"max_depth": 2, "reg_alpha": 1},
    ]
    for axes in ((("depth", (1,)),), (("max_depth", ()),), ()):
        try:
            ParamGrid(family="xgb", axes=axes)
            raise AssertionError(f"Expected ConfigError for {axes}")
        except ConfigError:
            pass

    with tempfile.TemporaryDirectory() as temp_dir:
        path = Path(temp_dir) / "grid.json"
        path.write_text(json.dumps({"family": "ab", "axes": {"n_estimators": [10, 20]}}), encoding="utf-8")
        loaded = load_grid(path)
        assert loaded.family == "adaboost"
        assert loaded.candidates() == [{"n_estimators": 10}, {"n_estimators": 20}]
        try:
            load_grid(Path(temp_dir) / "absent.json")
            raise AssertionError("Expected DataIOError")
        except DataIOError:
            pass
    print("✓ First axis varies slowest; bad axes rejected")


def test_xor_needs_depth_two():
    print("=== Testing the XOR interaction ===")
    d = _xor_dataset()
    grid = ParamGrid(family="xgb", axes=(("max_depth", (1, 2)), ("reg_alpha", (0.0,)), ("min_child_weight", (0.0,))))
    result = grid_search(d, grid, k=5, seed=0)
    depth_one, depth_two = result.candidates
    assert result.best_params["max_depth"] == 2
    assert depth_two.mean == 1.0
    assert depth_one.mean < 1.0
    assert result.model.params["max_depth"] == 2
    assert len(depth_two.fold_scores) == 5
    print(f"✓ Depth 2 wins ({depth_two.mean:.3f} vs {depth_one.mean:.3f})")


def test_ties_go_to_the_first_candidate():
    print("=== Testing tie breaking ===")
    X = np.arange(20.0).reshape(-1, 1)
    d = dataset_from_arrays(X, (X[:, 0] >= 10).astype(int))
    grid = ParamGrid(family="adaboost", axes=(("n_estimators", (1, 5)),))
    result = grid_search(d, grid, k=5, seed=1)
    assert [c.mean for c in result.candidates] == [1.0, 1.0]
    assert result.best_index == 0
    assert result.best_params == {"n_estimators": 1}

    one_point = grid_search(d, ParamGrid(family="adaboost", axes=(("n_estimators", (3,)),)), k=2, seed=1)
    assert one_point.best_index == 0 and one_point.model is not None
    print("✓ Equal means keep the earliest candidate; one-point grids refit")


def test_failing_candidates():
    print("=== Testing failed candidates ===")
    d = dataset_from_arrays(np.ones((20, 1)), [0, 1] * 10)
    grid = ParamGrid(family="adaboost", axes=(("n_estimators", (5, 10)),))
    try:
        grid_search(d, grid, k=5, seed=0)
        raise AssertionError("Expected SearchError")
    except SearchError:
        pass

    failed = CandidateResult(params={"n_estimators": 5}, fold_scores=(), mean=float("nan"),
                             std=float("nan"), error="DegenerateModelError: no stump")
    payload = failed.to_dict()
    assert failed.failed
    assert payload["mean"] is None and payload["std"] is None
    assert payload["error"].startswith("DegenerateModelError")
    print("✓ Every candidate failing raises SearchError; failures serialise without NaN")


def test_extra_candidates_and_reported_comparison():
    print("=== Testing the reported-winner candidate ===")
    X = np.arange(30.0).reshape(-1, 1)
    d = dataset_from_arrays(X, (X[:, 0] >= 12).astype(int))
    grid = ParamGrid(family="adaboost", axes=(("n_estimators", (20,)), ("learning_rate", (0.5,))))
    extra = {"n_estimators": 50, "learning_rate": 1}
    result = grid_search(d, grid, k=3, seed=2, extra_candidates=[extra])
    assert len(result.candidates) == 2
    assert result.candidates[1].params == extra

    winner = CVResult(family="adaboost", candidates=(CandidateResult(dict(REPORTED_PARAMS["adaboost"]), (1.0,), 1.0, 0.0),),
                      best_index=0, folds=5, seed=42)
    comparison = winner.reported_comparison()
    assert comparison["recovered"]
    payload = winner.to_dict()
    assert payload["scoring"] == "accuracy" and payload["stratified"] is True
    print("✓ Extra candidates are appended; the reported winner is recognised")


def test_grid_search_independent_of_workers():
    print("=== Testing grid search with 1 and 2 workers ===")
    rng = np.random.default_rng(21)
    X = rng.normal(size=(90, 4))
    y = ((X[:, 0] + 0.5 * X[:, 1] + 0.4 * rng.normal(size=90)) > 0).astype(int)
    d = dataset_from_arrays(X, y)
    grid = ParamGrid(family="rf", axes=(("n_estimators", (5,)), ("max_depth", (2, 4))))
    serial = grid_search(d, grid, k=3, seed=4, n_jobs=1)
    parallel = grid_search(d, grid, k=3, seed=4, n_jobs=2)
    assert [c.fold_scores for c in serial.candidates] == [c.fold_scores for c in parallel.candidates]
    assert serial.best_index == parallel.best_index
    assert np.array_equal(predict_proba(serial.model, d.features), predict_proba(parallel.model, d.features))
    print("✓ Fold scores, winner and refit model match")


def main():
    """Run all tuning tests."""
    tests = [
        test_ten_rows_five_folds,
        test_fold_balance_property,
        test_grid_enumeration_and_validation,
        test_xor_needs_depth_two,
        test_ties_go_to_the_first_candidate,
        test_failing_candidates,
        test_extra_candidates_and_reported_comparison,
        test_grid_search_independent_of_workers,
    ]
    failed = 0
    for test in tests:
        try:
            test()
        except Exception as e:
            failed += 1
            print(f"✗ {test.__name__} failed: {e}")

    if failed == 0:
        print("\n🎉 All tuning tests passed!")
        sys.exit(0)
    print(f"\n❌ {failed} tuning test(s) failed!")
    sys.exit(1)


if __name__ == '__main__':
    main()
